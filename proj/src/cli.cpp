#include "fribble/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>

#include "CLI11.hpp"

#include "fribble/binary_io.hpp"
#include "fribble/harness.hpp"

namespace fribble::cli {
namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  fs::create_directories(path.parent_path());
  io::write_text(path, j.dump(1) + "\n");
}

nlohmann::json read_json(const fs::path& path) {
  if (!fs::exists(path)) throw std::runtime_error("missing input " + path.string());
  return nlohmann::json::parse(io::read_text(path));
}

void write_run(const RunConfig& cfg) { write_json(cfg.command_dir() / "run.json", cfg.to_json()); }

struct Inputs {
  Grammar grammar;
  PartLibrary lib;
  HandModel hand;
};

Inputs load_inputs(const RunConfig& cfg) {
  Grammar g = Grammar::load(cfg.grammar);
  PartLibrary lib = PartLibrary::load(cfg.parts);
  lib.check_covers(g);
  return {std::move(g), std::move(lib), HandModel::load(cfg.hand)};
}

fs::path train_dir(const RunConfig& cfg) { return fs::path(cfg.out) / "train"; }

std::vector<std::vector<std::string>> read_prototypes(const RunConfig& cfg) {
  const auto models = read_json(train_dir(cfg) / "models.json");
  std::vector<std::vector<std::string>> out;
  for (const auto& m : models.at("categories")) {
    out.push_back(m.at("prototype").get<std::vector<std::string>>());
  }
  if (out.size() != kCategoryCount) throw std::runtime_error("models.json must hold 4 categories");
  return out;
}

TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig tc;
  tc.modality = modality_from_string(cfg.modality);
  tc.chain.iterations = cfg.iterations;
  tc.chain.burn_in = cfg.burn_in;
  tc.chain.max_depth = cfg.max_depth;
  tc.chain.seed = cfg.seed;
  tc.chain.mode = acceptance_mode_from_string(cfg.mode);
  tc.sharpness = cfg.sharpness;
  tc.rule = prototype_rule_from_string(cfg.rule);
  return tc;
}

int cmd_gen_dataset(const RunConfig& cfg, std::ostream& out) {
  const Inputs in = load_inputs(cfg);
  const FribbleDataset d = synthesize_dataset(in.grammar, in.lib, in.hand, cfg.seed);
  export_dataset(d, fs::path(cfg.out) / "dataset");
  write_run(cfg);
  out << "dataset " << cfg.dataset_dir().string() << ": " << d.objects.size() << " objects, "
      << d.split(true).size() << " train / " << d.split(false).size() << " test\n";
  for (std::size_t c = 0; c < d.prototypes.size(); ++c) {
    out << "  cat" << c + 1 << " prototype:";
    for (const auto& p : d.prototypes[c]) out << ' ' << p;
    out << '\n';
  }
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  const Inputs in = load_inputs(cfg);
  const FribbleDataset d = load_dataset(cfg.dataset_dir(), in.grammar, in.lib);
  const ViewBank bank(in.lib, in.hand, d.scale);
  const TrainConfig tc = train_config(cfg);
  const auto models = train_all(d, tc, in.grammar, bank, cfg.jobs);

  nlohmann::json cats = nlohmann::json::array();
  for (const auto& m : models) {
    const fs::path dir = train_dir(cfg) / ("cat" + std::to_string(m.category));
    fs::create_directories(dir);
    write_json(dir / "summary.json", m.summary.to_json(tc.rule));
    nlohmann::json chains = nlohmann::json::array();
    for (const auto& c : m.chains) {
      io::write_text(dir / ("trace_ex" + std::to_string(c.exemplar) + ".csv"), trace_csv(c.trace));
      chains.push_back({{"exemplar", c.exemplar},
                        {"seed", c.seed},
                        {"acceptance_rate", c.acceptance_rate},
                        {"max_cache_drift", c.max_cache_drift}});
    }
    cats.push_back({{"category", m.category},
                    {"prototype", m.prototype_parts},
                    {"map_id", m.summary.map_id(tc.rule)},
                    {"samples", m.summary.total()},
                    {"distinct", m.summary.entries().size()},
                    {"chains", chains}});
    out << "cat" << m.category << " prototype:";
    for (const auto& p : m.prototype_parts) out << ' ' << p;
    out << '\n';
  }
  write_json(train_dir(cfg) / "models.json", {{"categories", cats}});
  write_run(cfg);
  return kExitOk;
}

int cmd_sample(const RunConfig& cfg, std::ostream& out) {
  const Inputs in = load_inputs(cfg);
  Rng rng(derive_seed(cfg.seed, 11));
  for (int c = 1; c <= kCategoryCount; ++c) {
    const fs::path src = train_dir(cfg) / ("cat" + std::to_string(c)) / "summary.json";
    const PosteriorSummary s = PosteriorSummary::from_json(read_json(src), in.grammar);
    if (s.empty()) throw std::runtime_error(src.string() + " holds no samples");
    std::vector<const SummaryEntry*> entries;
    std::vector<double> weights;
    for (const auto& [id, e] : s.entries()) {
      entries.push_back(&e);
      weights.push_back(static_cast<double>(e.visits));
    }
    const fs::path dir = cfg.command_dir() / ("cat" + std::to_string(c));
    fs::create_directories(dir);
    for (int i = 0; i < cfg.count; ++i) {
      const SummaryEntry& e = *entries[rng.categorical(weights)];
      const VoxelObject o = realize(e.yield, in.lib, kDatasetScale);
      const std::string stem = "sample" + std::to_string(i);
      write_voxels(o, dir / (stem + ".voxels"));
      write_pgm(project(o, {}), dir / (stem + ".pgm"));
      write_json(dir / (stem + ".json"),
                 {{"derivation", canonical_id(e.derivation)}, {"parts", e.yield}});
    }
    out << "cat" << c << ": " << cfg.count << " samples from " << s.entries().size()
        << " distinct derivations\n";
  }
  write_run(cfg);
  return kExitOk;
}

int cmd_categorize(const RunConfig& cfg, std::ostream& out) {
  const Inputs in = load_inputs(cfg);
  const FribbleDataset d = load_dataset(cfg.dataset_dir(), in.grammar, in.lib);
  const ViewBank bank(in.lib, in.hand, d.scale);
  const auto prototypes = read_prototypes(cfg);
  const CategorizationResults r = categorize_all(d, prototypes, in.lib, bank, cfg.seed);
  write_json(cfg.command_dir() / "results.json", results_to_json(r));
  write_run(cfg);
  out << "haptic " << r.haptic_matrix.correct() << "/" << r.haptic_matrix.total() << " ("
      << fixed(100.0 * r.haptic_matrix.accuracy(), 1) << "%)\n";
  out << "vision " << r.vision_matrix.correct() << "/" << r.vision_matrix.total() << " ("
      << fixed(100.0 * r.vision_matrix.accuracy(), 1) << "%)\n";
  return kExitOk;
}

int cmd_report(const RunConfig& cfg, std::ostream& out) {
  const Inputs in = load_inputs(cfg);
  const fs::path results = fs::path(cfg.out) / "categorize" / "results.json";
  const CategorizationResults r =
      fs::exists(results) ? results_from_json(read_json(results)) : CategorizationResults{};
  std::vector<std::vector<std::string>> prototypes;
  if (fs::exists(train_dir(cfg) / "models.json")) prototypes = read_prototypes(cfg);
  const fs::path dir = cfg.command_dir();
  emit_report(r, prototypes, in.lib, kDatasetScale, dir);

  // Per-category trace data: log posterior of every recorded sample.
  for (int c = 1; c <= kCategoryCount; ++c) {
    const fs::path src = train_dir(cfg) / ("cat" + std::to_string(c));
    if (!fs::exists(src)) continue;
    std::vector<fs::path> traces;
    for (const auto& f : fs::directory_iterator(src)) {
      if (f.path().extension() == ".csv") traces.push_back(f.path());
    }
    std::sort(traces.begin(), traces.end());
    std::string csv = "chain,iteration,log_posterior\n";
    for (const auto& t : traces) {
      std::ifstream in_file(t);
      std::string line;
      std::getline(in_file, line);
      while (std::getline(in_file, line)) {
        std::vector<std::string> cols;
        std::size_t start = 0;
        for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos; start = pos + 1) {
          cols.push_back(line.substr(start, pos - start));
        }
        cols.push_back(line.substr(start));
        if (cols.size() != 5) throw std::runtime_error("malformed trace row in " + t.string());
        const double lp = std::stod(cols[2]) + std::stod(cols[3]);
        csv += t.stem().string() + "," + cols[0] + "," + fmt(lp) + "\n";
      }
    }
    fs::create_directories(dir / "traces");
    io::write_text(dir / "traces" / ("cat" + std::to_string(c) + ".csv"), csv);
  }
  write_run(cfg);
  out << "report written to " << dir.string() << "\n";
  out << "haptic accuracy " << r.haptic_matrix.correct() << "/" << r.haptic_matrix.total()
      << ", vision accuracy " << r.vision_matrix.correct() << "/" << r.vision_matrix.total() << "\n";
  return kExitOk;
}

int cmd_oracle_check(const RunConfig& cfg, std::ostream& out) {
  const Grammar g = Grammar::load(cfg.grammar);
  std::map<std::string, double> table;
  if (!cfg.likelihoods.empty()) {
    const auto j = read_json(cfg.likelihoods);
    for (const auto& [k, v] : j.items()) table[k] = v.get<double>();
  }
  const TableLikelihood model(g, table);
  const auto exact = enumerate_posterior(g, model, cfg.max_depth);
  ChainConfig cc;
  cc.iterations = cfg.iterations;
  cc.burn_in = cfg.burn_in;
  cc.max_depth = cfg.max_depth;
  cc.seed = cfg.seed;
  cc.mode = acceptance_mode_from_string(cfg.mode);
  cc.record_trace = false;
  const ChainResult r = run_chain(g, model, cc);
  const double tv = total_variation(r.summary, exact);
  const bool pass = tv < 0.05;
  write_json(cfg.command_dir() / "result.json", {{"total_variation", tv},
                                                 {"derivations", exact.size()},
                                                 {"acceptance_rate", r.state.acceptance_rate()},
                                                 {"pass", pass}});
  write_run(cfg);
  out << "derivations " << exact.size() << "\n";
  out << "total variation " << fixed(tv, 6) << (pass ? " < 0.05 (ok)\n" : " >= 0.05 (FAIL)\n");
  return pass ? kExitOk : kExitRuntime;
}

// Pulls "--config FILE" / "--config=FILE" out of argv ahead of parsing.
std::string find_config(int argc, const char* const* argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) return argv[i + 1];
    if (a.rfind("--config=", 0) == 0) return a.substr(9);
  }
  return {};
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
  return {{"command", command},   {"grammar", grammar},       {"parts", parts},
          {"hand", hand},         {"seed", seed},             {"iterations", iterations},
          {"burn_in", burn_in},   {"modality", modality},     {"mode", mode},
          {"out", out},           {"jobs", jobs},             {"sharpness", sharpness},
          {"rule", rule},         {"max_depth", max_depth},   {"count", count},
          {"likelihoods", likelihoods}};
}

void RunConfig::merge_json(const nlohmann::json& j) {
  auto take = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  take("command", command);
  take("grammar", grammar);
  take("parts", parts);
  take("hand", hand);
  take("seed", seed);
  take("iterations", iterations);
  take("burn_in", burn_in);
  take("modality", modality);
  take("mode", mode);
  take("out", out);
  take("jobs", jobs);
  take("sharpness", sharpness);
  take("rule", rule);
  take("max_depth", max_depth);
  take("count", count);
  take("likelihoods", likelihoods);
}

void RunConfig::validate() const {
  if (iterations <= 0 || burn_in <= 0) {
    throw std::invalid_argument("--iterations and --burn-in must be positive");
  }
  if (iterations <= burn_in) {
    throw std::invalid_argument("--iterations (" + std::to_string(iterations) +
                                ") must exceed --burn-in (" + std::to_string(burn_in) + ")");
  }
  if (jobs < 1) throw std::invalid_argument("--jobs must be at least 1");
  if (!(sharpness > 0.0)) throw std::invalid_argument("--sharpness must be positive");
  if (max_depth < 1) throw std::invalid_argument("--max-depth must be at least 1");
  if (count < 1) throw std::invalid_argument("--count must be at least 1");
  modality_from_string(modality);
  acceptance_mode_from_string(mode);
  prototype_rule_from_string(rule);
  std::vector<std::string> files = {grammar};
  if (command != "oracle-check") {
    files.push_back(parts);
    files.push_back(hand);
  } else if (!likelihoods.empty()) {
    files.push_back(likelihoods);
  }
  for (const auto& f : files) {
    if (!fs::is_regular_file(f)) throw std::invalid_argument("no such file: " + f);
  }
}

fs::path RunConfig::dataset_dir() const { return fs::path(out) / "dataset" / std::to_string(seed); }

fs::path RunConfig::command_dir() const {
  if (command == "gen-dataset") return dataset_dir();
  if (command == "oracle-check") return fs::path(out) / "oracle";
  return fs::path(out) / command;
}

fs::path default_data_path(const std::string& file) {
#ifdef FRIBBLE_DATA_DIR
  return fs::path(FRIBBLE_DATA_DIR) / file;
#else
  return fs::path("data") / file;
#endif
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig base;
  base.grammar = default_data_path("fribble.grammar").string();
  base.parts = default_data_path("parts47.json").string();
  base.hand = default_data_path("hand16.json").string();

  const std::string config_path = find_config(argc, argv);
  nlohmann::json config_json;
  if (!config_path.empty()) {
    try {
      config_json = nlohmann::json::parse(io::read_text(config_path));
      base.merge_json(config_json);
    } catch (const std::exception& e) {
      err << "error: cannot read config " << config_path << ": " << e.what() << "\n";
      return kExitUsage;
    }
  }

  CLI::App app{"Bayesian grammar-based learning of multipart object categories"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen-dataset", "Synthesize the 4 x 10 fribble dataset"},
      {"train", "Run the MCMC chains of every category on its training exemplars"},
      {"sample", "Draw fantasy fribbles from the trained posterior summaries"},
      {"categorize", "Classify the held-out fribbles by haptic and visual prototype match"},
      {"oracle-check", "Compare a sampled toy-grammar posterior with exact enumeration"},
      {"report", "Write confusion matrices, accuracies, prototype images and trace data"}};

  std::map<std::string, std::unique_ptr<RunConfig>> configs;
  std::string config_dummy;
  for (const auto& [name, help] : commands) {
    auto cfg = std::make_unique<RunConfig>(base);
    cfg->command = name;
    if (name == "oracle-check" && !config_json.contains("iterations")) {
      cfg->iterations = 50000;
      cfg->burn_in = 5000;
    }
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_dummy, "Replay a run.json (explicit flags win)");
    sub->add_option("--grammar", cfg->grammar, "Grammar file")->capture_default_str();
    sub->add_option("--seed", cfg->seed, "Seed for all randomness")->capture_default_str();
    sub->add_option("--iterations", cfg->iterations, "MCMC iterations per chain")->capture_default_str();
    sub->add_option("--burn-in", cfg->burn_in, "Discarded initial iterations")->capture_default_str();
    sub->add_option("--mode", cfg->mode, "Acceptance rule: paper or full")->capture_default_str();
    sub->add_option("--out", cfg->out, "Output root directory")->capture_default_str();
    sub->add_option("--max-depth", cfg->max_depth, "Derivation depth cap")->capture_default_str();
    if (name == "oracle-check") {
      sub->add_option("--likelihoods", cfg->likelihoods,
                      "JSON object mapping space-joined yields to likelihoods (default: all 1)");
    } else {
      sub->add_option("--parts", cfg->parts, "Part library JSON")->capture_default_str();
      sub->add_option("--hand", cfg->hand, "Hand model JSON")->capture_default_str();
      sub->add_option("--modality", cfg->modality, "Training modality: vision, haptic or both")
          ->capture_default_str();
      sub->add_option("--jobs", cfg->jobs, "Categories trained concurrently")->capture_default_str();
      sub->add_option("--sharpness", cfg->sharpness, "Likelihood exponent")->capture_default_str();
      sub->add_option("--rule", cfg->rule, "Prototype rule: max-posterior or most-visited")
          ->capture_default_str();
    }
    if (name == "sample") {
      sub->add_option("--count", cfg->count, "Samples per category")->capture_default_str();
    }
    configs.emplace(name, std::move(cfg));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  const CLI::App* chosen = app.get_subcommands().front();
  RunConfig& cfg = *configs.at(chosen->get_name());
  if (config_json.contains("command") && config_json.at("command") != cfg.command) {
    err << "error: " << config_path << " records command '"
        << config_json.at("command").get<std::string>() << "', not '" << cfg.command << "'\n";
    return kExitUsage;
  }
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (cfg.command == "gen-dataset") return cmd_gen_dataset(cfg, out);
    if (cfg.command == "train") return cmd_train(cfg, out);
    if (cfg.command == "sample") return cmd_sample(cfg, out);
    if (cfg.command == "categorize") return cmd_categorize(cfg, out);
    if (cfg.command == "report") return cmd_report(cfg, out);
    if (cfg.command == "oracle-check") return cmd_oracle_check(cfg, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace fribble::cli
