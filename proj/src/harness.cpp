#include "fribble/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <set>
#include <thread>

#include "fribble/binary_io.hpp"

namespace fribble {
namespace {

namespace fs = std::filesystem;

int production_with_rhs(const Grammar& g, SymbolId lhs, const std::vector<SymbolId>& rhs) {
  for (int p : g.alternatives(lhs)) {
    if (g.production(p).rhs == rhs) return p;
  }
  throw DatasetError("grammar has no production " + g.symbol(lhs).name + " -> (" +
                     std::to_string(rhs.size()) + " symbols) needed for slot derivations");
}

std::string category_dir(int c) { return "cat" + std::to_string(c); }
std::string exemplar_stem(int j) { return "ex" + std::to_string(j); }

}  // namespace

const HogDescriptor& FribbleObject::canonical_view() const {
  return views.at(static_cast<std::size_t>(canonical_view_index()));
}

std::vector<const FribbleObject*> FribbleDataset::split(bool train) const {
  std::vector<const FribbleObject*> out;
  for (const auto& o : objects) {
    if (o.train == train) out.push_back(&o);
  }
  return out;
}

std::vector<const FribbleObject*> FribbleDataset::category(int c, bool train) const {
  std::vector<const FribbleObject*> out;
  for (const auto& o : objects) {
    if (o.category == c && o.train == train) out.push_back(&o);
  }
  return out;
}

int canonical_view_index() {
  const auto& grid = viewpoint_grid();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i].heading == 0.0 && grid[i].pitch == 0.0) return static_cast<int>(i);
  }
  throw std::logic_error("viewpoint grid lacks the identity view");
}

std::vector<SymbolId> slots(const Grammar& g) { return g.symbols_of_kind(SymbolKind::kPreterminal); }

Derivation slot_derivation(const Grammar& g, const PartLibrary& lib,
                           const std::vector<std::string>& slot_parts) {
  const auto slot_ids = slots(g);
  if (slot_parts.size() != slot_ids.size()) {
    throw DatasetError("expected one part per slot (" + std::to_string(slot_ids.size()) + ")");
  }
  const SymbolId trunk = g.id(lib.trunk());
  const SymbolId n = g.id("N");
  const SymbolId m = g.id("M");

  DerivationNode root{g.start(), production_with_rhs(g, g.start(), {n, trunk}), {}};
  DerivationNode body{n, production_with_rhs(g, n, std::vector<SymbolId>(slot_ids.size(), m)), {}};
  for (std::size_t i = 0; i < slot_ids.size(); ++i) {
    const SymbolId part = g.id(slot_parts[i]);
    DerivationNode leaf{part, -1, {}};
    DerivationNode slot{slot_ids[i], production_with_rhs(g, slot_ids[i], {part}), {leaf}};
    body.children.push_back(
        DerivationNode{m, production_with_rhs(g, m, {slot_ids[i]}), {std::move(slot)}});
  }
  root.children.push_back(std::move(body));
  root.children.push_back(DerivationNode{trunk, -1, {}});
  Derivation d{std::move(root)};
  validate(d, g);
  return d;
}

FribbleDataset synthesize_dataset(const Grammar& g, const PartLibrary& lib, const HandModel& hand,
                                  std::uint64_t seed, double scale) {
  lib.check_covers(g);
  const auto slot_ids = slots(g);
  FribbleDataset d;
  d.seed = seed;
  d.scale = scale;
  Rng rng(derive_seed(seed, 1));

  for (int c = 1; c <= kCategoryCount; ++c) {
    const int family = c - 1;
    std::vector<std::vector<std::string>> pools;
    for (SymbolId s : slot_ids) {
      std::vector<std::string> pool;
      for (int p : g.alternatives(s)) {
        const auto& name = g.symbol(g.production(p).rhs.at(0)).name;
        if (lib.at(name).family == family) pool.push_back(name);
      }
      if (pool.size() < 2) {
        throw DatasetError("slot " + g.symbol(s).name + " has fewer than two parts of family " +
                           std::to_string(family) + " for category " + std::to_string(c));
      }
      pools.push_back(std::move(pool));
    }

    std::vector<std::string> proto;
    for (const auto& pool : pools) proto.push_back(pool[rng.index(pool.size())]);
    d.prototypes[static_cast<std::size_t>(c - 1)] = proto;

    std::set<std::vector<std::string>> seen;
    for (int j = 0; j < kExemplarsPerCategory; ++j) {
      std::vector<std::string> parts;
      for (int attempt = 0; attempt < 100; ++attempt) {
        parts = proto;
        const std::size_t swaps = 1 + rng.index(2);
        std::vector<std::size_t> order(pools.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = 0; i < swaps; ++i) {
          std::swap(order[i], order[i + rng.index(order.size() - i)]);
          const std::size_t s = order[i];
          std::vector<std::string> others;
          for (const auto& p : pools[s]) {
            if (p != proto[s]) others.push_back(p);
          }
          parts[s] = others[rng.index(others.size())];
        }
        if (seen.insert(parts).second) break;
      }

      FribbleObject o;
      o.category = c;
      o.exemplar = j;
      o.train = j < kTrainPerCategory;
      o.derivation = slot_derivation(g, lib, parts);
      o.parts = terminal_names(o.derivation, g);
      o.object = realize(o.parts, lib, scale);
      o.grasp = grasp(o.object, hand);
      o.views = view_descriptors(o.object);
      d.objects.push_back(std::move(o));
    }
  }
  return d;
}

void export_dataset(const FribbleDataset& d, const fs::path& root) {
  const fs::path base = root / std::to_string(d.seed);
  fs::create_directories(base);
  nlohmann::json manifest = {{"seed", d.seed}, {"scale", d.scale}};
  nlohmann::json protos = nlohmann::json::array();
  for (const auto& p : d.prototypes) protos.push_back(p);
  manifest["prototypes"] = protos;
  io::write_text(base / "dataset.json", manifest.dump(2) + "\n");
  for (const auto& o : d.objects) {
    const fs::path dir = base / category_dir(o.category);
    fs::create_directories(dir);
    const std::string stem = exemplar_stem(o.exemplar);
    write_voxels(o.object, dir / (stem + ".voxels"));
    write_grasp(o.grasp, dir / (stem + ".grasp"));
    const nlohmann::json meta = {{"category", o.category},
                                 {"exemplar", o.exemplar},
                                 {"split", o.train ? "train" : "test"},
                                 {"parts", o.parts},
                                 {"derivation", canonical_id(o.derivation)}};
    io::write_text(dir / (stem + ".json"), meta.dump(2) + "\n");
  }
}

FribbleDataset load_dataset(const fs::path& dir, const Grammar& g, const PartLibrary& lib) {
  FribbleDataset d;
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_text(dir / "dataset.json"));
    d.seed = manifest.at("seed").get<std::uint64_t>();
    d.scale = manifest.at("scale").get<double>();
    const auto& protos = manifest.at("prototypes");
    if (protos.size() != kCategoryCount) throw DatasetError("dataset must have 4 prototypes");
    for (std::size_t c = 0; c < kCategoryCount; ++c) {
      d.prototypes[c] = protos[c].get<std::vector<std::string>>();
    }
    for (int c = 1; c <= kCategoryCount; ++c) {
      for (int j = 0; j < kExemplarsPerCategory; ++j) {
        const fs::path stem = dir / category_dir(c) / exemplar_stem(j);
        const auto meta = nlohmann::json::parse(io::read_text(fs::path(stem.string() + ".json")));
        FribbleObject o;
        o.category = c;
        o.exemplar = j;
        o.train = meta.at("split").get<std::string>() == "train";
        o.derivation = derivation_from_id(g, meta.at("derivation").get<std::string>());
        o.parts = terminal_names(o.derivation, g);
        o.object = read_voxels(fs::path(stem.string() + ".voxels"));
        if (!(o.object == realize(o.parts, lib, d.scale, o.object.size()))) {
          throw DatasetError(stem.string() + ".voxels does not match its derivation");
        }
        o.grasp = read_grasp(fs::path(stem.string() + ".grasp"));
        o.views = view_descriptors(o.object);
        d.objects.push_back(std::move(o));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError(std::string("malformed dataset metadata: ") + e.what());
  }
  return d;
}

SensoryObservation observe(const FribbleObject& o, Modality m) {
  SensoryObservation obs;
  obs.modality = m;
  if (m != Modality::kHaptic) obs.vision = o.canonical_view();
  if (m != Modality::kVision) obs.haptic = o.grasp;
  return obs;
}

CategoryModel train_category(const FribbleDataset& d, int category, const TrainConfig& config,
                             const Grammar& g, const ViewBank& bank) {
  if (category < 1 || category > kCategoryCount) {
    throw std::invalid_argument("category must be in 1..4");
  }
  CategoryModel model;
  model.category = category;
  for (const FribbleObject* o : d.category(category, true)) {
    const SensoryLikelihood likelihood(g, bank, observe(*o, config.modality), config.sharpness);
    ChainConfig cc = config.chain;
    cc.seed = derive_seed(config.chain.seed, static_cast<std::uint64_t>(100 * category + o->exemplar));
    ChainResult r = run_chain(g, likelihood, cc);
    model.summary.merge(r.summary);
    model.chains.push_back({o->exemplar, cc.seed, r.state.acceptance_rate(),
                            r.state.max_cache_drift, std::move(r.state.trace)});
  }
  if (model.summary.empty()) throw DatasetError("category has no training exemplars");
  model.prototype_parts = model.summary.entries().at(model.summary.map_id(config.rule)).yield;
  return model;
}

std::vector<CategoryModel> train_all(const FribbleDataset& d, const TrainConfig& config,
                                     const Grammar& g, const ViewBank& bank, int jobs) {
  std::vector<CategoryModel> out(kCategoryCount);
  jobs = std::clamp(jobs, 1, kCategoryCount);
  if (jobs == 1) {
    for (int c = 1; c <= kCategoryCount; ++c) out[static_cast<std::size_t>(c - 1)] = train_category(d, c, config, g, bank);
    return out;
  }
  std::atomic<int> next{1};
  std::vector<std::exception_ptr> errors(kCategoryCount);
  std::vector<std::thread> workers;
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (int c = next++; c <= kCategoryCount; c = next++) {
        try {
          out[static_cast<std::size_t>(c - 1)] = train_category(d, c, config, g, bank);
        } catch (...) {
          errors[static_cast<std::size_t>(c - 1)] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

PrototypeViews prototype_views(const std::vector<std::string>& parts, const ViewBank& bank) {
  return {bank.grasps(parts), bank.descriptors(parts)};
}

int categorize_haptic(const GraspVector& test, const std::vector<PrototypeViews>& prototypes) {
  int best = 0;
  double best_score = -1.0;
  for (std::size_t c = 0; c < prototypes.size(); ++c) {
    const double s = haptic_likelihood(test, prototypes[c].grasps);
    if (s > best_score) {
      best_score = s;
      best = static_cast<int>(c) + 1;
    }
  }
  return best;
}

int categorize_haptic(const GraspVector& test, const std::vector<VoxelObject>& prototypes,
                      const HandModel& hand) {
  std::vector<PrototypeViews> views;
  for (const auto& p : prototypes) views.push_back({view_grasps(p, hand), {}});
  return categorize_haptic(test, views);
}

int categorize_vision(const HogDescriptor& test, const std::vector<PrototypeViews>& prototypes) {
  int best = 0;
  double best_score = -1.0;
  for (std::size_t c = 0; c < prototypes.size(); ++c) {
    const double s = vision_likelihood(test, prototypes[c].descriptors);
    if (s > best_score) {
      best_score = s;
      best = static_cast<int>(c) + 1;
    }
  }
  return best;
}

Viewpoint Perturbation::viewpoint() const {
  const Viewpoint& base = viewpoint_grid().at(static_cast<std::size_t>(view));
  return {base.heading + heading_offset, base.pitch + pitch_offset, 0.0};
}

Perturbation draw_perturbation(Rng& rng) {
  Perturbation p;
  p.view = static_cast<int>(rng.index(kViewCount));
  p.heading_offset = rng.uniform(-kMaxAngleOffset, kMaxAngleOffset);
  p.pitch_offset = rng.uniform(-kMaxAngleOffset, kMaxAngleOffset);
  p.scale_factor = rng.uniform(kMinScaleFactor, kMaxScaleFactor);
  return p;
}

HogDescriptor perturbed_view(const std::vector<std::string>& parts, const PartLibrary& lib,
                             double scale, const Perturbation& p) {
  const VoxelObject o = realize(parts, lib, scale * p.scale_factor);
  return hog(project(o, p.viewpoint()));
}

void ConfusionMatrix::add(int truth, int predicted) {
  if (truth < 1 || truth > kCategoryCount || predicted < 1 || predicted > kCategoryCount) {
    throw std::out_of_range("category ids must be in 1..4");
  }
  ++counts[static_cast<std::size_t>(truth - 1)][static_cast<std::size_t>(predicted - 1)];
}

int ConfusionMatrix::total() const {
  int t = 0;
  for (const auto& row : counts) {
    for (int v : row) t += v;
  }
  return t;
}

int ConfusionMatrix::correct() const {
  int t = 0;
  for (std::size_t i = 0; i < kCategoryCount; ++i) t += counts[i][i];
  return t;
}

double ConfusionMatrix::accuracy() const {
  const int t = total();
  return t == 0 ? 0.0 : static_cast<double>(correct()) / t;
}

std::string ConfusionMatrix::to_csv() const {
  std::string out = "true\\predicted";
  for (int c = 1; c <= kCategoryCount; ++c) out += "," + std::to_string(c);
  out += "\n";
  for (int r = 0; r < kCategoryCount; ++r) {
    out += std::to_string(r + 1);
    for (int v : counts[static_cast<std::size_t>(r)]) out += "," + std::to_string(v);
    out += "\n";
  }
  return out;
}

CategorizationResults categorize_all(const FribbleDataset& d,
                                     const std::vector<std::vector<std::string>>& prototypes,
                                     const PartLibrary& lib, const ViewBank& bank,
                                     std::uint64_t seed) {
  if (prototypes.size() != kCategoryCount) throw std::invalid_argument("need 4 prototypes");
  std::vector<PrototypeViews> views;
  for (const auto& p : prototypes) views.push_back(prototype_views(p, bank));
  CategorizationResults r;
  Rng rng(derive_seed(seed, 7));
  for (const FribbleObject* o : d.split(false)) {
    const int h = categorize_haptic(o->grasp, views);
    r.haptic.push_back({o->category, o->exemplar, h, std::nullopt});
    r.haptic_matrix.add(o->category, h);

    const Perturbation p = draw_perturbation(rng);
    const int v = categorize_vision(perturbed_view(o->parts, lib, d.scale, p), views);
    r.vision.push_back({o->category, o->exemplar, v, p});
    r.vision_matrix.add(o->category, v);
  }
  return r;
}

nlohmann::json results_to_json(const CategorizationResults& r) {
  auto preds = [](const std::vector<Prediction>& ps) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& p : ps) {
      nlohmann::json j = {{"category", p.category}, {"exemplar", p.exemplar}, {"predicted", p.predicted}};
      if (p.perturbation) {
        j["perturbation"] = {{"view", p.perturbation->view},
                             {"heading_offset", p.perturbation->heading_offset},
                             {"pitch_offset", p.perturbation->pitch_offset},
                             {"scale_factor", p.perturbation->scale_factor}};
      }
      a.push_back(j);
    }
    return a;
  };
  return {{"haptic", preds(r.haptic)}, {"vision", preds(r.vision)}};
}

CategorizationResults results_from_json(const nlohmann::json& j) {
  CategorizationResults r;
  auto read = [](const nlohmann::json& a, std::vector<Prediction>& out, ConfusionMatrix& m) {
    for (const auto& e : a) {
      Prediction p;
      p.category = e.at("category").get<int>();
      p.exemplar = e.at("exemplar").get<int>();
      p.predicted = e.at("predicted").get<int>();
      if (e.contains("perturbation")) {
        const auto& q = e.at("perturbation");
        p.perturbation = Perturbation{q.at("view").get<int>(), q.at("heading_offset").get<double>(),
                                      q.at("pitch_offset").get<double>(),
                                      q.at("scale_factor").get<double>()};
      }
      m.add(p.category, p.predicted);
      out.push_back(p);
    }
  };
  read(j.at("haptic"), r.haptic, r.haptic_matrix);
  read(j.at("vision"), r.vision, r.vision_matrix);
  return r;
}

void emit_report(const CategorizationResults& results,
                 const std::vector<std::vector<std::string>>& prototypes, const PartLibrary& lib,
                 double scale, const fs::path& dir) {
  fs::create_directories(dir);
  io::write_text(dir / "confusion_haptic.csv", results.haptic_matrix.to_csv());
  io::write_text(dir / "confusion_vision.csv", results.vision_matrix.to_csv());
  auto summary = [](const ConfusionMatrix& m) {
    return nlohmann::json{{"correct", m.correct()}, {"total", m.total()}, {"accuracy", m.accuracy()}};
  };
  const nlohmann::json acc = {{"haptic", summary(results.haptic_matrix)},
                              {"vision", summary(results.vision_matrix)}};
  io::write_text(dir / "accuracy.json", acc.dump(2) + "\n");
  if (!prototypes.empty()) {
    fs::create_directories(dir / "prototypes");
    for (std::size_t c = 0; c < prototypes.size(); ++c) {
      const VoxelObject o = realize(prototypes[c], lib, scale);
      write_pgm(project(o, {}), dir / "prototypes" / (category_dir(static_cast<int>(c) + 1) + ".pgm"));
    }
  }
}

}  // namespace fribble
