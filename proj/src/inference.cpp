#include "fribble/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace fribble {
namespace {

double log_sum_exp(std::span<const double> xs) {
  double hi = kNegInf;
  for (double x : xs) hi = std::max(hi, x);
  if (hi == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - hi);
  return hi + std::log(s);
}

// log tau of a subtree, accumulated in grammar production order so that the
// same subtree always yields the same bits.
double log_tau(const DerivationNode& node, const Grammar& g) {
  const ProductionCounts counts = count_productions(node, g);
  double out = 0.0;
  for (std::size_t s = 0; s < counts.size(); ++s) {
    const auto alts = g.alternatives(static_cast<SymbolId>(s));
    for (std::size_t a = 0; a < counts[s].size(); ++a) {
      if (counts[s][a] > 0) out += counts[s][a] * g.log_probability(alts[a]);
    }
  }
  return out;
}

void collect_paths(const DerivationNode& n, NodePath& path, std::vector<NodePath>& out) {
  if (n.is_terminal()) return;
  out.push_back(path);
  for (std::size_t i = 0; i < n.children.size(); ++i) {
    path.push_back(static_cast<int>(i));
    collect_paths(n.children[i], path, out);
    path.pop_back();
  }
}

// Deepest node containing every difference between a and b; nullopt when
// the trees are identical.
std::optional<NodePath> divergence(const DerivationNode& a, const DerivationNode& b) {
  NodePath path;
  const DerivationNode* x = &a;
  const DerivationNode* y = &b;
  for (;;) {
    if (x->production != y->production || x->symbol != y->symbol) return path;
    int differing = -1, count = 0;
    for (std::size_t i = 0; i < x->children.size(); ++i) {
      if (!(x->children[i] == y->children[i])) {
        differing = static_cast<int>(i);
        ++count;
      }
    }
    if (count == 0) {
      if (path.empty()) return std::nullopt;
      return path;  // unreachable for distinct trees
    }
    if (count > 1) return path;
    path.push_back(differing);
    x = &x->children[static_cast<std::size_t>(differing)];
    y = &y->children[static_cast<std::size_t>(differing)];
  }
}

const DerivationNode& descend(const DerivationNode& root, std::span<const int> path) {
  const DerivationNode* n = &root;
  for (int i : path) n = &n->children.at(static_cast<std::size_t>(i));
  return *n;
}

// log of the probability that regenerating the node at `path` of `tree`
// reproduces exactly that node's subtree: tau restricted to the depth
// budget, times the chance the bounded retries succeed at all.
double log_regen_weight(const DerivationNode& root, std::span<const int> path, const Grammar& g,
                        const CompletionTable& completion) {
  const DerivationNode& n = descend(root, path);
  const int budget = completion.max_depth() - static_cast<int>(path.size());
  const double log_z = completion.log_prob(n.symbol, budget);
  if (log_z == kNegInf) return kNegInf;
  const double z = std::exp(log_z);
  double log_success = 0.0;
  if (z < 1.0) {
    log_success = std::log(-std::expm1(kSampleRetries * std::log1p(-z)));
  }
  return log_tau(n, g) - log_z + log_success;
}

// log sum over candidate paths of the regeneration weight of `tree`.
double log_regen_mass(const Derivation& tree, const std::vector<NodePath>& paths,
                      const Grammar& g, const CompletionTable& completion) {
  std::vector<double> w;
  w.reserve(paths.size());
  for (const auto& p : paths) w.push_back(log_regen_weight(tree.root, p, g, completion));
  return log_sum_exp(w);
}

// Nodes whose regeneration can map a onto b (and back).
std::vector<NodePath> shared_paths(const Derivation& a, const Derivation& b) {
  const auto div = divergence(a.root, b.root);
  if (!div) return nonterminal_paths(a);
  std::vector<NodePath> out;
  for (std::size_t len = 0; len <= div->size(); ++len) {
    out.emplace_back(div->begin(), div->begin() + static_cast<std::ptrdiff_t>(len));
  }
  return out;
}

}  // namespace

std::string to_string(Modality m) {
  switch (m) {
    case Modality::kVision: return "vision";
    case Modality::kHaptic: return "haptic";
    case Modality::kBoth: return "both";
  }
  return "both";
}

Modality modality_from_string(const std::string& s) {
  if (s == "vision") return Modality::kVision;
  if (s == "haptic") return Modality::kHaptic;
  if (s == "both") return Modality::kBoth;
  throw std::invalid_argument("unknown modality '" + s + "' (expected vision, haptic or both)");
}

std::string to_string(AcceptanceMode m) { return m == AcceptanceMode::kPaper ? "paper" : "full"; }

AcceptanceMode acceptance_mode_from_string(const std::string& s) {
  if (s == "paper") return AcceptanceMode::kPaper;
  if (s == "full") return AcceptanceMode::kFull;
  throw std::invalid_argument("unknown acceptance mode '" + s + "' (expected paper or full)");
}

std::string to_string(PrototypeRule r) {
  return r == PrototypeRule::kMaxPosterior ? "max-posterior" : "most-visited";
}

PrototypeRule prototype_rule_from_string(const std::string& s) {
  if (s == "max-posterior") return PrototypeRule::kMaxPosterior;
  if (s == "most-visited") return PrototypeRule::kMostVisited;
  throw std::invalid_argument("unknown prototype rule '" + s + "'");
}

std::string yield_key(const Derivation& d, const Grammar& g) {
  std::string key;
  for (const auto& n : terminal_names(d, g)) {
    if (!key.empty()) key += ' ';
    key += n;
  }
  return key;
}

TableLikelihood::TableLikelihood(const Grammar& g, std::map<std::string, double> table,
                                 double fallback)
    : grammar_(&g), table_(std::move(table)), fallback_(fallback) {
  if (fallback_ < 0.0) throw std::invalid_argument("likelihoods must be nonnegative");
  for (const auto& [k, v] : table_) {
    if (!(v >= 0.0)) throw std::invalid_argument("likelihood for '" + k + "' must be nonnegative");
  }
}

double TableLikelihood::log_likelihood(const Derivation& d) const {
  const auto it = table_.find(yield_key(d, *grammar_));
  return std::log(it == table_.end() ? fallback_ : it->second);
}

void SensoryObservation::validate() const {
  const bool want_vision = modality != Modality::kHaptic;
  const bool want_haptic = modality != Modality::kVision;
  if (want_vision != vision.has_value() || want_haptic != haptic.has_value()) {
    throw std::invalid_argument("observation fields do not match modality '" +
                                to_string(modality) + "'");
  }
}

SensoryLikelihood::SensoryLikelihood(const Grammar& g, const ViewBank& bank,
                                     SensoryObservation obs, double sharpness)
    : grammar_(&g), bank_(&bank), obs_(std::move(obs)), sharpness_(sharpness) {
  obs_.validate();
  if (!(sharpness_ > 0.0)) throw std::invalid_argument("likelihood sharpness must be positive");
}

double SensoryLikelihood::channel_likelihood(Modality channel,
                                             std::span<const std::string> parts) const {
  if (channel == Modality::kVision) return vision_likelihood(*obs_.vision, bank_->descriptors(parts));
  if (channel == Modality::kHaptic) return haptic_likelihood(*obs_.haptic, bank_->grasps(parts));
  throw std::invalid_argument("channel must be vision or haptic");
}

double SensoryLikelihood::uncached_log_likelihood(std::span<const std::string> parts) const {
  double out = 0.0;
  if (obs_.modality != Modality::kHaptic) {
    out += std::log(channel_likelihood(Modality::kVision, parts));
  }
  if (obs_.modality != Modality::kVision) {
    out += std::log(channel_likelihood(Modality::kHaptic, parts));
  }
  return sharpness_ * out;
}

double SensoryLikelihood::log_likelihood(std::span<const std::string> parts) const {
  std::vector<std::string> unique(parts.begin(), parts.end());
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  std::string key;
  for (const auto& n : unique) {
    key += n;
    key += ',';
  }
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  const double v = uncached_log_likelihood(unique);
  cache_.emplace(std::move(key), v);
  return v;
}

double SensoryLikelihood::log_likelihood(const Derivation& d) const {
  const auto names = terminal_names(d, *grammar_);
  return log_likelihood(names);
}

double SensoryLikelihood::recompute_log_likelihood(const Derivation& d) const {
  auto names = terminal_names(d, *grammar_);
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  return uncached_log_likelihood(names);
}

double log_posterior_unnorm(const Derivation& d, const Grammar& g, const LikelihoodModel& model) {
  return joint_prior(d, g).log_value() + model.log_likelihood(d);
}

std::vector<NodePath> nonterminal_paths(const Derivation& d) {
  std::vector<NodePath> out;
  NodePath path;
  collect_paths(d.root, path, out);
  return out;
}

const DerivationNode& node_at(const Derivation& d, const NodePath& path) {
  return descend(d.root, path);
}

Proposal propose_subtree(const Derivation& d, const Grammar& g, Rng& rng, int max_depth) {
  const auto paths = nonterminal_paths(d);
  if (paths.empty()) throw std::invalid_argument("derivation has no nonterminal node");
  Proposal out{d, paths[rng.index(paths.size())]};
  DerivationNode* n = &out.derivation.root;
  for (int i : out.chosen) n = &n->children[static_cast<std::size_t>(i)];
  const int budget = max_depth - static_cast<int>(out.chosen.size());
  *n = sample_subtree(g, n->symbol, rng, budget);
  return out;
}

CompletionTable::CompletionTable(const Grammar& g, int max_depth) : max_depth_(max_depth) {
  if (max_depth < 0) throw std::invalid_argument("max_depth must be nonnegative");
  const std::size_t n = g.symbols().size();
  std::vector<std::vector<double>> z(n, std::vector<double>(static_cast<std::size_t>(max_depth) + 1));
  for (int k = 0; k <= max_depth; ++k) {
    for (std::size_t s = 0; s < n; ++s) {
      const auto id = static_cast<SymbolId>(s);
      if (g.is_terminal(id)) {
        z[s][static_cast<std::size_t>(k)] = 1.0;
        continue;
      }
      if (k == 0) continue;
      double total = 0.0;
      for (int p : g.alternatives(id)) {
        double term = g.production(p).probability;
        for (SymbolId c : g.production(p).rhs) {
          term *= z[static_cast<std::size_t>(c)][static_cast<std::size_t>(k - 1)];
        }
        total += term;
      }
      z[s][static_cast<std::size_t>(k)] = std::min(total, 1.0);
    }
  }
  log_z_.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    for (double v : z[s]) log_z_[s].push_back(std::log(v));
  }
}

double CompletionTable::log_prob(SymbolId s, int budget) const {
  if (budget < 0) return kNegInf;
  budget = std::min(budget, max_depth_);
  return log_z_.at(static_cast<std::size_t>(s)).at(static_cast<std::size_t>(budget));
}

double log_proposal_prob(const Derivation& from, const Derivation& to, const Grammar& g,
                         const CompletionTable& completion) {
  const auto n = nonterminal_node_count(from);
  if (n == 0 || !(from.root.symbol == to.root.symbol)) return kNegInf;
  return log_regen_mass(to, shared_paths(from, to), g, completion) -
         std::log(static_cast<double>(n));
}

ScoredDerivation score(Derivation d, const Grammar& g, const LikelihoodModel& model) {
  ScoredDerivation s;
  s.prior = joint_prior(d, g);
  s.log_likelihood = model.log_likelihood(d);
  s.nonterminals = nonterminal_node_count(d);
  s.derivation = std::move(d);
  return s;
}

AcceptanceTerms acceptance_terms(const ScoredDerivation& current, const ScoredDerivation& proposal,
                                 const Grammar& g, const CompletionTable& completion) {
  AcceptanceTerms t;
  if (current.derivation == proposal.derivation) {
    t.free_move = current.log_likelihood == kNegInf;
    return t;
  }
  const double lc = current.log_likelihood, lp = proposal.log_likelihood;
  if (lc == kNegInf && lp == kNegInf) {
    t.free_move = true;
  } else if (lc == kNegInf) {
    t.log_likelihood_ratio = std::numeric_limits<double>::infinity();
  } else if (lp == kNegInf) {
    t.log_likelihood_ratio = kNegInf;
  } else {
    t.log_likelihood_ratio = lp - lc;
  }
  t.log_rational_rules_ratio = proposal.prior.log_rational_rules - current.prior.log_rational_rules;
  t.log_parts_ratio = proposal.prior.log_parts - current.prior.log_parts;
  t.log_node_ratio = std::log(static_cast<double>(current.nonterminals)) -
                     std::log(static_cast<double>(proposal.nonterminals));
  const auto paths = shared_paths(current.derivation, proposal.derivation);
  t.log_regen_ratio = log_regen_mass(current.derivation, paths, g, completion) -
                      log_regen_mass(proposal.derivation, paths, g, completion);
  return t;
}

double accept_probability(const AcceptanceTerms& t, AcceptanceMode mode, bool regen_correction) {
  if (t.free_move) return 1.0;
  double log_a = t.log_likelihood_ratio + t.log_rational_rules_ratio + t.log_node_ratio;
  if (regen_correction) log_a += t.log_regen_ratio;
  if (mode == AcceptanceMode::kFull) log_a += t.log_parts_ratio;
  if (std::isnan(log_a)) return 0.0;
  if (log_a >= 0.0) return 1.0;
  return std::exp(log_a);
}

void PosteriorSummary::record(const std::string& id, const ScoredDerivation& s, const Grammar& g) {
  auto [it, fresh] = entries_.try_emplace(id);
  SummaryEntry& e = it->second;
  if (fresh) {
    e.derivation = s.derivation;
    e.yield = terminal_names(s.derivation, g);
  }
  ++e.visits;
  e.log_posterior = std::max(e.log_posterior, s.log_posterior());
  ++total_;
}

void PosteriorSummary::merge(const PosteriorSummary& other) {
  for (const auto& [id, e] : other.entries_) {
    auto [it, fresh] = entries_.try_emplace(id, e);
    if (!fresh) {
      it->second.visits += e.visits;
      it->second.log_posterior = std::max(it->second.log_posterior, e.log_posterior);
    }
  }
  total_ += other.total_;
}

double PosteriorSummary::frequency(const std::string& id) const {
  const auto it = entries_.find(id);
  if (it == entries_.end() || total_ == 0) return 0.0;
  return static_cast<double>(it->second.visits) / static_cast<double>(total_);
}

std::map<std::string, double> PosteriorSummary::multiset_frequencies() const {
  std::map<std::string, std::size_t> visits;
  for (const auto& [id, e] : entries_) {
    auto names = e.yield;
    std::sort(names.begin(), names.end());
    std::string key;
    for (const auto& n : names) {
      if (!key.empty()) key += ' ';
      key += n;
    }
    visits[key] += e.visits;
  }
  std::map<std::string, double> out;
  for (const auto& [k, v] : visits) out[k] = static_cast<double>(v) / static_cast<double>(total_);
  return out;
}

const std::string& PosteriorSummary::map_id(PrototypeRule rule) const {
  if (entries_.empty()) throw std::logic_error("empty posterior summary has no MAP entry");
  const std::pair<const std::string, SummaryEntry>* best = nullptr;
  for (const auto& kv : entries_) {
    if (best == nullptr) {
      best = &kv;
      continue;
    }
    const SummaryEntry& a = kv.second;
    const SummaryEntry& b = best->second;
    bool better;
    if (rule == PrototypeRule::kMostVisited) {
      better = a.visits != b.visits ? a.visits > b.visits : a.yield < b.yield;
    } else {
      better = a.log_posterior != b.log_posterior ? a.log_posterior > b.log_posterior
                                                  : a.yield < b.yield;
    }
    if (better) best = &kv;
  }
  return best->first;
}

nlohmann::json PosteriorSummary::to_json(PrototypeRule rule) const {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [id, e] : entries_) {
    nlohmann::json lp = nullptr;
    if (std::isfinite(e.log_posterior)) lp = e.log_posterior;
    entries.push_back({{"id", id},
                       {"yield", e.yield},
                       {"visits", e.visits},
                       {"frequency", frequency(id)},
                       {"log_posterior", lp}});
  }
  nlohmann::json j = {{"total", total_}, {"prototype_rule", to_string(rule)}, {"entries", entries}};
  j["map_id"] = entries_.empty() ? nlohmann::json(nullptr) : nlohmann::json(map_id(rule));
  return j;
}

PosteriorSummary PosteriorSummary::from_json(const nlohmann::json& j, const Grammar& g) {
  PosteriorSummary s;
  for (const auto& e : j.at("entries")) {
    SummaryEntry entry;
    const auto id = e.at("id").get<std::string>();
    entry.derivation = derivation_from_id(g, id);
    entry.yield = terminal_names(entry.derivation, g);
    entry.visits = e.at("visits").get<std::size_t>();
    entry.log_posterior = e.at("log_posterior").is_null() ? kNegInf : e.at("log_posterior").get<double>();
    s.total_ += entry.visits;
    s.entries_.emplace(id, std::move(entry));
  }
  if (s.total_ != j.at("total").get<std::size_t>()) {
    throw std::runtime_error("summary visit counts do not add up to its total");
  }
  return s;
}

VoxelObject extract_prototype(const PosteriorSummary& summary, const PartLibrary& lib,
                              PrototypeRule rule, double scale, int grid) {
  const SummaryEntry& e = summary.entries().at(summary.map_id(rule));
  return realize(e.yield, lib, scale, grid);
}

void ChainConfig::validate() const {
  if (iterations <= 0) throw std::invalid_argument("iterations must be positive");
  if (burn_in < 0) throw std::invalid_argument("burn-in must be nonnegative");
  if (iterations <= burn_in) throw std::invalid_argument("iterations must exceed burn-in");
  if (max_depth < 1) throw std::invalid_argument("max_depth must be at least 1");
  if (check_interval < 1) throw std::invalid_argument("check interval must be positive");
}

bool step(ChainState& state, const Grammar& g, const LikelihoodModel& model,
          const CompletionTable& completion, const ChainConfig& config) {
  ++state.proposed_count;
  Proposal prop;
  try {
    prop = propose_subtree(state.current.derivation, g, state.rng, config.max_depth);
  } catch (const DepthExceeded&) {
    return false;  // an unrealizable regeneration stays put
  }
  ScoredDerivation cand = score(std::move(prop.derivation), g, model);
  const AcceptanceTerms terms = acceptance_terms(state.current, cand, g, completion);
  const double a = accept_probability(terms, config.mode, config.regen_correction);
  if (state.rng.uniform() < a) {
    state.current = std::move(cand);
    ++state.accepted_count;
    return true;
  }
  return false;
}

ChainResult run_chain(const Grammar& g, const LikelihoodModel& model, const ChainConfig& config) {
  config.validate();
  const CompletionTable completion(g, config.max_depth);
  ChainResult out{ChainState{{}, Rng(config.seed), {}, 0, 0, 0.0}, {}};
  ChainState& st = out.state;
  st.current = score(sample_derivation(g, st.rng, config.max_depth), g, model);
  if (config.record_trace) {
    st.trace.reserve(static_cast<std::size_t>(config.iterations - config.burn_in));
  }

  for (int it = 0; it < config.iterations; ++it) {
    const bool accepted = step(st, g, model, completion, config);
    if ((it + 1) % config.check_interval == 0) {
      const JointPrior p = joint_prior(st.current.derivation, g);
      const double ll = model.recompute_log_likelihood(st.current.derivation);
      double drift = std::abs(p.log_value() - st.current.prior.log_value());
      if (std::isfinite(ll) || std::isfinite(st.current.log_likelihood)) {
        drift = std::max(drift, ll == st.current.log_likelihood
                                    ? 0.0
                                    : std::abs(ll - st.current.log_likelihood));
      }
      st.max_cache_drift = std::max(st.max_cache_drift, drift);
    }
    if (it < config.burn_in) continue;
    const std::string id = canonical_id(st.current.derivation);
    out.summary.record(id, st.current, g);
    if (config.record_trace) {
      st.trace.push_back({it, id, st.current.prior.log_value(), st.current.log_likelihood, accepted});
    }
  }
  return out;
}

std::string trace_csv(const std::vector<TraceRecord>& trace) {
  std::string out = "iteration,derivation_id,log_prior,log_likelihood,accepted\n";
  char buf[128];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof buf, "%d,", r.iteration);
    out += buf;
    out += r.derivation_id;
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%d\n", r.log_prior, r.log_likelihood,
                  r.accepted ? 1 : 0);
    out += buf;
  }
  return out;
}

namespace {

struct Enumerator {
  const Grammar& g;
  std::size_t budget;
  std::map<std::pair<SymbolId, int>, std::vector<DerivationNode>> memo;

  const std::vector<DerivationNode>& expand(SymbolId s, int k) {
    const auto key = std::make_pair(s, k);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    std::vector<DerivationNode> out;
    if (g.is_terminal(s)) {
      out.push_back(DerivationNode{s, -1, {}});
    } else if (k > 0) {
      for (int p : g.alternatives(s)) {
        std::vector<DerivationNode> partial{DerivationNode{s, p, {}}};
        for (SymbolId c : g.production(p).rhs) {
          const auto& options = expand(c, k - 1);
          if (partial.size() * options.size() > budget) {
            throw EnumerationBudgetExceeded("derivation language exceeds the enumeration budget of " +
                                            std::to_string(budget));
          }
          std::vector<DerivationNode> next;
          next.reserve(partial.size() * options.size());
          for (const auto& base : partial) {
            for (const auto& o : options) {
              next.push_back(base);
              next.back().children.push_back(o);
            }
          }
          partial = std::move(next);
          if (partial.empty()) break;
        }
        out.insert(out.end(), std::make_move_iterator(partial.begin()),
                   std::make_move_iterator(partial.end()));
        if (out.size() > budget) {
          throw EnumerationBudgetExceeded("derivation language exceeds the enumeration budget of " +
                                          std::to_string(budget));
        }
      }
    }
    return memo.emplace(key, std::move(out)).first->second;
  }
};

}  // namespace

std::vector<Derivation> enumerate_derivations(const Grammar& g, int max_depth, std::size_t budget) {
  Enumerator e{g, budget, {}};
  std::vector<Derivation> out;
  for (const auto& n : e.expand(g.start(), max_depth)) out.push_back(Derivation{n});
  std::sort(out.begin(), out.end(), [](const Derivation& a, const Derivation& b) {
    return canonical_id(a) < canonical_id(b);
  });
  return out;
}

std::vector<ExactEntry> enumerate_posterior(const Grammar& g, const LikelihoodModel& model,
                                            int max_depth, std::size_t budget) {
  std::vector<ExactEntry> out;
  std::vector<double> logp;
  for (auto& d : enumerate_derivations(g, max_depth, budget)) {
    logp.push_back(log_posterior_unnorm(d, g, model));
    out.push_back({d, canonical_id(d), 0.0});
  }
  const double log_norm = log_sum_exp(logp);
  if (log_norm == kNegInf) throw std::runtime_error("every derivation has zero posterior");
  for (std::size_t i = 0; i < out.size(); ++i) out[i].probability = std::exp(logp[i] - log_norm);
  return out;
}

double total_variation(const PosteriorSummary& summary, std::span<const ExactEntry> exact) {
  std::map<std::string, double> diff;
  for (const auto& e : exact) diff[e.id] -= e.probability;
  for (const auto& [id, e] : summary.entries()) diff[id] += summary.frequency(id);
  double tv = 0.0;
  for (const auto& [id, d] : diff) tv += std::abs(d);
  return 0.5 * tv;
}

}  // namespace fribble
