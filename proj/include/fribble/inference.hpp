#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "fribble/grammar.hpp"
#include "fribble/haptics.hpp"
#include "fribble/object_model.hpp"
#include "fribble/random.hpp"
#include "fribble/view_bank.hpp"
#include "fribble/vision.hpp"

namespace fribble {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

enum class Modality { kVision, kHaptic, kBoth };
enum class AcceptanceMode { kPaper, kFull };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);
std::string to_string(AcceptanceMode m);
AcceptanceMode acceptance_mode_from_string(const std::string& s);

// log P(X | D, P). Returns kNegInf for a zero likelihood.
class LikelihoodModel {
 public:
  virtual ~LikelihoodModel() = default;
  virtual double log_likelihood(const Derivation& d) const = 0;
  // Same value bypassing any memoization; used by chain audits.
  virtual double recompute_log_likelihood(const Derivation& d) const { return log_likelihood(d); }
};

// Likelihoods fixed per terminal yield, keyed by space-joined terminal
// names (e.g. "x z"). Yields missing from the table get `fallback`.
class TableLikelihood : public LikelihoodModel {
 public:
  TableLikelihood(const Grammar& g, std::map<std::string, double> table, double fallback = 1.0);
  double log_likelihood(const Derivation& d) const override;

 private:
  const Grammar* grammar_;
  std::map<std::string, double> table_;
  double fallback_;
};

std::string yield_key(const Derivation& d, const Grammar& g);

struct SensoryObservation {
  Modality modality = Modality::kBoth;
  std::optional<HogDescriptor> vision;
  std::optional<GraspVector> haptic;

  // Throws std::invalid_argument unless the present fields match `modality`.
  void validate() const;
};

// Likelihood of a sensory observation given a hypothesis: the hypothesis's
// terminals are realized into a voxel object and compared, per channel, by
// the best match over the 27 grid viewpoints. The "both" modality multiplies
// the channel likelihoods. `sharpness` raises the likelihood to a power
// (1 is the plain similarity). Results are memoized per distinct part set,
// so an instance must not be shared between threads.
class SensoryLikelihood : public LikelihoodModel {
 public:
  SensoryLikelihood(const Grammar& g, const ViewBank& bank, SensoryObservation obs,
                    double sharpness = 1.0);

  double log_likelihood(const Derivation& d) const override;
  double recompute_log_likelihood(const Derivation& d) const override;
  double log_likelihood(std::span<const std::string> parts) const;
  double uncached_log_likelihood(std::span<const std::string> parts) const;

  // Plain-space similarity of one channel, before sharpening.
  double channel_likelihood(Modality channel, std::span<const std::string> parts) const;

  const SensoryObservation& observation() const { return obs_; }
  double sharpness() const { return sharpness_; }
  std::size_t cache_size() const { return cache_.size(); }

 private:
  const Grammar* grammar_;
  const ViewBank* bank_;
  SensoryObservation obs_;
  double sharpness_;
  mutable std::unordered_map<std::string, double> cache_;
};

double log_posterior_unnorm(const Derivation& d, const Grammar& g, const LikelihoodModel& model);

// ---------------------------------------------------------------------------
// Subtree-regeneration proposals

// Child-index path from the root; empty for the root itself.
using NodePath = std::vector<int>;

std::vector<NodePath> nonterminal_paths(const Derivation& d);
const DerivationNode& node_at(const Derivation& d, const NodePath& path);

struct Proposal {
  Derivation derivation;
  NodePath chosen;
};

// Picks a nonterminal node uniformly (root included) and regenerates its
// subtree from the grammar within the remaining depth budget.
Proposal propose_subtree(const Derivation& d, const Grammar& g, Rng& rng,
                         int max_depth = kDefaultMaxDepth);

// log P(symbol completes within `budget` production levels) under the
// grammar's production probabilities; this is the normalizer of the
// depth-truncated regeneration distribution.
class CompletionTable {
 public:
  CompletionTable(const Grammar& g, int max_depth);
  double log_prob(SymbolId s, int budget) const;
  int max_depth() const { return max_depth_; }

 private:
  int max_depth_;
  std::vector<std::vector<double>> log_z_;  // [symbol][budget]
};

// Exact log q(to | from) of propose_subtree, summing over every node whose
// regeneration could turn `from` into `to`. kNegInf if unreachable.
double log_proposal_prob(const Derivation& from, const Derivation& to, const Grammar& g,
                         const CompletionTable& completion);

// A derivation with its cached posterior ingredients.
struct ScoredDerivation {
  Derivation derivation;
  JointPrior prior;
  double log_likelihood = 0.0;
  std::size_t nonterminals = 0;

  double log_posterior() const { return prior.log_value() + log_likelihood; }
};

ScoredDerivation score(Derivation d, const Grammar& g, const LikelihoodModel& model);

// Log-space factors of the acceptance ratio for a move current -> proposal.
struct AcceptanceTerms {
  double log_likelihood_ratio = 0.0;
  double log_rational_rules_ratio = 0.0;
  double log_node_ratio = 0.0;   // log |N_current| - log |N_proposal|
  double log_parts_ratio = 0.0;  // full mode only
  double log_regen_ratio = 0.0;  // full mode only: reverse/forward regeneration mass
  bool free_move = false;        // both states have zero likelihood
};

AcceptanceTerms acceptance_terms(const ScoredDerivation& current, const ScoredDerivation& proposal,
                                 const Grammar& g, const CompletionTable& completion);

// paper: min{1, L'/L * P(D'|G)/P(D|G) * |N_D|/|N_D'|} with the
//        marginalized (rational rules) prior.
// full:  additionally the parts-prior ratio.
// With `regen_correction`, both modes also carry the regeneration-probability
// ratio of the proposal; full mode then targets prior x likelihood exactly.
// Always in [0, 1]; never NaN.
double accept_probability(const AcceptanceTerms& terms, AcceptanceMode mode,
                          bool regen_correction = true);

// ---------------------------------------------------------------------------
// Posterior summaries

enum class PrototypeRule { kMaxPosterior, kMostVisited };

std::string to_string(PrototypeRule r);
PrototypeRule prototype_rule_from_string(const std::string& s);

struct SummaryEntry {
  Derivation derivation;
  std::vector<std::string> yield;
  std::size_t visits = 0;
  double log_posterior = kNegInf;  // best score seen for this derivation
};

class PosteriorSummary {
 public:
  void record(const std::string& id, const ScoredDerivation& s, const Grammar& g);
  void merge(const PosteriorSummary& other);

  std::size_t total() const { return total_; }
  bool empty() const { return total_ == 0; }
  const std::map<std::string, SummaryEntry>& entries() const { return entries_; }
  double frequency(const std::string& id) const;

  // Visit frequency per sorted terminal multiset (space-joined).
  std::map<std::string, double> multiset_frequencies() const;

  // Id of the MAP entry. Ties go to the lexicographically smallest terminal
  // sequence. Requires !empty().
  const std::string& map_id(PrototypeRule rule) const;

  nlohmann::json to_json(PrototypeRule rule) const;
  static PosteriorSummary from_json(const nlohmann::json& j, const Grammar& g);

 private:
  std::map<std::string, SummaryEntry> entries_;
  std::size_t total_ = 0;
};

VoxelObject extract_prototype(const PosteriorSummary& summary, const PartLibrary& lib,
                              PrototypeRule rule, double scale = 0.3,
                              int grid = VoxelObject::kDefaultSize);

// ---------------------------------------------------------------------------
// Chains

struct ChainConfig {
  int iterations = 10000;
  int burn_in = 1000;
  int max_depth = kDefaultMaxDepth;
  std::uint64_t seed = 1;
  AcceptanceMode mode = AcceptanceMode::kFull;
  bool regen_correction = true;
  int check_interval = 1000;  // cache-vs-recompute audit period
  bool record_trace = true;

  void validate() const;  // throws std::invalid_argument
};

struct TraceRecord {
  int iteration = 0;
  std::string derivation_id;
  double log_prior = 0.0;
  double log_likelihood = 0.0;
  bool accepted = false;
};

struct ChainState {
  ScoredDerivation current;
  Rng rng;
  std::vector<TraceRecord> trace;
  std::size_t accepted_count = 0;
  std::size_t proposed_count = 0;
  double max_cache_drift = 0.0;  // largest |cached - recomputed| log value seen

  double acceptance_rate() const {
    return proposed_count == 0 ? 0.0
                               : static_cast<double>(accepted_count) / proposed_count;
  }
};

struct ChainResult {
  ChainState state;
  PosteriorSummary summary;
};

// Initializes from a prior sample and runs propose/accept for
// config.iterations steps, recording every step at or after burn_in.
ChainResult run_chain(const Grammar& g, const LikelihoodModel& model, const ChainConfig& config);

// Single step; returns whether the proposal was accepted.
bool step(ChainState& state, const Grammar& g, const LikelihoodModel& model,
          const CompletionTable& completion, const ChainConfig& config);

std::string trace_csv(const std::vector<TraceRecord>& trace);

// ---------------------------------------------------------------------------
// Exact enumeration oracle

class EnumerationBudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExactEntry {
  Derivation derivation;
  std::string id;
  double probability = 0.0;
};

// Every derivation of depth <= max_depth with its normalized posterior
// (joint prior x likelihood), in canonical-id order.
std::vector<ExactEntry> enumerate_posterior(const Grammar& g, const LikelihoodModel& model,
                                            int max_depth, std::size_t budget = 10000);

std::vector<Derivation> enumerate_derivations(const Grammar& g, int max_depth,
                                              std::size_t budget = 10000);

// Half the L1 distance between the summary's visit frequencies and `exact`.
double total_variation(const PosteriorSummary& summary, std::span<const ExactEntry> exact);

}  // namespace fribble
