#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fribble/random.hpp"

namespace fribble {

using SymbolId = int;

enum class SymbolKind { kStart, kNonterminal, kPreterminal, kTerminal };

struct Symbol {
  std::string name;
  SymbolKind kind = SymbolKind::kTerminal;

  bool operator==(const Symbol&) const = default;
};

struct Production {
  SymbolId lhs = -1;
  std::vector<SymbolId> rhs;
  double probability = 1.0;

  bool operator==(const Production&) const = default;
};

// Raised by the grammar parser. line() is 1-based, 0 when the problem is not
// tied to a single line (e.g. an unreachable nonterminal).
class GrammarError : public std::runtime_error {
 public:
  GrammarError(const std::string& what, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// A probabilistic context-free grammar. Immutable after construction.
//
// Text format, one rule per line:
//
//   LHS -> A B | C [0.25] | D
//
// '#' starts a comment. Alternatives of one left-hand side are either all
// weighted or all unweighted (uniform). A rule may span several lines with
// the same LHS; alternatives are appended in order. The LHS of the first
// rule is the start symbol. Symbols never appearing on a LHS are terminals;
// a non-start LHS whose every alternative is a single terminal is a
// preterminal.
class Grammar {
 public:
  static Grammar parse(std::string_view text);
  static Grammar load(const std::filesystem::path& path);

  // Serializes with explicit weights; parse(to_text()) reproduces *this.
  std::string to_text() const;

  const std::vector<Symbol>& symbols() const { return symbols_; }
  const Symbol& symbol(SymbolId id) const { return symbols_.at(static_cast<std::size_t>(id)); }
  const std::vector<Production>& productions() const { return productions_; }
  const Production& production(int index) const {
    return productions_.at(static_cast<std::size_t>(index));
  }
  SymbolId start() const { return start_; }

  // Global production indices for one LHS, in file order.
  std::span<const int> alternatives(SymbolId lhs) const {
    return by_lhs_.at(static_cast<std::size_t>(lhs));
  }
  // Position of a production within its LHS's alternatives.
  int alternative_index(int production) const {
    return alternative_index_.at(static_cast<std::size_t>(production));
  }
  double log_probability(int production) const {
    return log_probability_.at(static_cast<std::size_t>(production));
  }

  std::optional<SymbolId> find(std::string_view name) const;
  SymbolId id(std::string_view name) const;  // throws std::out_of_range
  bool is_terminal(SymbolId id) const { return symbol(id).kind == SymbolKind::kTerminal; }
  std::size_t count(SymbolKind kind) const;
  std::vector<SymbolId> symbols_of_kind(SymbolKind kind) const;

  // Fewest production levels any complete derivation from `s` needs
  // (0 for terminals).
  int min_depth(SymbolId s) const { return min_depth_.at(static_cast<std::size_t>(s)); }

  bool operator==(const Grammar& other) const {
    return symbols_ == other.symbols_ && productions_ == other.productions_ &&
           start_ == other.start_;
  }

 private:
  Grammar() = default;
  void finalize();

  std::vector<Symbol> symbols_;
  std::vector<Production> productions_;
  SymbolId start_ = -1;
  std::vector<std::vector<int>> by_lhs_;
  std::vector<int> alternative_index_;
  std::vector<double> log_probability_;
  std::vector<int> min_depth_;
};

// One node of a parse tree. Terminal leaves carry production == -1.
struct DerivationNode {
  SymbolId symbol = -1;
  int production = -1;
  std::vector<DerivationNode> children;

  bool is_terminal() const { return production < 0; }
  bool operator==(const DerivationNode&) const = default;
};

struct Derivation {
  DerivationNode root;

  bool operator==(const Derivation&) const = default;
};

// Per-LHS production use counts, indexed [symbol][alternative].
using ProductionCounts = std::vector<std::vector<int>>;

class DepthExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kDefaultMaxDepth = 12;
inline constexpr int kSampleRetries = 100;

// Throws std::invalid_argument if `d` is not a well-formed derivation of `g`.
void validate(const Derivation& d, const Grammar& g);

// Top-down expansion of `symbol` drawing each production per its
// probability. Nonterminals may use at most `budget` production levels
// below and including themselves; fails (nullopt) if expansion runs out.
std::optional<DerivationNode> try_expand(const Grammar& g, SymbolId symbol, Rng& rng, int budget);

// try_expand with up to kSampleRetries attempts; throws DepthExceeded.
DerivationNode sample_subtree(const Grammar& g, SymbolId symbol, Rng& rng, int budget);

Derivation sample_derivation(const Grammar& g, Rng& rng, int max_depth = kDefaultMaxDepth);

std::vector<SymbolId> terminal_yield(const Derivation& d);
std::vector<std::string> terminal_names(const Derivation& d, const Grammar& g);

ProductionCounts count_productions(const DerivationNode& node, const Grammar& g);
inline ProductionCounts count_productions(const Derivation& d, const Grammar& g) {
  return count_productions(d.root, g);
}

// Number of nonterminal (production-bearing) nodes, root included.
std::size_t nonterminal_node_count(const Derivation& d);
// Production levels on the longest root-to-leaf path.
int depth(const DerivationNode& node);

// Preorder production-index sequence, e.g. "0.4.5.9.13"; unique per tree.
std::string canonical_id(const Derivation& d);
Derivation derivation_from_id(const Grammar& g, std::string_view id);

// Product of the production probabilities along the derivation.
double log_derivation_prob(const DerivationNode& node, const Grammar& g);
inline double derivation_prob(const Derivation& d, const Grammar& g) {
  return std::exp(log_derivation_prob(d.root, g));
}

// log P(D|G) with production probabilities marginalized under a uniform
// Dirichlet: sum over nonterminals of log B(C_s + 1) - log B(1).
double log_rational_rules_prior(const ProductionCounts& counts);
inline double log_rational_rules_prior(const Derivation& d, const Grammar& g) {
  return log_rational_rules_prior(count_productions(d, g));
}
inline double rational_rules_prior(const Derivation& d, const Grammar& g) {
  return std::exp(log_rational_rules_prior(d, g));
}

// Reuse penalty: a factor 1/|preterminals| for each use of a preterminal
// beyond its first.
double log_parts_prior(const Derivation& d, const Grammar& g);
// Uses of preterminals beyond the first, summed over preterminals.
int preterminal_reuse(const Derivation& d, const Grammar& g);
// Plain-space value, evaluated as an integer power so that (1/4)^k is exact.
double parts_prior(const Derivation& d, const Grammar& g);

struct JointPrior {
  double log_rational_rules = 0.0;
  double log_parts = 0.0;

  double log_value() const { return log_rational_rules + log_parts; }
  double value() const { return std::exp(log_value()); }
};

JointPrior joint_prior(const Derivation& d, const Grammar& g);

}  // namespace fribble
