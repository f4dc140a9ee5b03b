#include "fribble/grammar.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace fribble {
namespace {

constexpr double kWeightTolerance = 1e-9;
constexpr double kExactSumTolerance = 1e-12;

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

bool is_identifier(std::string_view s) {
  if (s.empty()) return false;
  const auto ok_first = [](char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
  };
  const auto ok_rest = [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '\'' || c == '-';
  };
  if (!ok_first(s.front())) return false;
  return std::all_of(s.begin() + 1, s.end(), ok_rest);
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

struct RawAlternative {
  std::vector<std::string> rhs;
  std::optional<double> weight;
  int line = 0;
};

struct RawRule {
  std::string lhs;
  int line = 0;
  std::vector<RawAlternative> alternatives;
};

RawAlternative parse_alternative(std::string_view text, int line) {
  RawAlternative alt;
  alt.line = line;
  text = trim(text);
  if (const auto open = text.find('['); open != std::string_view::npos) {
    const auto close = text.find(']', open);
    if (close == std::string_view::npos || !trim(text.substr(close + 1)).empty()) {
      throw GrammarError("malformed weight in alternative '" + std::string(text) + "'", line);
    }
    const auto body = trim(text.substr(open + 1, close - open - 1));
    double w = 0.0;
    const auto res = std::from_chars(body.data(), body.data() + body.size(), w);
    if (res.ec != std::errc() || res.ptr != body.data() + body.size()) {
      throw GrammarError("bad weight '" + std::string(body) + "'", line);
    }
    if (!(w > 0.0) || w > 1.0) {
      throw GrammarError("weight " + std::string(body) + " outside (0, 1]", line);
    }
    alt.weight = w;
    text = trim(text.substr(0, open));
  }
  for (auto tok : split_ws(text)) {
    if (!is_identifier(tok)) {
      throw GrammarError("invalid symbol name '" + std::string(tok) + "'", line);
    }
    alt.rhs.emplace_back(tok);
  }
  if (alt.rhs.empty()) throw GrammarError("empty alternative", line);
  return alt;
}

}  // namespace

Grammar Grammar::parse(std::string_view text) {
  if (trim(text).empty()) throw GrammarError("empty grammar text");

  std::vector<RawRule> rules;
  std::map<std::string, std::size_t, std::less<>> rule_of;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos
                                                                             : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;

    const auto arrow = line.find("->");
    if (arrow == std::string_view::npos) throw GrammarError("expected '->'", line_no);
    const auto lhs = trim(line.substr(0, arrow));
    if (!is_identifier(lhs)) {
      throw GrammarError("invalid left-hand side '" + std::string(lhs) + "'", line_no);
    }
    auto [it, inserted] = rule_of.try_emplace(std::string(lhs), rules.size());
    if (inserted) rules.push_back(RawRule{std::string(lhs), line_no, {}});
    RawRule& rule = rules[it->second];

    const auto body = trim(line.substr(arrow + 2));
    if (body.empty()) throw GrammarError("empty right-hand side", line_no);
    std::size_t start = 0;
    while (true) {
      const auto bar = body.find('|', start);
      const auto piece = body.substr(start, bar == std::string_view::npos ? std::string_view::npos
                                                                          : bar - start);
      rule.alternatives.push_back(parse_alternative(piece, line_no));
      if (bar == std::string_view::npos) break;
      start = bar + 1;
    }
  }
  if (rules.empty()) throw GrammarError("grammar has no rules");

  Grammar g;
  std::map<std::string, SymbolId, std::less<>> ids;
  const auto intern = [&](const std::string& name) {
    auto [it, inserted] = ids.try_emplace(name, static_cast<SymbolId>(g.symbols_.size()));
    if (inserted) g.symbols_.push_back(Symbol{name, SymbolKind::kTerminal});
    return it->second;
  };

  // Symbol ids follow first appearance in the grouped rule listing, which is
  // also the order to_text() writes; that makes serialization round-trip.
  for (const auto& rule : rules) {
    intern(rule.lhs);
    for (const auto& alt : rule.alternatives) {
      for (const auto& s : alt.rhs) intern(s);
    }
  }
  for (const auto& rule : rules) {
    if (rule.alternatives.empty()) {
      throw GrammarError("nonterminal '" + rule.lhs + "' has no productions", rule.line);
    }
    const SymbolId lhs = ids.at(rule.lhs);
    g.symbols_[static_cast<std::size_t>(lhs)].kind = SymbolKind::kNonterminal;

    const bool weighted = rule.alternatives.front().weight.has_value();
    double sum = 0.0;
    for (const auto& alt : rule.alternatives) {
      if (alt.weight.has_value() != weighted) {
        throw GrammarError("mixed weighted and unweighted alternatives for '" + rule.lhs + "'",
                           alt.line);
      }
      sum += weighted ? *alt.weight : 0.0;
    }
    if (weighted && std::abs(sum - 1.0) > kWeightTolerance) {
      std::ostringstream msg;
      msg << "probabilities for '" << rule.lhs << "' sum to " << sum << ", not 1";
      throw GrammarError(msg.str(), rule.line);
    }
    const auto n = static_cast<double>(rule.alternatives.size());
    for (const auto& alt : rule.alternatives) {
      Production p;
      p.lhs = lhs;
      for (const auto& s : alt.rhs) p.rhs.push_back(ids.at(s));
      if (!weighted) {
        p.probability = 1.0 / n;
      } else if (std::abs(sum - 1.0) > kExactSumTolerance) {
        p.probability = *alt.weight / sum;
      } else {
        p.probability = *alt.weight;
      }
      g.productions_.push_back(std::move(p));
    }
  }
  g.start_ = ids.at(rules.front().lhs);
  g.finalize();
  return g;
}

void Grammar::finalize() {
  const auto n_sym = symbols_.size();
  by_lhs_.assign(n_sym, {});
  alternative_index_.assign(productions_.size(), 0);
  log_probability_.assign(productions_.size(), 0.0);
  for (std::size_t i = 0; i < productions_.size(); ++i) {
    auto& alts = by_lhs_[static_cast<std::size_t>(productions_[i].lhs)];
    alternative_index_[i] = static_cast<int>(alts.size());
    alts.push_back(static_cast<int>(i));
    log_probability_[i] = std::log(productions_[i].probability);
  }

  // Kinds: start, then preterminals among the remaining LHS symbols.
  for (std::size_t s = 0; s < n_sym; ++s) {
    if (by_lhs_[s].empty()) continue;
    if (static_cast<SymbolId>(s) == start_) {
      symbols_[s].kind = SymbolKind::kStart;
      continue;
    }
    const bool pre = std::all_of(by_lhs_[s].begin(), by_lhs_[s].end(), [&](int p) {
      const auto& rhs = productions_[static_cast<std::size_t>(p)].rhs;
      return rhs.size() == 1 && by_lhs_[static_cast<std::size_t>(rhs.front())].empty();
    });
    symbols_[s].kind = pre ? SymbolKind::kPreterminal : SymbolKind::kNonterminal;
  }

  // Reachability from the start symbol.
  std::vector<bool> reached(n_sym, false);
  std::vector<SymbolId> stack{start_};
  reached[static_cast<std::size_t>(start_)] = true;
  while (!stack.empty()) {
    const auto s = stack.back();
    stack.pop_back();
    for (int p : by_lhs_[static_cast<std::size_t>(s)]) {
      for (SymbolId c : productions_[static_cast<std::size_t>(p)].rhs) {
        if (!reached[static_cast<std::size_t>(c)]) {
          reached[static_cast<std::size_t>(c)] = true;
          stack.push_back(c);
        }
      }
    }
  }
  for (std::size_t s = 0; s < n_sym; ++s) {
    if (!reached[s] && !by_lhs_[s].empty()) {
      throw GrammarError("nonterminal '" + symbols_[s].name + "' is unreachable from '" +
                         symbols_[static_cast<std::size_t>(start_)].name + "'");
    }
  }

  // Minimum derivation depth by fixed-point iteration.
  constexpr int kInf = std::numeric_limits<int>::max();
  min_depth_.assign(n_sym, kInf);
  for (std::size_t s = 0; s < n_sym; ++s) {
    if (by_lhs_[s].empty()) min_depth_[s] = 0;
  }
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& p : productions_) {
      int d = 0;
      for (SymbolId c : p.rhs) d = std::max(d, min_depth_[static_cast<std::size_t>(c)]);
      if (d == kInf) continue;
      auto& cur = min_depth_[static_cast<std::size_t>(p.lhs)];
      if (d + 1 < cur) {
        cur = d + 1;
        changed = true;
      }
    }
  }
  for (std::size_t s = 0; s < n_sym; ++s) {
    if (min_depth_[s] == kInf) {
      throw GrammarError("nonterminal '" + symbols_[s].name + "' derives no terminal string");
    }
  }
}

Grammar Grammar::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open grammar file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string Grammar::to_text() const {
  std::ostringstream out;
  char buf[32];
  for (std::size_t s = 0; s < symbols_.size(); ++s) {
    if (by_lhs_[s].empty()) continue;
    out << symbols_[s].name << " ->";
    bool first = true;
    for (int p : by_lhs_[s]) {
      const auto& prod = productions_[static_cast<std::size_t>(p)];
      out << (first ? " " : " | ");
      first = false;
      for (SymbolId c : prod.rhs) out << symbols_[static_cast<std::size_t>(c)].name << ' ';
      std::snprintf(buf, sizeof buf, "%.17g", prod.probability);
      out << '[' << buf << ']';
    }
    out << '\n';
  }
  return out.str();
}

std::optional<SymbolId> Grammar::find(std::string_view name) const {
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    if (symbols_[i].name == name) return static_cast<SymbolId>(i);
  }
  return std::nullopt;
}

SymbolId Grammar::id(std::string_view name) const {
  if (auto s = find(name)) return *s;
  throw std::out_of_range("unknown grammar symbol '" + std::string(name) + "'");
}

std::size_t Grammar::count(SymbolKind kind) const {
  return static_cast<std::size_t>(std::count_if(
      symbols_.begin(), symbols_.end(), [&](const Symbol& s) { return s.kind == kind; }));
}

std::vector<SymbolId> Grammar::symbols_of_kind(SymbolKind kind) const {
  std::vector<SymbolId> out;
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    if (symbols_[i].kind == kind) out.push_back(static_cast<SymbolId>(i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Derivations

namespace {

void validate_node(const DerivationNode& n, const Grammar& g) {
  if (n.symbol < 0 || static_cast<std::size_t>(n.symbol) >= g.symbols().size()) {
    throw std::invalid_argument("derivation node with unknown symbol");
  }
  if (n.is_terminal()) {
    if (!g.is_terminal(n.symbol) || !n.children.empty()) {
      throw std::invalid_argument("leaf '" + g.symbol(n.symbol).name + "' is not a terminal");
    }
    return;
  }
  if (static_cast<std::size_t>(n.production) >= g.productions().size()) {
    throw std::invalid_argument("derivation node with unknown production");
  }
  const auto& p = g.production(n.production);
  if (p.lhs != n.symbol || p.rhs.size() != n.children.size()) {
    throw std::invalid_argument("node for '" + g.symbol(n.symbol).name +
                                "' does not match its production");
  }
  for (std::size_t i = 0; i < n.children.size(); ++i) {
    if (n.children[i].symbol != p.rhs[i]) {
      throw std::invalid_argument("child symbol mismatch under '" + g.symbol(n.symbol).name + "'");
    }
    validate_node(n.children[i], g);
  }
}

void collect_yield(const DerivationNode& n, std::vector<SymbolId>& out) {
  if (n.is_terminal()) {
    out.push_back(n.symbol);
    return;
  }
  for (const auto& c : n.children) collect_yield(c, out);
}

void collect_counts(const DerivationNode& n, const Grammar& g, ProductionCounts& counts) {
  if (n.is_terminal()) return;
  ++counts[static_cast<std::size_t>(n.symbol)]
          [static_cast<std::size_t>(g.alternative_index(n.production))];
  for (const auto& c : n.children) collect_counts(c, g, counts);
}

std::size_t count_nonterminals(const DerivationNode& n) {
  if (n.is_terminal()) return 0;
  std::size_t k = 1;
  for (const auto& c : n.children) k += count_nonterminals(c);
  return k;
}

void write_id(const DerivationNode& n, std::string& out) {
  if (n.is_terminal()) return;
  if (!out.empty()) out += '.';
  out += std::to_string(n.production);
  for (const auto& c : n.children) write_id(c, out);
}

DerivationNode read_id(const Grammar& g, SymbolId symbol, const std::vector<int>& seq,
                       std::size_t& pos) {
  DerivationNode n;
  n.symbol = symbol;
  if (g.is_terminal(symbol)) return n;
  if (pos >= seq.size()) throw std::invalid_argument("derivation id ends early");
  n.production = seq[pos++];
  if (n.production < 0 || static_cast<std::size_t>(n.production) >= g.productions().size() ||
      g.production(n.production).lhs != symbol) {
    throw std::invalid_argument("derivation id names a production of the wrong symbol");
  }
  for (SymbolId c : g.production(n.production).rhs) n.children.push_back(read_id(g, c, seq, pos));
  return n;
}

void count_preterminals(const DerivationNode& n, const Grammar& g, std::vector<int>& occ) {
  if (n.is_terminal()) return;
  if (g.symbol(n.symbol).kind == SymbolKind::kPreterminal) {
    ++occ[static_cast<std::size_t>(n.symbol)];
  }
  for (const auto& c : n.children) count_preterminals(c, g, occ);
}

}  // namespace

void validate(const Derivation& d, const Grammar& g) {
  if (d.root.symbol != g.start()) throw std::invalid_argument("derivation root is not the start");
  validate_node(d.root, g);
}

std::optional<DerivationNode> try_expand(const Grammar& g, SymbolId symbol, Rng& rng, int budget) {
  DerivationNode n;
  n.symbol = symbol;
  if (g.is_terminal(symbol)) return n;
  if (budget <= 0) return std::nullopt;
  const auto alts = g.alternatives(symbol);
  std::vector<double> weights;
  weights.reserve(alts.size());
  for (int p : alts) weights.push_back(g.production(p).probability);
  n.production = alts[rng.categorical(weights)];
  const auto& rhs = g.production(n.production).rhs;
  n.children.reserve(rhs.size());
  for (SymbolId c : rhs) {
    auto child = try_expand(g, c, rng, budget - 1);
    if (!child) return std::nullopt;
    n.children.push_back(std::move(*child));
  }
  return n;
}

DerivationNode sample_subtree(const Grammar& g, SymbolId symbol, Rng& rng, int budget) {
  for (int attempt = 0; attempt < kSampleRetries; ++attempt) {
    if (auto n = try_expand(g, symbol, rng, budget)) return std::move(*n);
  }
  throw DepthExceeded("could not expand '" + g.symbol(symbol).name + "' within depth " +
                      std::to_string(budget) + " after " + std::to_string(kSampleRetries) +
                      " attempts");
}

Derivation sample_derivation(const Grammar& g, Rng& rng, int max_depth) {
  if (max_depth < g.min_depth(g.start())) {
    throw std::invalid_argument("max_depth " + std::to_string(max_depth) +
                                " is below the grammar's minimum derivation depth " +
                                std::to_string(g.min_depth(g.start())));
  }
  return Derivation{sample_subtree(g, g.start(), rng, max_depth)};
}

std::vector<SymbolId> terminal_yield(const Derivation& d) {
  std::vector<SymbolId> out;
  collect_yield(d.root, out);
  return out;
}

std::vector<std::string> terminal_names(const Derivation& d, const Grammar& g) {
  std::vector<std::string> out;
  for (SymbolId s : terminal_yield(d)) out.push_back(g.symbol(s).name);
  return out;
}

ProductionCounts count_productions(const DerivationNode& node, const Grammar& g) {
  ProductionCounts counts(g.symbols().size());
  for (std::size_t s = 0; s < counts.size(); ++s) {
    counts[s].assign(g.alternatives(static_cast<SymbolId>(s)).size(), 0);
  }
  collect_counts(node, g, counts);
  return counts;
}

std::size_t nonterminal_node_count(const Derivation& d) { return count_nonterminals(d.root); }

int depth(const DerivationNode& node) {
  if (node.is_terminal()) return 0;
  int d = 0;
  for (const auto& c : node.children) d = std::max(d, depth(c));
  return d + 1;
}

std::string canonical_id(const Derivation& d) {
  std::string out;
  write_id(d.root, out);
  return out;
}

Derivation derivation_from_id(const Grammar& g, std::string_view id) {
  std::vector<int> seq;
  std::size_t pos = 0;
  while (pos < id.size()) {
    auto dot = id.find('.', pos);
    if (dot == std::string_view::npos) dot = id.size();
    int v = 0;
    const auto res = std::from_chars(id.data() + pos, id.data() + dot, v);
    if (res.ec != std::errc() || res.ptr != id.data() + dot) {
      throw std::invalid_argument("malformed derivation id '" + std::string(id) + "'");
    }
    seq.push_back(v);
    pos = dot + 1;
  }
  std::size_t cursor = 0;
  Derivation d{read_id(g, g.start(), seq, cursor)};
  if (cursor != seq.size()) throw std::invalid_argument("trailing entries in derivation id");
  return d;
}

double log_derivation_prob(const DerivationNode& node, const Grammar& g) {
  if (node.is_terminal()) return 0.0;
  double lp = g.log_probability(node.production);
  for (const auto& c : node.children) lp += log_derivation_prob(c, g);
  return lp;
}

double log_rational_rules_prior(const ProductionCounts& counts) {
  double lp = 0.0;
  for (const auto& c : counts) {
    if (c.size() < 2) continue;  // single-outcome vectors contribute exactly 1
    int n = 0;
    double num = 0.0;
    for (int k : c) {
      n += k;
      num += std::lgamma(static_cast<double>(k) + 1.0);
    }
    if (n == 0) continue;
    const auto kk = static_cast<double>(c.size());
    lp += num - std::lgamma(static_cast<double>(n) + kk) + std::lgamma(kk);
  }
  return lp;
}

int preterminal_reuse(const Derivation& d, const Grammar& g) {
  std::vector<int> occ(g.symbols().size(), 0);
  count_preterminals(d.root, g, occ);
  int extra = 0;
  for (int k : occ) extra += std::max(0, k - 1);
  return extra;
}

double log_parts_prior(const Derivation& d, const Grammar& g) {
  const int extra = preterminal_reuse(d, g);
  if (extra == 0) return 0.0;
  return -static_cast<double>(extra) *
         std::log(static_cast<double>(g.count(SymbolKind::kPreterminal)));
}

double parts_prior(const Derivation& d, const Grammar& g) {
  const int extra = preterminal_reuse(d, g);
  if (extra == 0) return 1.0;
  return std::pow(1.0 / static_cast<double>(g.count(SymbolKind::kPreterminal)), extra);
}

JointPrior joint_prior(const Derivation& d, const Grammar& g) {
  return JointPrior{log_rational_rules_prior(d, g), log_parts_prior(d, g)};
}

}  // namespace fribble
