#include <cmath>
#include <map>
#include <set>

#include "doctest.h"

#include "fribble/grammar.hpp"
#include "support.hpp"

using namespace fribble;

namespace {

Grammar fribble_grammar() { return Grammar::load(test::data_dir() / "fribble.grammar"); }

DerivationNode build(const Grammar& g, SymbolId s, const std::vector<int>& alts, std::size_t& pos) {
  DerivationNode n{s, -1, {}};
  if (g.is_terminal(s)) return n;
  n.production = g.alternatives(s)[static_cast<std::size_t>(alts.at(pos++))];
  for (SymbolId c : g.production(n.production).rhs) n.children.push_back(build(g, c, alts, pos));
  return n;
}

// Derivation from per-node alternative indices in preorder.
Derivation choose(const Grammar& g, const std::vector<int>& alts) {
  std::size_t pos = 0;
  Derivation d{build(g, g.start(), alts, pos)};
  REQUIRE(pos == alts.size());
  return d;
}

Derivation fribble_canonical(const Grammar& g) {
  // F -> N P5; N -> M M M M; M -> M1..M4; one terminal each (the first of M1..M4).
  return choose(g, {0, 3, 0, 0, 1, 0, 2, 0, 3, 0});
}

double log_beta_ratio(const std::vector<int>& c) {
  double s = 0.0, n = 0.0;
  for (int x : c) {
    s += std::lgamma(x + 1.0);
    n += x;
  }
  return s - std::lgamma(n + c.size()) + std::lgamma(static_cast<double>(c.size()));
}

}  // namespace

TEST_CASE("shipped grammar transcribes the fribble rules") {
  const Grammar g = fribble_grammar();
  CHECK(g.symbol(g.start()).name == "F");
  CHECK(g.count(SymbolKind::kNonterminal) + g.count(SymbolKind::kPreterminal) == 6);
  std::set<std::string> nts;
  for (SymbolId s : g.symbols_of_kind(SymbolKind::kNonterminal)) nts.insert(g.symbol(s).name);
  for (SymbolId s : g.symbols_of_kind(SymbolKind::kPreterminal)) nts.insert(g.symbol(s).name);
  CHECK(nts == std::set<std::string>{"N", "M", "M1", "M2", "M3", "M4"});
  CHECK(g.count(SymbolKind::kPreterminal) == 4);
  // The rule figure lists 46 distinct terminals (P41 never appears).
  CHECK(g.count(SymbolKind::kTerminal) == 46);
  CHECK_FALSE(g.find("P41").has_value());
  CHECK(g.alternatives(g.id("M1")).size() == 11);
  CHECK(g.alternatives(g.id("M2")).size() == 11);
  CHECK(g.alternatives(g.id("M3")).size() == 11);
  CHECK(g.alternatives(g.id("M4")).size() == 12);
  CHECK(g.alternatives(g.id("N")).size() == 4);
}

TEST_CASE("trivial grammars") {
  const Grammar one = Grammar::parse("S -> a");
  CHECK(one.symbols().size() == 2);
  CHECK(one.count(SymbolKind::kTerminal) == 1);
  REQUIRE(one.productions().size() == 1);
  CHECK(one.production(0).probability == 1.0);

  const Grammar two = Grammar::parse("S -> a | b");
  REQUIRE(two.productions().size() == 2);
  CHECK(two.production(0).probability == 0.5);
  CHECK(two.production(1).probability == 0.5);
  CHECK(two.symbol(two.start()).kind == SymbolKind::kStart);
}

TEST_CASE("weighted alternatives and comments") {
  const Grammar g = Grammar::parse("# toy\nS -> a [0.7] | b [0.3]  # biased\n");
  CHECK(g.production(0).probability == doctest::Approx(0.7));
  CHECK(g.production(1).probability == doctest::Approx(0.3));
}

TEST_CASE("parse errors") {
  auto line_of = [](const char* text) {
    try {
      Grammar::parse(text);
    } catch (const GrammarError& e) {
      return e.line();
    }
    return -1;
  };
  CHECK(line_of("S -> a\nT b c\n") == 2);
  CHECK(line_of("S -> a [0.5] | b [0.4]") == 1);
  CHECK(line_of("S -> a [0.5] | b") == 1);
  CHECK(line_of("S -> A\nA -> b\nA ->") == 3);
  CHECK_THROWS_AS(Grammar::parse("S -> a\nT -> b"), GrammarError);  // unreachable
  CHECK_THROWS_AS(Grammar::parse("S -> S a"), GrammarError);        // never terminates
  CHECK_THROWS_AS(Grammar::parse("   \n# nothing\n"), GrammarError);
  CHECK_THROWS_AS(Grammar::parse("a b -> c"), GrammarError);
}

TEST_CASE("probabilities sum to one per left-hand side") {
  for (const char* name : {"toy_slots.grammar", "toy_reuse.grammar", "toy_bias.grammar"}) {
    const Grammar g = Grammar::load(test::test_data(name));
    for (std::size_t s = 0; s < g.symbols().size(); ++s) {
      if (g.is_terminal(static_cast<SymbolId>(s))) continue;
      double sum = 0.0;
      for (int p : g.alternatives(static_cast<SymbolId>(s))) sum += g.production(p).probability;
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
  const Grammar g = fribble_grammar();
  for (SymbolId s : g.symbols_of_kind(SymbolKind::kPreterminal)) {
    double sum = 0.0;
    for (int p : g.alternatives(s)) sum += g.production(p).probability;
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("serialization round-trips") {
  for (const char* name : {"toy_slots.grammar", "toy_reuse.grammar", "toy_bias.grammar"}) {
    const Grammar g = Grammar::load(test::test_data(name));
    CHECK(Grammar::parse(g.to_text()) == g);
  }
  const Grammar g = fribble_grammar();
  const Grammar back = Grammar::parse(g.to_text());
  CHECK(back == g);
  for (std::size_t i = 0; i < g.productions().size(); ++i) {
    CHECK(back.production(static_cast<int>(i)).probability == g.production(static_cast<int>(i)).probability);
  }
}

TEST_CASE("sampling") {
  SUBCASE("single rule is deterministic") {
    const Grammar g = Grammar::parse("S -> a");
    Rng rng(3);
    for (int i = 0; i < 10; ++i) CHECK(canonical_id(sample_derivation(g, rng)) == "0");
  }
  SUBCASE("uniform pair converges") {
    const Grammar g = Grammar::parse("S -> a | b");
    Rng rng(11);
    int a = 0;
    for (int i = 0; i < 100000; ++i) a += terminal_names(sample_derivation(g, rng), g)[0] == "a";
    CHECK(std::abs(a / 100000.0 - 0.5) < 0.01);
  }
  SUBCASE("production frequencies converge to the weights") {
    const Grammar g = Grammar::load(test::test_data("toy_bias.grammar"));
    Rng rng(5);
    std::vector<double> uses(g.productions().size(), 0.0);
    std::map<SymbolId, double> lhs_uses;
    for (int i = 0; i < 100000; ++i) {
      const auto counts = count_productions(sample_derivation(g, rng), g);
      for (std::size_t s = 0; s < counts.size(); ++s) {
        for (std::size_t a = 0; a < counts[s].size(); ++a) {
          uses[static_cast<std::size_t>(g.alternatives(static_cast<SymbolId>(s))[a])] += counts[s][a];
          lhs_uses[static_cast<SymbolId>(s)] += counts[s][a];
        }
      }
    }
    // X's recursion is truncated at depth 12, which shifts its frequencies by
    // about 0.3^11 (negligible).
    for (std::size_t p = 0; p < uses.size(); ++p) {
      const Production& prod = g.production(static_cast<int>(p));
      CHECK(std::abs(uses[p] / lhs_uses[prod.lhs] - prod.probability) < 0.01);
    }
  }
  SUBCASE("seeded sampling repeats") {
    const Grammar g = fribble_grammar();
    Rng a(42), b(42);
    for (int i = 0; i < 20; ++i) CHECK(sample_derivation(g, a) == sample_derivation(g, b));
  }
  SUBCASE("samples are valid, bounded and nonempty") {
    const Grammar g = fribble_grammar();
    Rng rng(9);
    for (int i = 0; i < 500; ++i) {
      const Derivation d = sample_derivation(g, rng);
      CHECK_NOTHROW(validate(d, g));
      CHECK(depth(d.root) <= kDefaultMaxDepth);
      const auto y = terminal_yield(d);
      CHECK(!y.empty());
      CHECK(g.symbol(y.back()).name == "P5");
    }
  }
  SUBCASE("max depth below the minimum is rejected") {
    const Grammar g = fribble_grammar();
    Rng rng(1);
    CHECK(g.min_depth(g.start()) == 4);
    CHECK_THROWS_AS(sample_derivation(g, rng, 3), std::invalid_argument);
    CHECK_NOTHROW(sample_derivation(g, rng, 4));
  }
}

TEST_CASE("depth exhaustion reports failure") {
  // S almost always recurses; with a budget of 2 every retry runs out.
  const Grammar g = Grammar::parse("S -> S S [0.999999] | a [0.000001]");
  Rng rng(2);
  CHECK_THROWS_AS(sample_subtree(g, g.start(), rng, 2), DepthExceeded);
}

TEST_CASE("canonical ids identify trees") {
  const Grammar g = fribble_grammar();
  Rng rng(4);
  std::map<std::string, Derivation> seen;
  for (int i = 0; i < 300; ++i) {
    const Derivation d = sample_derivation(g, rng);
    const std::string id = canonical_id(d);
    CHECK(derivation_from_id(g, id) == d);
    auto [it, inserted] = seen.emplace(id, d);
    if (!inserted) CHECK(it->second == d);
  }
  CHECK_THROWS(derivation_from_id(g, "0.3"));
  CHECK_THROWS(derivation_from_id(g, "1"));
  CHECK_THROWS(derivation_from_id(g, "0.x"));
}

TEST_CASE("derivation probability") {
  SUBCASE("deterministic grammar") {
    const Grammar g = Grammar::parse("S -> A b\nA -> c d");
    Rng rng(1);
    CHECK(derivation_prob(sample_derivation(g, rng), g) == 1.0);
  }
  SUBCASE("canonical fribble derivation") {
    const Grammar g = fribble_grammar();
    const Derivation d = fribble_canonical(g);
    CHECK(terminal_names(d, g) == std::vector<std::string>{"P4", "P1", "P2", "P3", "P5"});
    const auto golden = test::read_json(test::golden("prior_values.json")).at("fribble_derivation_prob");
    CHECK(golden.at("denominator").get<long>() == 16355328);
    CHECK(derivation_prob(d, g) == doctest::Approx(golden.at("value").get<double>()).epsilon(1e-12));
  }
  SUBCASE("extending a derivation never raises it") {
    const Grammar g = fribble_grammar();
    const Derivation base = fribble_canonical(g);
    // N -> N M with the old N below: a strict extension.
    const Derivation ext = choose(g, {0, 0, 3, 0, 0, 1, 0, 2, 0, 3, 0, 0, 5});
    CHECK(derivation_prob(ext, g) < derivation_prob(base, g));
  }
}

TEST_CASE("rational rules prior") {
  const Grammar g = Grammar::parse("S -> a | b");
  SUBCASE("one use of S -> a") {
    CHECK(rational_rules_prior(choose(g, {0}), g) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("closed form for count vectors") {
    CHECK(std::exp(log_rational_rules_prior(ProductionCounts{{2, 0}})) ==
          doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("deterministic grammar gives 1") {
    const Grammar det = Grammar::parse("S -> A A\nA -> b");
    CHECK(rational_rules_prior(choose(det, {0, 0, 0}), det) == 1.0);
  }
  SUBCASE("matches the Gamma-function oracle") {
    const auto cases = test::read_json(test::golden("prior_values.json")).at("rational_rules");
    CHECK(cases.size() >= 40);
    for (const auto& c : cases) {
      const auto counts = c.at("counts").get<ProductionCounts>();
      const double log_v = log_rational_rules_prior(counts);
      const double want = c.at("log_value").get<double>();
      CHECK(std::abs(log_v - want) <= 1e-9 * std::max(1.0, std::abs(want)));
      CHECK(std::abs(std::exp(log_v) - c.at("value").get<double>()) <=
            1e-9 * c.at("value").get<double>());
    }
  }
  SUBCASE("agrees with lgamma for counts up to 20") {
    for (int a = 0; a <= 20; ++a) {
      for (int b = 0; b <= 20; b += 3) {
        const std::vector<int> c = {a, b, 20 - a};
        CHECK(log_rational_rules_prior(ProductionCounts{c}) ==
              doctest::Approx(log_beta_ratio(c)).epsilon(1e-9));
      }
    }
  }
  SUBCASE("counts come from a tree walk") {
    const Grammar f = fribble_grammar();
    const auto counts = count_productions(fribble_canonical(f), f);
    CHECK(counts[static_cast<std::size_t>(f.id("M"))] == std::vector<int>{1, 1, 1, 1});
    CHECK(counts[static_cast<std::size_t>(f.id("N"))] == std::vector<int>{0, 0, 0, 1});
    CHECK(counts[static_cast<std::size_t>(f.id("F"))] == std::vector<int>{1});
  }
}

TEST_CASE("parts prior") {
  const Grammar g = fribble_grammar();
  // Ms of N -> M M M M choose these preterminals (0-based), then the first terminal.
  auto with_slots = [&](std::vector<int> slots) {
    std::vector<int> alts = {0, 3};
    for (int s : slots) {
      alts.push_back(s);
      alts.push_back(0);
    }
    return choose(g, alts);
  };
  CHECK(parts_prior(with_slots({0, 1, 2, 3}), g) == 1.0);
  CHECK(parts_prior(with_slots({0, 0, 2, 3}), g) == 0.25);
  // M1 twice and M2 three times needs a five-M derivation: N -> N M over N -> M M M M.
  const Derivation d = choose(g, {0, 0, 3, 0, 0, 0, 0, 1, 0, 1, 0, 1, 0});
  CHECK(preterminal_reuse(d, g) == 3);
  CHECK(parts_prior(d, g) == 1.0 / 64.0);
  CHECK(std::exp(log_parts_prior(d, g)) == doctest::Approx(1.0 / 64.0).epsilon(1e-15));

  SUBCASE("unity exactly when nothing is reused") {
    Rng rng(8);
    for (int i = 0; i < 300; ++i) {
      const Derivation s = sample_derivation(g, rng);
      std::map<SymbolId, int> uses;
      std::vector<const DerivationNode*> stack = {&s.root};
      while (!stack.empty()) {
        const DerivationNode* n = stack.back();
        stack.pop_back();
        if (g.symbol(n->symbol).kind == SymbolKind::kPreterminal) ++uses[n->symbol];
        for (const auto& c : n->children) stack.push_back(&c);
      }
      bool reused = false;
      for (const auto& [sym, n] : uses) reused |= n > 1;
      CHECK((parts_prior(s, g) == 1.0) == !reused);
    }
  }
}

TEST_CASE("joint prior composes its factors") {
  const Grammar g = fribble_grammar();
  const Derivation plain = fribble_canonical(g);
  CHECK(joint_prior(plain, g).value() == doctest::Approx(rational_rules_prior(plain, g)).epsilon(1e-14));
  const Derivation reuse = choose(g, {0, 3, 0, 0, 0, 1, 2, 0, 3, 0});
  CHECK(joint_prior(reuse, g).value() ==
        doctest::Approx(rational_rules_prior(reuse, g) * 0.25).epsilon(1e-12));
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    const Derivation d = sample_derivation(g, rng);
    const JointPrior p = joint_prior(d, g);
    CHECK(std::abs(p.log_value() - (log_rational_rules_prior(d, g) + log_parts_prior(d, g))) <= 1e-12);
  }
}

TEST_CASE("terminal yields") {
  const Grammar one = Grammar::parse("S -> a");
  CHECK(terminal_names(choose(one, {0}), one) == std::vector<std::string>{"a"});
}

TEST_CASE("validate rejects malformed trees") {
  const Grammar g = fribble_grammar();
  Derivation d = fribble_canonical(g);
  CHECK_NOTHROW(validate(d, g));
  Derivation bad = d;
  bad.root.children.pop_back();
  CHECK_THROWS_AS(validate(bad, g), std::invalid_argument);
  bad = d;
  bad.root.children[1].symbol = g.id("P4");
  CHECK_THROWS_AS(validate(bad, g), std::invalid_argument);
}
