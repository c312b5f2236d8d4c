#include <random>

#include "doctest.h"
#include "dce/rules.hpp"
#include "fixtures.hpp"

using namespace dce;
using namespace dce::testing;

namespace {

KnowledgeBase corpus_kb() {
  KnowledgeBase kb;
  for (const char* rel : {"hasFeature", "indicates", "hasFeature1", "indicates1", "hasFeature2", "indicates2",
                          "near", "predictT", "predictR", "hasType", "hasExample", "inPair"})
    kb.declare_relation(rel);
  return kb;
}

}  // namespace

TEST_CASE("classifier rule parses") {
  const Program p = parse_program(kClassifierRules);
  REQUIRE(p.rules.size() == 1);
  const Rule& r = p.rules[0];
  CHECK(r.head == Atom{"predict", "X", "Y"});
  REQUIRE(r.body.size() == 2);
  CHECK(r.body[0].predicate == "hasFeature");
  CHECK(r.body[1].predicate == "indicates");
}

TEST_CASE("recursive rules parse in order") {
  const Program p = parse_program("sim(X1,X3) :- near(X1,X3).\nsim(X1,X3) :- near(X1,X2), sim(X2,X3).");
  REQUIRE(p.rules.size() == 2);
  CHECK(p.rules[1].body.back().predicate == "sim");
}

TEST_CASE("both implication symbols and comments") {
  const Program a = parse_program("p(X,Y) <- q(X,Y). % trailing\n% whole line\n");
  const Program b = parse_program("p(X,Y)\n  :- q(X,Y).");
  CHECK(a == b);
}

TEST_CASE("syntax errors") {
  CHECK_THROWS_AS(parse_program("p(X) :- q(X)."), ArityError);
  CHECK_THROWS_AS(parse_program("p(X,Y,Z) :- q(X,Y)."), ArityError);
  CHECK_THROWS_AS(parse_program("p(X,Y) :- q(X,Y)"), ParseError);
  CHECK_THROWS_AS(parse_program("p(X,y) :- q(X,y)."), ParseError);
  CHECK_THROWS_AS(parse_program("p(X,Y)."), ParseError);
  CHECK_THROWS_AS(parse_program("#frobnicate p"), ParseError);
  CHECK_THROWS_AS(parse_program("#maxdepth sim two"), ParseError);
  CHECK_THROWS_AS(parse_program("#maxdepth sim 2\n#maxdepth sim 3"), ParseError);
  CHECK_THROWS_AS(parse_program("p(X,Y) :- q(X,Y) ; r(X,Y)."), ParseError);
}

TEST_CASE("parse errors are deterministic and located") {
  const std::string text = "p(X,Y) :- q(X,Y).\n\n  r(X) :- s(X,Y).";
  int first_line = 0, first_col = 0;
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      parse_program(text);
      FAIL("expected an arity error");
    } catch (const ArityError& e) {
      if (attempt == 0) {
        first_line = e.line();
        first_col = e.column();
      } else {
        CHECK(e.line() == first_line);
        CHECK(e.column() == first_col);
      }
    }
  }
  CHECK(first_line == 3);
  CHECK(first_col == 3);
}

TEST_CASE("directives") {
  const Program p = parse_program(
      "#trainable indicates hasFeature.tail labels init=uniform:0.01\n"
      "#builtin entropy\n#softmax predict\n#maxdepth sim 2\n");
  REQUIRE(p.trainable.size() == 1);
  CHECK(p.trainable[0].init.kind == InitSpec::Kind::Uniform);
  CHECK(p.is_softmax("predict"));
  CHECK(p.depth_of("sim") == 2);
  CHECK_FALSE(p.depth_of("predict").has_value());
}

TEST_CASE("validation accepts every rule of the corpus") {
  const KnowledgeBase kb = corpus_kb();
  const auto vp = validate_program(parse_program(rule_corpus()), kb);
  CHECK(vp.recursive.contains("sim"));
  CHECK(vp.recursive.contains("hasExampleSet"));
  CHECK_FALSE(vp.recursive.contains("predict"));
}

TEST_CASE("entropy rule validates") {
  const KnowledgeBase kb = corpus_kb();
  CHECK_NOTHROW(validate_program(parse_program(kClassifierRules + kErRule), kb));
}

TEST_CASE("co-linked rule is a chain of three") {
  const KnowledgeBase kb = corpus_kb();
  const auto vp = validate_program(parse_program(kColperRules + kClassifierRules), kb);
  CHECK(vp.program.rules[2].body.size() == 3);
  CHECK(vp.is_recursive_rule(vp.program.rules[2]));
  CHECK_FALSE(vp.is_recursive_rule(vp.program.rules[1]));
}

TEST_CASE("chain violations") {
  const KnowledgeBase kb = corpus_kb();
  try {
    validate_program(parse_program("p(X,Y) :- near(Z,W)."), kb);
    FAIL("expected ChainError");
  } catch (const ChainError& e) {
    CHECK(std::string(e.what()).find("'Z'") != std::string::npos);
  }
  CHECK_THROWS_AS(validate_program(parse_program("p(X,Y) :- near(X,Z)."), kb), ChainError);
  CHECK_THROWS_AS(validate_program(parse_program("p(X,Y) :- near(X,X), near(X,Y)."), kb), ChainError);
  CHECK_THROWS_AS(validate_program(parse_program("p(X,X) :- near(X,X)."), kb), ChainError);
}

TEST_CASE("builtin placement and unknown predicates") {
  const KnowledgeBase kb = corpus_kb();
  CHECK_THROWS_AS(validate_program(parse_program("p(X,Y) :- entropy(X,Z), near(Z,Y)."), kb), BuiltinPositionError);
  CHECK_THROWS_AS(validate_program(parse_program("entropy(X,Y) :- near(X,Y)."), kb), BuiltinPositionError);
  CHECK_THROWS_AS(validate_program(parse_program("p(X,Y) :- missing(X,Y)."), kb), UnknownPredicateError);
  CHECK_THROWS_AS(validate_program(parse_program("#softmax nope\np(X,Y) :- near(X,Y)."), kb),
                  UnknownPredicateError);
  CHECK_THROWS_AS(validate_program(parse_program("#builtin sqrt\np(X,Y) :- near(X,Y)."), kb),
                  UnknownPredicateError);
}

TEST_CASE("mutual recursion forms one component") {
  const KnowledgeBase kb = corpus_kb();
  const auto vp = validate_program(
      parse_program("a(X,Y) :- near(X,Y).\na(X,Y) :- near(X,Z), b(Z,Y).\nb(X,Y) :- a(X,Y).\nc(X,Y) :- a(X,Y)."),
      kb);
  CHECK(vp.recursive.contains("a"));
  CHECK(vp.recursive.contains("b"));
  CHECK_FALSE(vp.recursive.contains("c"));
  CHECK(vp.same_component("a", "b"));
}

TEST_CASE("format round trip on the corpus") {
  const Program fig1 = parse_program("#softmax predict\n#trainable indicates hasFeature.tail labels\n" +
                                     kClassifierRules);
  CHECK(parse_program(format_program(fig1)) == fig1);
  const Program all = parse_program("#maxdepth sim 3\n#builtin entropy\n" + rule_corpus());
  CHECK(parse_program(format_program(all)) == all);
  CHECK(format_program(parse_program(format_program(all))) == format_program(all));
}

TEST_CASE("format round trip on random programs") {
  std::mt19937_64 rng(2024);
  const std::vector<std::string> preds{"p", "q", "near", "hasFeature", "sim_2", "Foo"};
  for (int trial = 0; trial < 200; ++trial) {
    Program p;
    const int rules = 1 + static_cast<int>(rng() % 5);
    for (int r = 0; r < rules; ++r) {
      Rule rule;
      const int len = 1 + static_cast<int>(rng() % 4);
      std::vector<std::string> vars{"X"};
      for (int i = 1; i < len; ++i) vars.push_back("V" + std::to_string(i));
      vars.push_back("Y");
      rule.head = {preds[rng() % preds.size()], "X", "Y"};
      for (int i = 0; i < len; ++i) rule.body.push_back({preds[rng() % preds.size()], vars[i], vars[i + 1]});
      p.rules.push_back(rule);
    }
    if (rng() % 2) p.softmax.push_back("p");
    if (rng() % 2) p.maxdepth.push_back({"q", 1 + static_cast<int>(rng() % 4)});
    if (rng() % 2) p.trainable.push_back({"w", "a.head", "b.tail", InitSpec::parse("uniform:0.5")});
    const Program once = parse_program(format_program(p));
    CHECK(once == p);
  }
}

TEST_CASE("directives apply to the knowledge base") {
  KnowledgeBase kb = testing::toy_kb(false);
  kb.define_domain("labels", {kb.entity("accept"), kb.entity("reject")});
  const Program p = parse_program("#trainable indicates hasFeature.tail labels init=zeros\n#softmax indicates\n");
  apply_directives(p, kb);
  kb.freeze();
  CHECK(kb.relation("indicates").trainable);
  CHECK(kb.relation("indicates").softmax_output);
  CHECK(kb.parameter_count() == 4);
  CHECK(*kb.weight("indicates", kb.entity("pars"), kb.entity("accept")) == 0.0);
}
