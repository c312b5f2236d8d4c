#include <random>

#include "doctest.h"
#include "dce/engine.hpp"
#include "dce/numeric.hpp"
#include "fixtures.hpp"

using namespace dce;
using namespace dce::testing;

TEST_CASE("tsallis entropy values") {
  const auto one = tsallis_entropy_pair(Eigen::Vector3d(1, 0, 0));
  CHECK(one.high == 0.0);
  CHECK(one.low == 1.0);
  const auto half = tsallis_entropy_pair(Eigen::Vector2d(0.5, 0.5));
  CHECK(half.high == 0.5);
  CHECK(half.low == 0.5);
  const auto skew = tsallis_entropy_pair(Eigen::Vector2d(0.9, 0.1));
  CHECK(std::abs(skew.high - 0.18) <= 1e-12);
  CHECK(std::abs(skew.low - 0.82) <= 1e-12);
  CHECK_THROWS_AS(tsallis_entropy_pair(Eigen::Vector2d(0.7, 0.7)), NormalizationError);
  CHECK_THROWS_AS(tsallis_entropy_pair(Eigen::Vector2d(1.5, -0.5)), NormalizationError);
}

TEST_CASE("tsallis entropy bounds") {
  std::mt19937_64 rng(1);
  std::gamma_distribution<double> gamma(0.7, 1.0);
  for (int k = 1; k <= 12; ++k) {
    const auto uniform = tsallis_entropy_pair(Eigen::VectorXd::Constant(k, 1.0 / k));
    CHECK(std::abs(uniform.high - (1.0 - 1.0 / k)) <= 1e-12);
    for (int trial = 0; trial < 50; ++trial) {
      Eigen::VectorXd p(k);
      for (auto& v : p) v = gamma(rng);
      p /= p.sum();
      const auto e = tsallis_entropy_pair(p);
      CHECK(e.high >= -1e-15);
      CHECK(e.high <= 1.0 - 1.0 / k + 1e-12);
      CHECK(e.high + e.low == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("masked softmax") {
  Eigen::RowVector3d scores(std::log(2.0), std::log(1.0), 100.0);
  Eigen::Array<bool, 1, 3> mask(true, true, false);
  const auto p = softmax_masked(scores, mask);
  CHECK(p(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(p(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(p(2) == 0.0);

  Eigen::VectorXd equal = Eigen::VectorXd::Constant(5, 3.3);
  const auto u = softmax_masked(equal, Eigen::Array<bool, 5, 1>::Constant(true));
  for (auto v : u) CHECK(v == doctest::Approx(0.2));

  CHECK_THROWS_AS(softmax_masked(scores, Eigen::Array<bool, 1, 3>::Constant(false)), EmptySupportError);
}

TEST_CASE("masked softmax is shift invariant and normalized") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> gauss(0.0, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd s(8);
    Eigen::Array<bool, Eigen::Dynamic, 1> mask(8);
    for (int i = 0; i < 8; ++i) {
      s(i) = gauss(rng);
      mask(i) = rng() % 3 != 0;
    }
    mask(trial % 8) = true;
    const auto p = softmax_masked(s, mask);
    const auto q = softmax_masked((s.array() + gauss(rng)).matrix().eval(), mask);
    CHECK((p - q).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(std::abs(p.sum() - 1.0) <= 1e-12);
  }
}

TEST_CASE("cross entropy") {
  CHECK(cross_entropy_loss(Eigen::Vector2d(1.0, 0.0), 0).loss == doctest::Approx(0.0).epsilon(1e-11));
  CHECK(cross_entropy_loss(Eigen::Vector2d(0.5, 0.5), 1).loss == doctest::Approx(std::log(2.0)));
  CHECK(cross_entropy_loss(Eigen::Vector2d(0.18, 0.82), 1).loss == doctest::Approx(-std::log(0.82)));
  CHECK(cross_entropy_loss(Eigen::Vector2d(0.18, 0.82), 1).loss == doctest::Approx(0.1985).epsilon(1e-4));
  const auto off = cross_entropy_loss(Eigen::Vector2d(1.0, 0.0), 1);
  CHECK(off.off_support);
  CHECK(off.loss == doctest::Approx(-std::log(kEpsilon)));
}

TEST_CASE("l1 normalization conserves mass") {
  Eigen::RowVector4d x(0.2, 0.0, 1.3, 0.5);
  CHECK(std::abs(l1_normalize(x).sum() - 1.0) <= 1e-12);
}

namespace {

struct Classifier {
  KnowledgeBase kb;
  std::vector<EntityId> docs;
  std::vector<EntityId> labels;
};

/// Random documents over 6 features, trainable indicates over 3 labels.
Classifier random_classifier(std::uint64_t seed, InitSpec init) {
  std::mt19937_64 rng(seed);
  Classifier c;
  std::vector<EntityId> feats;
  for (int i = 0; i < 5; ++i) c.docs.push_back(c.kb.intern("d" + std::to_string(i)));
  for (int i = 0; i < 6; ++i) feats.push_back(c.kb.intern("f" + std::to_string(i)));
  for (int i = 0; i < 3; ++i) c.labels.push_back(c.kb.intern("y" + std::to_string(i)));
  std::uniform_real_distribution<double> w(0.1, 1.0);
  for (EntityId d : c.docs) {
    c.kb.add_fact("hasFeature", d, feats[rng() % feats.size()], w(rng));
    c.kb.add_fact("hasFeature", d, feats[rng() % feats.size()], w(rng));
  }
  for (EntityId a : c.docs)
    for (EntityId b : c.docs)
      if (a == b || rng() % 3 == 0) c.kb.add_fact("near", a, b, a == b ? 1.0 : w(rng));
  init.seed = seed;
  c.kb.declare_trainable("indicates", feats, c.labels, init);
  c.kb.freeze();
  return c;
}

}  // namespace

TEST_CASE("zero-initialized classifier starts at ln k") {
  Classifier c = random_classifier(1, InitSpec{});
  const Plan plan = compile(validate_program(parse_program("#softmax predict\n" + kClassifierRules), c.kb),
                            "predict", c.kb);
  std::vector<EntityId> targets(c.docs.size(), c.labels[0]);
  const auto r = forward_backward(plan, c.kb, c.docs, targets);
  CHECK(r.loss == doctest::Approx(std::log(3.0)));
  CHECK(r.used == c.docs.size());
}

TEST_CASE("a repeated example has the single-example gradient") {
  Classifier c = random_classifier(2, InitSpec::parse("uniform:0.5"));
  const Plan plan = compile(validate_program(parse_program("#softmax predict\n" + kClassifierRules), c.kb),
                            "predict", c.kb);
  const std::vector<EntityId> one{c.docs[1]}, one_t{c.labels[2]};
  const std::vector<EntityId> four(4, c.docs[1]), four_t(4, c.labels[2]);
  const auto a = forward_backward(plan, c.kb, one, one_t);
  const auto b = forward_backward(plan, c.kb, four, four_t);
  CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-14));
  CHECK((a.gradients.at("indicates") - b.gradients.at("indicates")).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("empty-support examples are skipped") {
  KnowledgeBase kb = toy_kb(false);
  const EntityId lonely = kb.intern("nobody");
  kb.freeze();
  const Plan plan = compile(validate_program(parse_program("#softmax predict\n" + kClassifierRules), kb), "predict", kb);
  const std::vector<EntityId> q{kb.entity("x1"), lonely}, t{kb.entity("accept"), kb.entity("accept")};
  const auto r = forward_backward(plan, kb, q, t);
  CHECK(r.skipped == 1);
  CHECK(r.used == 1);
  CHECK(r.loss == doctest::Approx(std::log(2.0)));
}

TEST_CASE("analytic gradients match finite differences") {
  const std::vector<std::pair<std::string, std::string>> programs{
      {"#softmax predict\n" + kClassifierRules, "predict"},
      {"#softmax predict\n" + kClassifierRules + kErRule, "predictionHasEntropy"},
      {"#softmax predict\n" + kClassifierRules + kNberRule, "neighborPredictionsHaveEntropy"},
      {"#softmax predict\n#maxdepth sim 3\n" + kClassifierRules + kLperRules, "nearbyPredictionsHaveEntropy"},
      {"#softmax predict\n#maxdepth sim 2\n" + kClassifierRules + kColperRules, "nearbyPredictionsHaveEntropy"},
      {kClassifierRules + kNberRule, "neighborPredictionsHaveEntropy"},
  };
  for (std::uint64_t seed = 1; seed <= 3; ++seed)
    for (const auto& [text, target] : programs) {
      Classifier c = random_classifier(seed, InitSpec::parse("uniform:1.0"));
      const Plan plan = compile(validate_program(parse_program(text), c.kb), target, c.kb);
      std::vector<EntityId> targets;
      for (std::size_t i = 0; i < c.docs.size(); ++i)
        targets.push_back(target == "predict" ? c.labels[i % 3] : kLow);
      const double err = grad_check(plan, c.kb, c.docs, targets);
      INFO(target, " seed ", seed);
      CHECK(err < 1e-4);
    }
}

TEST_CASE("evaluation is deterministic") {
  Classifier c = random_classifier(8, InitSpec::parse("uniform:1.0"));
  const Plan plan = compile(validate_program(parse_program("#softmax predict\n" + kClassifierRules + kNberRule), c.kb),
                            "neighborPredictionsHaveEntropy", c.kb);
  const std::vector<EntityId> t(c.docs.size(), kLow);
  const auto a = forward_backward(plan, c.kb, c.docs, t);
  const auto b = forward_backward(plan, c.kb, c.docs, t);
  CHECK(a.loss == b.loss);
  CHECK(a.gradients.at("indicates") == b.gradients.at("indicates"));
}
