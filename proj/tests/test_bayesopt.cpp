#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "dce/bayesopt.hpp"

using namespace dce;

TEST_CASE("two-point posterior matches a hand-inverted kernel") {
  Eigen::MatrixXd x(1, 2);
  x << 0.0, 1.0;
  Eigen::VectorXd y(2);
  y << 0.0, 1.0;
  const GaussianProcess<double> gp(x, y, 1.0);

  // closed-form 2x2 inverse
  const double diag = 1.0 + 1e-6 + 1e-8, off = std::exp(-0.5), ks = std::exp(-0.125);
  const double det = diag * diag - off * off;
  const double a0 = (diag * 0.0 - off * 1.0) / det, a1 = (-off * 0.0 + diag * 1.0) / det;
  const double mean = ks * a0 + ks * a1;
  const double quad = (diag * ks * ks - 2 * off * ks * ks + diag * ks * ks) / det;
  Eigen::VectorXd q(1);
  q << 0.5;
  const auto p = gp.posterior(q);
  CHECK(p.mean == doctest::Approx(mean).epsilon(1e-10));
  CHECK(p.variance == doctest::Approx(1.0 - quad).epsilon(1e-8));
}

TEST_CASE("interpolation and reversion to the prior") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd x(2, 6);
  Eigen::VectorXd y(6);
  for (int i = 0; i < 6; ++i) {
    x.col(i) << u(rng), u(rng);
    y(i) = std::sin(3 * x(0, i)) + x(1, i);
  }
  const GaussianProcess<double> gp(x, y, 0.3);
  for (int i = 0; i < 6; ++i) {
    const auto p = gp.posterior(x.col(i));
    CHECK(std::abs(p.mean - y(i)) <= 1e-3);
    CHECK(p.variance <= 1e-4);
  }
  Eigen::VectorXd far(2);
  far << 50.0, -50.0;
  const auto p = gp.posterior(far);
  CHECK(std::abs(p.mean) <= 1e-12);
  CHECK(p.variance == doctest::Approx(1.0));
}

TEST_CASE("marginal likelihood picks a length scale from the grid") {
  Eigen::MatrixXd x(1, 8);
  Eigen::VectorXd y(8);
  for (int i = 0; i < 8; ++i) {
    x(0, i) = i / 7.0;
    y(i) = std::cos(2 * x(0, i));
  }
  const auto gp = fit_gp(x, y);
  bool on_grid = false;
  for (int i = 0; i < 9; ++i) on_grid |= std::abs(gp.length() - std::pow(10.0, -1 + 0.25 * i)) <= 1e-12;
  CHECK(on_grid);
  for (int i = 0; i < 9; ++i) {
    const GaussianProcess<double> other(x, y, std::pow(10.0, -1 + 0.25 * i));
    CHECK(other.log_marginal_likelihood() <= gp.log_marginal_likelihood() + 1e-12);
  }
}

TEST_CASE("expected improvement") {
  CHECK(expected_improvement(0.0, 1.0, 1.0) == doctest::Approx(1.0833).epsilon(1e-4));
  CHECK(expected_improvement(2.0, 0.0, 1.0) == 0.0);
  CHECK(expected_improvement(0.5, 0.0, 1.0) == 0.5);
  CHECK(expected_improvement(1.0, 1.0, 0.0, false) == doctest::Approx(1.0833).epsilon(1e-4));

  // Monte Carlo oracle
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.3, 0.7);
  double acc = 0.0;
  const int draws = 400000;
  for (int i = 0; i < draws; ++i) acc += std::max(0.0, 0.5 - n(rng));
  CHECK(expected_improvement(0.3, 0.49, 0.5) == doctest::Approx(acc / draws).epsilon(5e-3));

  double last = 0.0;
  for (double s : {0.1, 0.5, 1.0, 2.0, 4.0}) {
    const double ei = expected_improvement(1.0, s * s, 1.0);
    CHECK(ei > last);
    last = ei;
  }
}

TEST_CASE("shifted sobol points") {
  const auto a = shifted_sobol(3, 64, 1), b = shifted_sobol(3, 64, 1), c = shifted_sobol(3, 64, 2);
  CHECK(a == b);
  CHECK(a != c);
  CHECK((a.array() >= 0.0).all());
  CHECK((a.array() < 1.0).all());
  // a shifted net stays stratified: 64 points, 8 per eighth of the axis
  const auto plain = shifted_sobol(1, 64, 5);
  Eigen::ArrayXi bins = Eigen::ArrayXi::Zero(8);
  for (int i = 0; i < 64; ++i) ++bins(static_cast<int>(plain(0, i) * 8));
  CHECK((bins == 8).all());
}

namespace {

double bowl(const Eigen::VectorXd& w) { return (w.array() - 3.0).square().sum(); }

}  // namespace

TEST_CASE("tuning a one-dimensional quadratic") {
  auto space = TuneSpace::box(1, 0.0, 1.0, 25, 4);
  space.names = {"w"};
  const auto r = tune([](const Eigen::VectorXd& w) { return (w(0) - 0.3) * (w(0) - 0.3); }, space);
  CHECK(std::abs(r.best_point(0) - 0.3) <= 0.05);
  CHECK(r.history.size() == 25);
}

TEST_CASE("tuning history invariants") {
  const auto space = TuneSpace::box(2, 0.0, 10.0, 15, 9);
  const auto r = tune(bowl, space);
  REQUIRE(r.history.size() == 15);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < r.history.size(); ++i) {
    const auto& rec = r.history[i];
    CHECK(rec.iter == static_cast<int>(i) + 1);
    CHECK((rec.point.array() >= 0.0).all());
    CHECK((rec.point.array() <= 10.0).all());
    CHECK(rec.objective == bowl(rec.point));
    best = std::min(best, rec.objective);
    CHECK(rec.incumbent == best);
    if (i > 0) CHECK(rec.incumbent <= r.history[i - 1].incumbent);
  }
  CHECK(r.best_value == best);

  const auto again = tune(bowl, space);
  for (std::size_t i = 0; i < r.history.size(); ++i) CHECK(again.history[i].point == r.history[i].point);

  std::ostringstream log;
  write_tune_log(r, space, log);
  std::istringstream in(log.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "iter,w1,w2,objective,incumbent");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 15);
}

TEST_CASE("model-based search beats random search on a smooth bowl") {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto space = TuneSpace::box(2, 0.0, 10.0, 20, seed);
    const double bo = tune(bowl, space).best_value;
    const double rs = tune(bowl, space, {.method = TuneMethod::Random}).best_value;
    wins += bo <= rs;
  }
  MESSAGE("wins: " << wins);
  CHECK(wins >= 15);
}

TEST_CASE("flat objectives and failures") {
  const auto space = TuneSpace::box(2, 0.0, 1.0, 8, 1);
  const auto flat = tune([](const Eigen::VectorXd&) { return 2.0; }, space);
  CHECK(flat.best_value == 2.0);
  for (const auto& rec : flat.history) CHECK(rec.incumbent == 2.0);

  int calls = 0;
  const auto r = tune(
      [&](const Eigen::VectorXd& w) {
        if (++calls % 3 == 0) throw NumericalError("diverged");
        if (calls % 4 == 0) return std::numeric_limits<double>::quiet_NaN();
        return 1.0 + w.sum();
      },
      space, {.failure_penalty = 5.0});
  int failed = 0;
  for (const auto& rec : r.history) {
    if (rec.failed) {
      ++failed;
      CHECK(rec.objective == 5.0);
    }
  }
  CHECK(failed == 4);  // calls 3, 4, 6, 8
  CHECK(r.history.size() == 8);
}

TEST_CASE("bad spaces") {
  CHECK_THROWS_AS(tune(bowl, TuneSpace::box(3, 0.0, 1.0, 5, 0)), ConfigError);
  CHECK_THROWS_AS(tune(bowl, TuneSpace::box(1, 1.0, 1.0, 5, 0)), ConfigError);
  CHECK_THROWS_AS(tune(bowl, TuneSpace::box(0, 0.0, 1.0, 5, 0)), ConfigError);
}
