#include "dce/bayesopt.hpp"

#include <boost/random/sobol.hpp>
#include <spdlog/spdlog.h>

#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <random>

namespace dce {

TuneSpace TuneSpace::box(int dims, double lower, double upper, int budget, std::uint64_t seed) {
  TuneSpace s;
  for (int i = 1; i <= dims; ++i) s.names.push_back("w" + std::to_string(i));
  s.lower = Eigen::VectorXd::Constant(dims, lower);
  s.upper = Eigen::VectorXd::Constant(dims, upper);
  s.budget = budget;
  s.seed = seed;
  return s;
}

void TuneSpace::check() const {
  const int d = dims();
  if (d < 1) throw ConfigError("tune space has no dimensions");
  if (lower.size() != d || upper.size() != d) throw ConfigError("one bound pair per tuned weight");
  if (!lower.allFinite() || !upper.allFinite() || !(lower.array() < upper.array()).all())
    throw ConfigError("tune bounds must be finite with lower < upper");
  if (budget < 2 * d)
    throw ConfigError("tune budget " + std::to_string(budget) + " is below 2 x " + std::to_string(d) + " dimensions");
}

Eigen::MatrixXd shifted_sobol(int dims, int count, std::uint64_t seed) {
  boost::random::sobol engine(static_cast<std::size_t>(dims));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd shift(dims);
  for (auto& s : shift) s = unit(rng);
  Eigen::MatrixXd out(dims, count);
  for (int j = 0; j < count; ++j)
    for (int i = 0; i < dims; ++i) {
      const double u = std::ldexp(static_cast<double>(engine() - engine.min()), -64) + shift(i);
      out(i, j) = u - std::floor(u);
    }
  return out;
}

GaussianProcess<double> fit_gp(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  std::optional<GaussianProcess<double>> best;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < 9; ++i) {
    const double length = std::pow(10.0, -1.0 + 0.25 * i);
    try {
      GaussianProcess<double> gp(x, y, length);
      const double ll = gp.log_marginal_likelihood();
      if (!best || ll > best_ll) {
        best_ll = ll;
        best = std::move(gp);
      }
    } catch (const NumericalError&) {
    }
  }
  if (!best) throw NumericalError("no length scale gives a positive definite kernel");
  return *best;
}

namespace {

double evaluate_point(const Objective& objective, const Eigen::VectorXd& point, double penalty, bool& failed) {
  failed = false;
  try {
    const double v = objective(point);
    if (!std::isnan(v)) return v;
    spdlog::warn("objective returned NaN; recorded as {}", penalty);
  } catch (const std::exception& e) {
    spdlog::warn("objective failed ({}); recorded as {}", e.what(), penalty);
  }
  failed = true;
  return penalty;
}

}  // namespace

TuneResult tune(const Objective& objective, const TuneSpace& space, const TuneOptions& options) {
  space.check();
  if (options.candidates < 1) throw ConfigError("candidate pool must be nonempty");
  const int d = space.dims();
  const Eigen::VectorXd width = space.upper - space.lower;
  auto to_box = [&](const Eigen::VectorXd& unit) -> Eigen::VectorXd {
    return (space.lower + width.cwiseProduct(unit)).cwiseMax(space.lower).cwiseMin(space.upper);
  };

  std::mt19937_64 rng(space.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int initial = 2 * d;
  const Eigen::MatrixXd design = shifted_sobol(d, initial, rng());

  TuneResult result;
  result.best_value = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd observed(d, 0);  // unit-cube coordinates
  Eigen::VectorXd values(0);

  for (int iter = 0; iter < space.budget; ++iter) {
    Eigen::VectorXd u(d);
    if (options.method == TuneMethod::Random) {
      for (auto& x : u) x = unit(rng);
    } else if (iter < initial) {
      u = design.col(iter);
    } else {
      // standardized observations
      const double mean = values.mean();
      const double sd = std::sqrt((values.array() - mean).square().mean());
      const Eigen::VectorXd y = (values.array() - mean) / (sd > 0.0 ? sd : 1.0);
      const auto gp = fit_gp(observed, y);
      const double best = y.minCoeff();
      const Eigen::MatrixXd pool = shifted_sobol(d, options.candidates, rng());
      Eigen::Index pick = 0;
      double top = -1.0;
      for (Eigen::Index c = 0; c < pool.cols(); ++c) {
        const auto post = gp.posterior(pool.col(c));
        const double ei = expected_improvement(post.mean, post.variance, best);
        if (ei > top) {
          top = ei;
          pick = c;
        }
      }
      u = pool.col(pick);
    }

    TuneRecord rec{iter + 1, to_box(u), 0.0, 0.0, false};
    rec.objective = evaluate_point(objective, rec.point, options.failure_penalty, rec.failed);
    if (rec.objective < result.best_value || result.history.empty()) {
      result.best_value = rec.objective;
      result.best_point = rec.point;
    }
    rec.incumbent = result.best_value;
    observed.conservativeResize(Eigen::NoChange, observed.cols() + 1);
    observed.col(observed.cols() - 1) = u;
    values.conservativeResize(values.size() + 1);
    values(values.size() - 1) = rec.objective;
    result.history.push_back(std::move(rec));
  }
  return result;
}

void write_tune_log(const TuneResult& result, const TuneSpace& space, std::ostream& out) {
  out << "iter";
  for (const auto& n : space.names) out << ',' << n;
  out << ",objective,incumbent\n" << std::setprecision(17);
  for (const auto& rec : result.history) {
    out << rec.iter;
    for (double v : rec.point) out << ',' << v;
    out << ',' << rec.objective << ',' << rec.incumbent << '\n';
  }
}

}  // namespace dce
