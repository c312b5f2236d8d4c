#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <algorithm>
#include <functional>
#include <iosfwd>
#include <numbers>
#include <string>
#include <vector>

#include "dce/errors.hpp"

namespace dce {

/// Box-bounded search space over named weights.
struct TuneSpace {
  std::vector<std::string> names;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  int budget = 30;
  std::uint64_t seed = 0;

  /// names w1..wd on [lower, upper]^d.
  static TuneSpace box(int dims, double lower = 0.0, double upper = 10.0, int budget = 30, std::uint64_t seed = 0);
  int dims() const { return static_cast<int>(names.size()); }
  void check() const;  // ConfigError
};

template <typename Scalar>
struct Posterior {
  Scalar mean;
  Scalar variance;
};

/// Squared-exponential kernel s2 * exp(-|a - b|^2 / (2 l^2)).
template <typename Scalar, typename A, typename B>
Scalar se_kernel(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b, Scalar length, Scalar signal) {
  return signal * std::exp(-(a - b).squaredNorm() / (Scalar(2) * length * length));
}

/// Zero-mean GP regression with an SE kernel. Columns of X are points.
template <typename Scalar>
class GaussianProcess {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  static constexpr Scalar kJitter = Scalar(1e-8);

  GaussianProcess(Matrix x, Vector y, Scalar length, Scalar signal = 1, Scalar noise = Scalar(1e-6))
      : x_(std::move(x)), y_(std::move(y)), length_(length), signal_(signal), noise_(noise) {
    if (x_.cols() < 1 || x_.cols() != y_.size()) throw ConfigError("GP needs one value per observed point");
    if (!(length_ > 0) || !(signal_ > 0) || !(noise_ >= 0)) throw ConfigError("GP hyperparameters must be positive");
    const Eigen::Index n = x_.cols();
    Matrix k(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j <= i; ++j) k(i, j) = k(j, i) = se_kernel(x_.col(i), x_.col(j), length_, signal_);
    k.diagonal().array() += noise_ + kJitter;
    llt_.compute(k);
    if (llt_.info() != Eigen::Success) throw NumericalError("kernel matrix is not positive definite");
    alpha_ = llt_.solve(y_);
  }

  template <typename P>
  Posterior<Scalar> posterior(const Eigen::MatrixBase<P>& point) const {
    Vector k(x_.cols());
    for (Eigen::Index i = 0; i < x_.cols(); ++i) k(i) = se_kernel(point, x_.col(i), length_, signal_);
    const Vector v = llt_.matrixL().solve(k);
    return {k.dot(alpha_), std::max(Scalar(0), signal_ - v.squaredNorm())};
  }

  /// log p(y | X, l, s2, noise).
  Scalar log_marginal_likelihood() const {
    const Scalar log_det = Scalar(2) * llt_.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return Scalar(-0.5) * y_.dot(alpha_) - Scalar(0.5) * log_det -
           Scalar(0.5) * static_cast<Scalar>(y_.size()) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
  }

  Scalar length() const { return length_; }

 private:
  Matrix x_;
  Vector y_;
  Scalar length_, signal_, noise_;
  Eigen::LLT<Matrix> llt_;
  Vector alpha_;
};

/// E[max(best - f, 0)] for f ~ N(mean, variance) (minimization); the
/// maximization form mirrors it.
template <typename Scalar>
Scalar expected_improvement(Scalar mean, Scalar variance, Scalar best, bool minimize = true) {
  const Scalar gain = minimize ? best - mean : mean - best;
  if (!(variance > 0)) return std::max(Scalar(0), gain);
  const Scalar sigma = std::sqrt(variance);
  const Scalar z = gain / sigma;
  const Scalar cdf = Scalar(0.5) * std::erfc(-z / std::numbers::sqrt2_v<Scalar>);
  const Scalar pdf = std::exp(Scalar(-0.5) * z * z) / std::sqrt(Scalar(2) * std::numbers::pi_v<Scalar>);
  return std::max(Scalar(0), gain * cdf + sigma * pdf);
}

/// Sobol points with a seeded Cranley-Patterson shift, in [0,1)^d (columns).
Eigen::MatrixXd shifted_sobol(int dims, int count, std::uint64_t seed);

/// Length scale on 10^[-1..1] (9 log-spaced values) with the best marginal likelihood.
GaussianProcess<double> fit_gp(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

enum class TuneMethod { Bayesian, Random };

struct TuneOptions {
  TuneMethod method = TuneMethod::Bayesian;
  int candidates = 1024;
  /// Value recorded when the objective throws or returns NaN.
  double failure_penalty = 0.0;
};

struct TuneRecord {
  int iter;
  Eigen::VectorXd point;
  double objective;
  double incumbent;
  bool failed = false;
};

struct TuneResult {
  Eigen::VectorXd best_point;
  double best_value;
  std::vector<TuneRecord> history;
};

using Objective = std::function<double(const Eigen::VectorXd&)>;

/// Minimizes `objective` over the box: 2·d quasi-random points, then the
/// expected-improvement maximizer of a fresh candidate pool per iteration.
TuneResult tune(const Objective& objective, const TuneSpace& space, const TuneOptions& options = {});

/// `iter,<names...>,objective,incumbent`.
void write_tune_log(const TuneResult& result, const TuneSpace& space, std::ostream& out);

}  // namespace dce
