#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dce/errors.hpp"

namespace dce {

/// Guard added to log arguments and L1 denominators.
inline constexpr double kEpsilon = 1e-12;

template <typename Scalar>
struct EntropyPair {
  Scalar high;  // Tsallis (q = 2) entropy of the input distribution
  Scalar low;   // 1 - high
};

/// Tsallis entropy with q = 2, S = 1 - sum p_i^2, reported as a (high, low)
/// weighting. The input must be a probability vector within `tolerance`.
template <typename Derived>
EntropyPair<typename Derived::Scalar> tsallis_entropy_pair(const Eigen::MatrixBase<Derived>& p,
                                                           double tolerance = 1e-9) {
  using Scalar = typename Derived::Scalar;
  if (p.size() == 0) throw NormalizationError("entropy of an empty distribution");
  if ((p.array() < Scalar(-tolerance)).any()) throw NormalizationError("entropy input has negative mass");
  const Scalar total = p.sum();
  if (std::abs(total - Scalar(1)) > tolerance)
    throw NormalizationError("entropy input sums to " + std::to_string(double(total)) + ", not 1");
  const Scalar high = Scalar(1) - p.squaredNorm();
  return {high, Scalar(1) - high};
}

/// Softmax restricted to `mask`; entries off the mask are exactly zero.
template <typename Derived, typename MaskDerived>
typename Derived::PlainObject softmax_masked(const Eigen::MatrixBase<Derived>& scores,
                                             const Eigen::DenseBase<MaskDerived>& mask) {
  using Scalar = typename Derived::Scalar;
  if (scores.size() != mask.size()) throw ConfigError("softmax mask size mismatch");
  typename Derived::PlainObject out = Derived::PlainObject::Zero(scores.rows(), scores.cols());
  Scalar peak = -std::numeric_limits<Scalar>::infinity();
  bool any = false;
  for (Eigen::Index i = 0; i < scores.size(); ++i)
    if (mask(i)) {
      peak = std::max(peak, scores(i));
      any = true;
    }
  if (!any) throw EmptySupportError("softmax over an empty support");
  Scalar total = 0;
  for (Eigen::Index i = 0; i < scores.size(); ++i)
    if (mask(i)) {
      out(i) = std::exp(scores(i) - peak);
      total += out(i);
    }
  out /= total;
  return out;
}

/// x / (sum |x| + eps).
template <typename Derived>
typename Derived::PlainObject l1_normalize(const Eigen::MatrixBase<Derived>& x) {
  return x / (x.cwiseAbs().sum() + typename Derived::Scalar(kEpsilon));
}

template <typename Scalar>
struct CrossEntropy {
  Scalar loss;
  bool off_support;  // target had exactly zero probability
};

/// -log(p[target] + eps).
template <typename Derived>
CrossEntropy<typename Derived::Scalar> cross_entropy_loss(const Eigen::MatrixBase<Derived>& p,
                                                          Eigen::Index target) {
  using Scalar = typename Derived::Scalar;
  if (target < 0 || target >= p.size()) throw IndexError("cross-entropy target out of range");
  const Scalar pt = p(target);
  return {-std::log(pt + Scalar(kEpsilon)), pt == Scalar(0)};
}

}  // namespace dce
