#pragma once

// Uncertainty scores over a batch of R softmax outputs (rows of an R x K
// matrix). Natural logarithms throughout; 0 * log 0 is taken as 0.

#include <cmath>
#include <string>

#include <Eigen/Core>

#include "vmdetect/error.hpp"

namespace vmdetect {

template <typename Derived>
typename Derived::Scalar entropy(const Eigen::MatrixBase<Derived>& y) {
  using Scalar = typename Derived::Scalar;
  Scalar h = Scalar(0);
  for (Eigen::Index k = 0; k < y.size(); ++k) {
    const Scalar v = y(k);
    if (v < Scalar(0)) throw NumericError("entropy of a vector with negative entries");
    if (v > Scalar(0)) h -= v * std::log(v);
  }
  return h;
}

namespace detail {

// Column mean taken as first row plus the mean offset from it, so a batch of
// identical rows has exactly that row as its mean.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 1, Eigen::Dynamic> row_mean(
    const Eigen::MatrixBase<Derived>& outputs) {
  const auto first = outputs.row(0);
  return first + (outputs.rowwise() - first).colwise().mean();
}

}  // namespace detail

// H(mean row) - mean of row entropies, evaluated as the mean KL divergence of
// each row from the mean row (the same quantity, zero for identical rows).
template <typename Derived>
typename Derived::Scalar mutual_information(const Eigen::MatrixBase<Derived>& outputs) {
  using Scalar = typename Derived::Scalar;
  const auto runs = outputs.rows();
  if (runs < 2) throw ConfigError("mutual information needs at least two outputs");
  if ((outputs.array() < Scalar(0)).any())
    throw NumericError("mutual information of outputs with negative entries");
  const auto mean = detail::row_mean(outputs);
  Scalar total = Scalar(0);
  for (Eigen::Index r = 0; r < runs; ++r)
    for (Eigen::Index k = 0; k < outputs.cols(); ++k) {
      const Scalar v = outputs(r, k);
      if (v > Scalar(0)) total += v * std::log(v / mean(k));
    }
  return total / static_cast<Scalar>(runs);
}

// Tr of the biased sample covariance: (1/R) sum ||y_r||^2 - ||mean||^2.
template <typename Derived>
typename Derived::Scalar variance_trace(const Eigen::MatrixBase<Derived>& outputs) {
  using Scalar = typename Derived::Scalar;
  const auto runs = outputs.rows();
  if (runs < 2) throw ConfigError("variance needs at least two outputs");
  const auto mean = detail::row_mean(outputs);
  // Centered form; algebraically equal to the raw-moment form but cancels less.
  return (outputs.rowwise() - mean).squaredNorm() / static_cast<Scalar>(runs);
}

enum class Verdict { clean, adversarial };

inline std::string to_string(Verdict v) { return v == Verdict::clean ? "clean" : "adversarial"; }

struct DetectorThreshold {
  double tau0 = 0.0;
};

// Adversarial iff score > tau0.
inline Verdict decide(double score, DetectorThreshold tau) {
  if (std::isnan(score)) throw NumericError("cannot threshold a NaN score");
  return score > tau.tau0 ? Verdict::adversarial : Verdict::clean;
}

enum class Statistic { mutual_information, variance_trace };

std::string to_string(Statistic s);
Statistic statistic_from_string(const std::string& name);

template <typename Scalar>
struct UncertaintyScore {
  Scalar mi = Scalar(0);
  Scalar var_trace = Scalar(0);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean_output;

  Scalar get(Statistic s) const { return s == Statistic::mutual_information ? mi : var_trace; }
};

template <typename Derived>
UncertaintyScore<typename Derived::Scalar> score_batch(const Eigen::MatrixBase<Derived>& outputs) {
  UncertaintyScore<typename Derived::Scalar> s;
  s.mi = mutual_information(outputs);
  s.var_trace = variance_trace(outputs);
  s.mean_output = detail::row_mean(outputs).transpose();
  return s;
}

}  // namespace vmdetect
