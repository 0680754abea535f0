#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "vmdetect/metrics.hpp"

using namespace vmdetect;
using Mat = Eigen::MatrixXd;

namespace {

Mat random_batch(std::mt19937_64& rng, Eigen::Index runs, Eigen::Index classes) {
  std::gamma_distribution<double> g(0.5, 1.0);
  Mat m(runs, classes);
  for (Eigen::Index r = 0; r < runs; ++r) {
    for (Eigen::Index k = 0; k < classes; ++k) m(r, k) = g(rng);
    m.row(r) /= m.row(r).sum();
  }
  return m;
}

}  // namespace

TEST_CASE("entropy") {
  Eigen::Vector3d a(1, 0, 0);
  CHECK(entropy(a) == 0.0);
  Eigen::Vector2d b(0.5, 0.5);
  CHECK(entropy(b) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  Eigen::Vector2d c(0.25, 0.75);
  CHECK(entropy(c) == doctest::Approx(0.5623351446188083).epsilon(1e-14));
  Eigen::Vector2d d(-0.1, 1.1);
  CHECK_THROWS_AS(entropy(d), NumericError);
}

TEST_CASE("mutual information and variance examples") {
  Mat same(3, 2);
  same << 0.3, 0.7, 0.3, 0.7, 0.3, 0.7;
  CHECK(std::abs(mutual_information(same)) < 1e-15);
  CHECK(variance_trace(same) == 0.0);

  Mat split(2, 2);
  split << 1, 0, 0, 1;
  CHECK(mutual_information(split) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(variance_trace(split) == doctest::Approx(0.5).epsilon(1e-15));

  CHECK_THROWS_AS(mutual_information(Mat(split.topRows(1))), ConfigError);
  CHECK_THROWS_AS(variance_trace(Mat(split.topRows(1))), ConfigError);
}

TEST_CASE("scores are nonnegative") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 1000; ++t) {
    const auto runs = 2 + static_cast<Eigen::Index>(rng() % 30);
    const auto classes = 2 + static_cast<Eigen::Index>(rng() % 9);
    const Mat m = random_batch(rng, runs, classes);
    CHECK(mutual_information(m) >= -1e-12);
    CHECK(variance_trace(m) >= -1e-12);
  }
}

TEST_CASE("variance trace equals summed per-class variances") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    const Mat m = random_batch(rng, 20, 5);
    double total = 0.0;
    for (Eigen::Index k = 0; k < m.cols(); ++k) {
      const double mean = m.col(k).mean();
      total += (m.col(k).array() - mean).square().sum() / static_cast<double>(m.rows());
    }
    CHECK(std::abs(variance_trace(m) - total) <= 1e-12);
    const double raw = m.rowwise().squaredNorm().mean() - m.colwise().mean().squaredNorm();
    CHECK(std::abs(variance_trace(m) - raw) <= 1e-12);
  }
}

TEST_CASE("small spread: mutual information follows the weighted variance") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.01, 0.01);
  for (int t = 0; t < 200; ++t) {
    const Eigen::Index classes = 4;
    Eigen::RowVectorXd center = random_batch(rng, 1, classes).row(0);
    center = (center.array() + 0.05).matrix();
    center /= center.sum();
    Mat m(20, classes);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      Eigen::RowVectorXd d(classes);
      for (Eigen::Index k = 0; k < classes; ++k) d(k) = u(rng);
      d.array() -= d.mean();
      m.row(r) = center + d;
    }
    const Eigen::RowVectorXd mean = m.colwise().mean();
    double taylor = 0.0;
    for (Eigen::Index k = 0; k < classes; ++k) {
      const double var = (m.col(k).array() - mean(k)).square().mean();
      taylor += 0.5 * var / mean(k);
    }
    const double mi = mutual_information(m);
    CHECK(std::abs(mi - taylor) <= 0.1 * mi + 1e-6);
  }
}

TEST_CASE("scores are permutation invariant") {
  std::mt19937_64 rng(4);
  const Mat m = random_batch(rng, 12, 4);
  std::vector<int> rows(12);
  std::iota(rows.begin(), rows.end(), 0);
  std::shuffle(rows.begin(), rows.end(), rng);
  Mat shuffled(12, 4);
  for (int r = 0; r < 12; ++r) shuffled.row(r) = m.row(rows[static_cast<std::size_t>(r)]);
  Mat relabeled = m;
  relabeled.col(0).swap(relabeled.col(3));
  CHECK(mutual_information(shuffled) == doctest::Approx(mutual_information(m)).epsilon(1e-13));
  CHECK(variance_trace(shuffled) == doctest::Approx(variance_trace(m)).epsilon(1e-13));
  CHECK(mutual_information(relabeled) == doctest::Approx(mutual_information(m)).epsilon(1e-13));
  CHECK(variance_trace(relabeled) == doctest::Approx(variance_trace(m)).epsilon(1e-13));
}

TEST_CASE("score_batch") {
  Mat split(2, 2);
  split << 1, 0, 0, 1;
  const auto s = score_batch(split);
  CHECK(s.get(Statistic::mutual_information) == s.mi);
  CHECK(s.get(Statistic::variance_trace) == doctest::Approx(0.5));
  CHECK(s.mean_output.sum() == doctest::Approx(1.0));
}

TEST_CASE("decide") {
  CHECK(decide(0.0, {0.1}) == Verdict::clean);
  CHECK(decide(0.1, {0.1}) == Verdict::clean);
  CHECK(decide(0.1000001, {0.1}) == Verdict::adversarial);
  CHECK_THROWS_AS(decide(std::numeric_limits<double>::quiet_NaN(), {0.1}), NumericError);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 500; ++t) {
    const double score = u(rng);
    const double lo = u(rng);
    const double hi = lo + u(rng);
    if (decide(score, {lo}) == Verdict::clean) CHECK(decide(score, {hi}) == Verdict::clean);
  }
}
