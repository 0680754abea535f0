#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "vmdetect/solvers.hpp"

using namespace vmdetect;
using Vec = Eigen::VectorXd;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (const double x : v) out(i++) = x;
  return out;
}

Vec random_alpha(std::mt19937_64& rng, Eigen::Index h) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec a(h);
  for (Eigen::Index i = 0; i < h; ++i) {
    const double z = n(rng);
    a(i) = z * z;
  }
  return a;
}

double on_support_uniform_objective(const SolverInput<double>& in) {
  Vec u = Vec::Zero(in.size());
  for (const auto i : in.support) u(i) = 1.0 / static_cast<double>(in.support.size());
  return surrogate_objective(u, in);
}

// The root equation in its original logarithmic form.
double direct_root_equation(const SolverInput<double>& in, double rho) {
  double total = in.draws;
  for (const auto i : in.support) {
    const double a = in.alpha(i);
    total += std::log(2 * rho + a - std::sqrt((2 * rho + a) * (2 * rho + a) - 4 * rho * rho));
  }
  return total - static_cast<double>(in.support.size()) * std::log(2 * rho);
}

}  // namespace

TEST_CASE("objective examples") {
  const auto in = make_solver_input(vec({1, 1}), 1.0);
  CHECK(exact_objective(vec({0.5, 0.5}), in) == doctest::Approx(4.0));
  const auto single = make_solver_input(vec({1, 0}), 7.0);
  CHECK(exact_objective(vec({1, 0}), single) == doctest::Approx(1.0));
  CHECK(std::isinf(exact_objective(vec({0, 1}), single)));
  CHECK(std::isinf(surrogate_objective(vec({0, 1}), in)));
  const auto half = make_solver_input(vec({1}), std::log(2.0));
  CHECK(surrogate_objective(vec({1}), half) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("surrogate bounds the exact objective from above") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 1000; ++t) {
    const auto h = 1 + static_cast<Eigen::Index>(rng() % 10);
    const auto in = make_solver_input((random_alpha(rng, h).array() + 1e-3).matrix().eval(),
                                      0.5 + 50.0 * u(rng));
    Vec p(h);
    for (Eigen::Index i = 0; i < h; ++i) p(i) = 0.01 + u(rng);
    p /= p.sum();
    CHECK(surrogate_objective(p, in) >= exact_objective(p, in));
  }
}

TEST_CASE("input validation") {
  CHECK_THROWS_AS(make_solver_input(vec({0, 0}), 3.0), SolverError);
  CHECK_THROWS_AS(make_solver_input(vec({1, -1}), 3.0), NumericError);
  CHECK_THROWS_AS(make_solver_input(vec({1, 1}), 0.0), ConfigError);
  const auto in = make_solver_input(vec({1, 1}), 2.0);
  CHECK_THROWS_AS(solve_exact(in, 0.0), ConfigError);
  CHECK(in.support.size() == 2);
}

TEST_CASE("solve_exact examples") {
  const auto sym = solve_exact(make_solver_input(vec({0.7, 0.7, 0.7, 0.7}), 10.0), 1e-9);
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(sym.p(i) == doctest::Approx(0.25).epsilon(1e-10));

  // Independent SLSQP solution of the surrogate problem.
  const auto s = solve_exact(make_solver_input(vec({0.5, 0.3, 0.2}), 10.0), 1e-9);
  CHECK(std::abs(s.p(0) - 0.37779901) < 1e-5);
  CHECK(std::abs(s.p(1) - 0.32963383) < 1e-5);
  CHECK(std::abs(s.p(2) - 0.29256716) < 1e-5);

  const auto indicator = solve_exact(make_solver_input(vec({1, 0}), 4.0), 1e-9);
  CHECK(indicator.p(0) == 1.0);
  CHECK(indicator.p(1) == 0.0);
}

TEST_CASE("solve_exact matches the projected-gradient oracle") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(1.0, 100.0);
  for (int t = 0; t < 20; ++t) {
    const auto h = 2 + static_cast<Eigen::Index>(rng() % 30);
    const auto in = make_solver_input(random_alpha(rng, h), u(rng));
    const auto s = solve_exact(in, 1e-9);
    const Vec o = oracle_projected_gradient(in, Objective::exp_surrogate, 1e-12);
    CHECK((s.p - o).cwiseAbs().maxCoeff() <= 1e-5);
    CHECK(surrogate_kkt_residual(s.p, in, s.state.rho) <= 1e-6);
    CHECK(std::abs(s.p.sum() - 1.0) <= 1e-9);
    CHECK(s.state.rho == doctest::Approx(s.state.root * in.draws));
  }
}

TEST_CASE("oracle degenerate cases") {
  const auto one = oracle_projected_gradient(make_solver_input(vec({2.0}), 5.0), Objective::exact, 1e-10);
  CHECK(one(0) == 1.0);
  const auto sym =
      oracle_projected_gradient(make_solver_input(vec({3, 3, 3}), 5.0), Objective::exact, 1e-10);
  CHECK((sym.array() - 1.0 / 3.0).abs().maxCoeff() < 1e-9);
}

TEST_CASE("surrogate ordering of the solvers") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(1.0, 100.0);
  for (int t = 0; t < 200; ++t) {
    const auto h = 2 + static_cast<Eigen::Index>(rng() % 40);
    const auto in = make_solver_input(random_alpha(rng, h), u(rng));
    const double exact = surrogate_objective(solve_exact(in, 1e-9).p, in);
    const double slack = 1e-9 * std::max(1.0, exact);
    CHECK(exact <= surrogate_objective(solve_linear(in), in) + slack);
    CHECK(exact <= surrogate_objective(solve_log(in), in) + slack);
    CHECK(exact <= on_support_uniform_objective(in) + slack);
  }
}

TEST_CASE("scale equivariance") {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 20; ++t) {
    const Vec a = random_alpha(rng, 12);
    const auto p1 = solve_exact(make_solver_input(a, 15.0), 1e-9).p;
    const auto p2 = solve_exact(make_solver_input((a * 250.0).eval(), 15.0), 1e-9).p;
    CHECK((p1 - p2).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("small C approaches the linear solution") {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 50; ++t) {
    const auto in = make_solver_input(random_alpha(rng, 8), 0.1);
    CHECK((solve_exact(in, 1e-9).p - solve_linear(in)).cwiseAbs().maxCoeff() <= 1e-2);
  }
}

TEST_CASE("root equation") {
  std::mt19937_64 rng(19);
  const auto in = make_solver_input(random_alpha(rng, 6), 12.0);
  double previous = -std::numeric_limits<double>::infinity();
  for (double r = 1e-3; r < 1e3; r *= 1.7) {
    const double g = root_equation(in, r);
    CHECK(g > previous);
    CHECK(g == doctest::Approx(direct_root_equation(in, r)).epsilon(1e-8));
    previous = g;
  }
  const auto s = solve_exact(in, 1e-9);
  CHECK(std::abs(root_equation(in, s.state.root)) < 1e-8);
}

TEST_CASE("linear closed form") {
  const auto p = solve_linear(make_solver_input(vec({9, 16, 0}), 2.0));
  CHECK(p(0) == doctest::Approx(3.0 / 7.0).epsilon(1e-15));
  CHECK(p(1) == doctest::Approx(4.0 / 7.0).epsilon(1e-15));
  CHECK(p(2) == 0.0);
  const auto u = solve_linear(make_solver_input(vec({2, 2, 0, 2}), 2.0));
  CHECK(u(0) == doctest::Approx(1.0 / 3.0));
  CHECK(u(2) == 0.0);
  const auto one = solve_linear(make_solver_input(vec({0, 5}), 2.0));
  CHECK(one(1) == 1.0);
}

TEST_CASE("log closed form") {
  const auto p = solve_log(make_solver_input(vec({1, 1}), 10.0));
  CHECK(p(0) == doctest::Approx(0.5));
  CHECK(p(1) == doctest::Approx(0.5));

  std::mt19937_64 rng(23);
  int unclipped = 0;
  for (int t = 0; t < 200; ++t) {
    const auto in = make_solver_input((random_alpha(rng, 5).array() + 0.2).matrix().eval(), 20.0);
    const Vec q = solve_log(in);
    if ((q.array() <= 0.0).any()) continue;
    ++unclipped;
    // lambda_i = C alpha_i exp(-C p_i) must agree across i.
    const Vec lambda = (in.draws * in.alpha.array() * (-in.draws * q.array()).exp()).matrix();
    CHECK((lambda.array() - lambda.mean()).abs().maxCoeff() / lambda.mean() <= 1e-6);
  }
  CHECK(unclipped > 50);

  const auto clipped = solve_log(make_solver_input(vec({1e-12, 1, 1}), 20.0));
  CHECK(clipped(0) == 0.0);
  CHECK(std::abs(clipped.sum() - 1.0) < 1e-12);
}

TEST_CASE("large layers solve quickly") {
  std::mt19937_64 rng(29);
  const auto in = make_solver_input(random_alpha(rng, 10000), 5000.0);
  const auto t0 = std::chrono::steady_clock::now();
  const auto s = solve_exact(in, 1e-9);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(seconds < 1.0);
  CHECK(std::abs(s.p.sum() - 1.0) < 1e-9);
}

TEST_CASE("bernoulli parameters") {
  const Vec pi = bernoulli_params(vec({0.5, 0.1, 0.0, 1.0}), 2.0);
  CHECK(pi(0) == doctest::Approx(0.75));
  CHECK(pi(2) == 0.0);
  CHECK(pi(3) == 1.0);
  CHECK(bernoulli_params(vec({0.1}), 20.0)(0) == doctest::Approx(0.8784233454094307).epsilon(1e-14));
}

TEST_CASE("simplex projection") {
  const Vec p = project_simplex(vec({0.5, 2.0, -1.0}));
  CHECK(p(0) == doctest::Approx(0.0));
  CHECK(p(1) == doctest::Approx(1.0));
  const Vec q = project_simplex(vec({0.4, 0.4, 0.4}));
  CHECK((q.array() - 1.0 / 3.0).abs().maxCoeff() < 1e-15);
}

TEST_CASE("single precision instantiation") {
  Eigen::VectorXf a(3);
  a << 0.5f, 0.3f, 0.2f;
  const auto s = solve_exact(make_solver_input(a, 10.0f), 1e-5f);
  CHECK(std::abs(s.p(0) - 0.37779901f) < 1e-4f);
  CHECK(std::abs(solve_linear(make_solver_input(a, 10.0f)).sum() - 1.0f) < 1e-6f);
}
