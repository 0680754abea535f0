#pragma once

// Sampling-probability solvers. Every solver minimizes a member of the family
//
//   min_p  sum_i alpha_i / pi_i(p_i)   s.t.  p >= 0, 1'p = 1
//
// where alpha_i = x_i^2 is the squared activation and pi_i the probability
// that unit i survives C categorical draws. The exact pick probability is
// 1 - (1 - p_i)^C; the exp surrogate 1 - exp(-C p_i) lower-bounds it and is
// what solve_exact minimizes in closed form up to a scalar root.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vmdetect/error.hpp"

namespace vmdetect {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct SolverInput {
  VectorX<Scalar> alpha;              // nonnegative weights
  Scalar draws = Scalar(1);           // C, positive real
  std::vector<Eigen::Index> support;  // {i : alpha_i > 0}

  Eigen::Index size() const { return alpha.size(); }
};

template <typename Derived>
SolverInput<typename Derived::Scalar> make_solver_input(const Eigen::MatrixBase<Derived>& alpha,
                                                        typename Derived::Scalar draws) {
  using Scalar = typename Derived::Scalar;
  SolverInput<Scalar> in;
  in.alpha = alpha;
  in.draws = draws;
  if (!(draws > Scalar(0)) || !std::isfinite(static_cast<double>(draws)))
    throw ConfigError("draw count C must be positive and finite");
  for (Eigen::Index i = 0; i < in.alpha.size(); ++i) {
    const Scalar a = in.alpha(i);
    if (!(a >= Scalar(0)) || !std::isfinite(static_cast<double>(a)))
      throw NumericError("alpha entries must be finite and nonnegative");
    if (a > Scalar(0)) in.support.push_back(i);
  }
  if (in.support.empty()) throw SolverError("all alpha entries are zero; nothing to sample");
  return in;
}

// alpha_i = x_i^2.
template <typename Derived>
SolverInput<typename Derived::Scalar> solver_input_from_activation(
    const Eigen::MatrixBase<Derived>& x, typename Derived::Scalar draws) {
  return make_solver_input(x.cwiseAbs2().eval(), draws);
}

template <typename Scalar>
struct SolverState {
  Scalar rho = Scalar(0);   // Lagrange multiplier of the simplex constraint
  Scalar root = Scalar(0);  // rho / C, the variable of the scalar root equation
  Scalar beta = Scalar(0);  // normalization constant of the logarithmic solver
  Scalar residual = Scalar(0);
  int iterations = 0;
};

template <typename Scalar>
struct Solution {
  VectorX<Scalar> p;
  SolverState<Scalar> state;
};

enum class Objective { exact, exp_surrogate };

namespace detail {

template <typename Scalar>
Scalar infinity() {
  return std::numeric_limits<Scalar>::infinity();
}

// Survival probability of a unit under each model.
template <typename Scalar>
Scalar pick_probability(Objective which, Scalar p, Scalar draws) {
  if (which == Objective::exact) return -std::expm1(draws * std::log1p(-p));
  return -std::expm1(-draws * p);
}

// alpha / pi - alpha, i.e. the objective with its p-independent part removed.
// Keeps full relative precision when pi is within rounding of 1.
template <typename Scalar>
Scalar excess_term(Objective which, Scalar alpha, Scalar p, Scalar draws) {
  if (p <= Scalar(0)) return infinity<Scalar>();
  if (which == Objective::exp_surrogate) return alpha / std::expm1(draws * p);
  if (p >= Scalar(1)) return Scalar(0);
  const Scalar miss = std::exp(draws * std::log1p(-p));
  return alpha * miss / -std::expm1(draws * std::log1p(-p));
}

template <typename Scalar>
Scalar excess_derivative(Objective which, Scalar alpha, Scalar p, Scalar draws) {
  if (which == Objective::exp_surrogate) {
    const Scalar em1 = std::expm1(draws * p);
    return -alpha * draws * std::exp(draws * p) / (em1 * em1);
  }
  if (p >= Scalar(1)) return Scalar(0);
  const Scalar log_miss = draws * std::log1p(-p);
  const Scalar pick = -std::expm1(log_miss);
  return -alpha * draws * std::exp(log_miss) / ((Scalar(1) - p) * pick * pick);
}

template <typename Scalar, typename Derived>
Scalar evaluate(Objective which, const Eigen::MatrixBase<Derived>& p, const SolverInput<Scalar>& in,
                bool excess_only) {
  Scalar total = Scalar(0);
  for (const auto i : in.support) {
    const Scalar pi = p(i);
    if (!(pi > Scalar(0))) return infinity<Scalar>();
    total += excess_term(which, in.alpha(i), pi, in.draws);
    if (!excess_only) total += in.alpha(i);
  }
  return total;
}

// C * p_i as a function of the root variable r: log1p((a + sqrt(a(a + 4r))) / (2r)).
// This is -ln of the feasible root y_i of r y^2 - (2r + a) y + r = 0.
template <typename Scalar>
Scalar scaled_probability(Scalar alpha, Scalar r) {
  return std::log1p((alpha + std::sqrt(alpha * (alpha + Scalar(4) * r))) / (Scalar(2) * r));
}

}  // namespace detail

// sum_i alpha_i / (1 - (1 - p_i)^C) over the support; +inf if some p_i == 0 there.
template <typename Derived>
typename Derived::Scalar exact_objective(const Eigen::MatrixBase<Derived>& p,
                                         const SolverInput<typename Derived::Scalar>& in) {
  return detail::evaluate(Objective::exact, p, in, false);
}

// sum_i alpha_i / (1 - exp(-C p_i)); never below exact_objective at the same p.
template <typename Derived>
typename Derived::Scalar surrogate_objective(const Eigen::MatrixBase<Derived>& p,
                                             const SolverInput<typename Derived::Scalar>& in) {
  return detail::evaluate(Objective::exp_surrogate, p, in, false);
}

// Left-hand side of the root equation
//   sum_i ln(2r + a_i - sqrt((2r + a_i)^2 - 4 r^2)) - h ln(2r) + C
// written as C - sum_i C p_i(r). Strictly increasing in r, -inf at 0+, C at +inf.
template <typename Scalar>
Scalar root_equation(const SolverInput<Scalar>& in, Scalar r) {
  Scalar total = in.draws;
  for (const auto i : in.support) total -= detail::scaled_probability(in.alpha(i), r);
  return total;
}

// Relative KKT residual max_i |-C a_i e^{-Cp_i} / (1 - e^{-Cp_i})^2 + rho| / rho over the support.
template <typename Derived>
typename Derived::Scalar surrogate_kkt_residual(
    const Eigen::MatrixBase<Derived>& p, const SolverInput<typename Derived::Scalar>& in,
    typename Derived::Scalar rho) {
  using Scalar = typename Derived::Scalar;
  Scalar worst = Scalar(0);
  for (const auto i : in.support) {
    const Scalar cp = in.draws * p(i);
    const Scalar miss = std::exp(-cp);
    const Scalar pick = -std::expm1(-cp);
    const Scalar grad = -in.draws * in.alpha(i) * miss / (pick * pick);
    worst = std::max(worst, std::abs(grad + rho) / rho);
  }
  return worst;
}

struct ExactSolverOptions {
  double bracket_rel_width = 1e-12;
  int max_expansions = 4000;
  int max_bisections = 400;
  bool newton_refine = false;
};

// Minimizes the exp surrogate exactly. The multiplier is found by bracketing
// from r0 = sum(alpha)/h (doubling / halving until the root equation changes
// sign) and bisecting to the requested relative bracket width.
template <typename Scalar>
Solution<Scalar> solve_exact(const SolverInput<Scalar>& in, Scalar tol,
                             const ExactSolverOptions& opts = {}) {
  if (!(tol > Scalar(0))) throw ConfigError("solver tolerance must be positive");
  if (in.support.empty()) throw SolverError("empty support");
  const auto h = static_cast<Scalar>(in.support.size());
  Solution<Scalar> out;
  out.p = VectorX<Scalar>::Zero(in.size());

  Scalar alpha_sum = Scalar(0);
  for (const auto i : in.support) alpha_sum += in.alpha(i);
  Scalar lo = alpha_sum / h;
  Scalar hi = lo;
  int steps = 0;
  if (root_equation(in, lo) < Scalar(0)) {
    while (root_equation(in, hi) < Scalar(0)) {
      lo = hi;
      hi *= Scalar(2);
      if (++steps > opts.max_expansions || !std::isfinite(static_cast<double>(hi)))
        throw SolverError("root bracket expansion failed (upper side)");
    }
  } else {
    while (root_equation(in, lo) >= Scalar(0)) {
      hi = lo;
      lo /= Scalar(2);
      if (++steps > opts.max_expansions || !(lo > Scalar(0)))
        throw SolverError("root bracket expansion failed (lower side)");
    }
  }
  if (!(root_equation(in, lo) < Scalar(0) && root_equation(in, hi) >= Scalar(0)))
    throw SolverError("root equation shows no sign change on the bracket");

  int iterations = 0;
  while (hi - lo > static_cast<Scalar>(opts.bracket_rel_width) * hi) {
    const Scalar mid = lo + (hi - lo) / Scalar(2);
    if (mid <= lo || mid >= hi) break;
    if (root_equation(in, mid) < Scalar(0))
      lo = mid;
    else
      hi = mid;
    if (++iterations > opts.max_bisections) throw SolverError("bisection did not converge");
  }
  Scalar r = lo + (hi - lo) / Scalar(2);

  if (opts.newton_refine) {
    for (int k = 0; k < 8; ++k) {
      // d/dr of sum_i C p_i(r) by central difference in log r.
      const Scalar step = r * Scalar(1e-6);
      const Scalar slope = (root_equation(in, r + step) - root_equation(in, r - step)) /
                           (Scalar(2) * step);
      const Scalar next = r - root_equation(in, r) / slope;
      if (!(next > Scalar(0)) || !std::isfinite(static_cast<double>(next))) break;
      if (std::abs(next - r) <= std::numeric_limits<Scalar>::epsilon() * r) {
        r = next;
        break;
      }
      r = next;
    }
  }

  Scalar sum = Scalar(0);
  for (const auto i : in.support) {
    out.p(i) = detail::scaled_probability(in.alpha(i), r) / in.draws;
    sum += out.p(i);
  }
  out.p /= sum;

  out.state.root = r;
  out.state.rho = r * in.draws;
  out.state.iterations = iterations;
  out.state.residual = std::abs(sum - Scalar(1));
  if (!std::isfinite(static_cast<double>(out.state.residual)))
    throw SolverError("non-finite residual in exact solver");
  if (out.state.residual > tol)
    throw SolverError("exact solver sum residual " + std::to_string(static_cast<double>(sum - 1)) +
                      " exceeds tolerance");
  return out;
}

// Small-C closed form: p_i = sqrt(alpha_i) / sum_j sqrt(alpha_j) = |x_i| / sum_j |x_j|.
template <typename Scalar>
VectorX<Scalar> solve_linear(const SolverInput<Scalar>& in) {
  if (in.support.empty()) throw SolverError("all-zero alpha");
  VectorX<Scalar> p = VectorX<Scalar>::Zero(in.size());
  Scalar total = Scalar(0);
  for (const auto i : in.support) {
    p(i) = std::sqrt(in.alpha(i));
    total += p(i);
  }
  return p / total;
}

// Large-C closed form p_i = [ln(C alpha_i)/C + beta]_+ with a single
// fixed-point correction of beta, then renormalized onto the simplex.
template <typename Scalar>
VectorX<Scalar> solve_log(const SolverInput<Scalar>& in, SolverState<Scalar>* state = nullptr) {
  if (in.support.empty()) throw SolverError("all-zero alpha");
  const Scalar floor = Scalar(1e-300) > std::numeric_limits<Scalar>::min()
                           ? Scalar(1e-300)
                           : std::numeric_limits<Scalar>::min();
  std::vector<Scalar> raw;
  raw.reserve(in.support.size());
  Scalar raw_sum = Scalar(0);
  for (const auto i : in.support) {
    raw.push_back(std::log(std::max(in.draws * in.alpha(i), floor)) / in.draws);
    raw_sum += raw.back();
  }
  const auto h = static_cast<Scalar>(raw.size());
  const Scalar beta0 = (Scalar(1) - raw_sum) / h;

  Scalar active_raw = Scalar(0);
  Scalar active = Scalar(0);
  for (const auto v : raw) {
    if (v + beta0 > Scalar(0)) {
      active_raw += v;
      active += Scalar(1);
    }
  }
  // beta0 makes the unclipped sum exactly one, so at least one entry is active.
  const Scalar beta = (Scalar(1) - active_raw) / active;

  VectorX<Scalar> p = VectorX<Scalar>::Zero(in.size());
  Scalar total = Scalar(0);
  for (std::size_t k = 0; k < raw.size(); ++k) {
    const Scalar v = std::max(raw[k] + beta, Scalar(0));
    p(in.support[k]) = v;
    total += v;
  }
  p /= total;
  if (state) {
    state->beta = beta;
    state->iterations = 1;
    state->residual = std::abs(total - Scalar(1));
  }
  return p;
}

// Euclidean projection onto {p >= 0, 1'p = 1} by the sorted-threshold rule.
template <typename Derived>
VectorX<typename Derived::Scalar> project_simplex(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  std::vector<Scalar> u(v.derived().data(), v.derived().data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  Scalar cumulative = Scalar(0);
  Scalar theta = Scalar(0);
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumulative += u[j];
    const Scalar t = (cumulative - Scalar(1)) / static_cast<Scalar>(j + 1);
    if (u[j] - t > Scalar(0)) theta = t;
  }
  return (v.array() - theta).cwiseMax(Scalar(0)).matrix();
}

struct OracleOptions {
  int max_iterations = 2000000;
};

// Projected gradient with backtracking, restricted to the support. Stops once
// the relative objective decrease and the step size both fall below tol.
// Reference solver for cross-checking the closed forms.
template <typename Scalar>
VectorX<Scalar> oracle_projected_gradient(const SolverInput<Scalar>& in, Objective which,
                                          Scalar tol, const OracleOptions& opts = {}) {
  if (in.support.empty()) throw SolverError("empty support");
  if (!(tol > Scalar(0))) throw ConfigError("oracle tolerance must be positive");
  const auto h = static_cast<Eigen::Index>(in.support.size());
  SolverInput<Scalar> reduced;
  reduced.draws = in.draws;
  reduced.alpha.resize(h);
  for (Eigen::Index k = 0; k < h; ++k) {
    reduced.alpha(k) = in.alpha(in.support[static_cast<std::size_t>(k)]);
    reduced.support.push_back(k);
  }
  auto f = [&](const VectorX<Scalar>& q) { return detail::evaluate(which, q, reduced, true); };
  auto grad = [&](const VectorX<Scalar>& q) {
    VectorX<Scalar> g(h);
    for (Eigen::Index k = 0; k < h; ++k)
      g(k) = detail::excess_derivative(which, reduced.alpha(k), q(k), reduced.draws);
    return g;
  };

  VectorX<Scalar> q = VectorX<Scalar>::Constant(h, Scalar(1) / static_cast<Scalar>(h));
  if (h > 1) {
    Scalar fq = f(q);
    VectorX<Scalar> g = grad(q);
    // Trial steps follow the Barzilai-Borwein rule, so the stopping test sees
    // moves on the scale of the local curvature rather than of |grad|.
    Scalar step = Scalar(1) / (static_cast<Scalar>(h) * g.cwiseAbs().maxCoeff());
    int quiet = 0;
    for (int iter = 0;; ++iter) {
      if (iter >= opts.max_iterations)
        throw SolverError("projected gradient oracle hit the iteration cap");
      VectorX<Scalar> next;
      Scalar fnext;
      for (;;) {
        next = project_simplex((q - step * g).eval());
        fnext = f(next);
        const VectorX<Scalar> d = next - q;
        if (fnext <= fq + g.dot(d) + d.squaredNorm() / (Scalar(2) * step)) break;
        step /= Scalar(2);
        if (!(step > Scalar(0))) throw SolverError("projected gradient line search collapsed");
      }
      const VectorX<Scalar> gnext = grad(next);
      const VectorX<Scalar> s = next - q;
      const VectorX<Scalar> y = gnext - g;
      const Scalar decrease = fq - fnext;
      const Scalar moved = s.cwiseAbs().maxCoeff();
      q = next;
      fq = fnext;
      g = gnext;
      quiet = (decrease <= tol * std::abs(fq) && moved <= tol) ? quiet + 1 : 0;
      if (quiet >= 3) break;
      const Scalar sy = s.dot(y);
      if (sy > Scalar(0)) step = s.squaredNorm() / sy;
      else step *= Scalar(2);
    }
  }

  VectorX<Scalar> p = VectorX<Scalar>::Zero(in.size());
  for (Eigen::Index k = 0; k < h; ++k) p(in.support[static_cast<std::size_t>(k)]) = q(k);
  return p;
}

// pi_i = 1 - (1 - p_i)^C, the marginal pick probability after C draws.
template <typename Derived>
VectorX<typename Derived::Scalar> bernoulli_params(const Eigen::MatrixBase<Derived>& p,
                                                   typename Derived::Scalar draws) {
  using Scalar = typename Derived::Scalar;
  if (!(draws > Scalar(0))) throw ConfigError("draw count C must be positive");
  return p.unaryExpr([draws](Scalar v) {
           if (v <= Scalar(0)) return Scalar(0);
           if (v >= Scalar(1)) return Scalar(1);
           return -std::expm1(draws * std::log1p(-v));
         })
      .eval();
}

}  // namespace vmdetect
