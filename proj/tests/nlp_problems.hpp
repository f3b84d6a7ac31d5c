#pragma once

#include <cmath>
#include <random>

#include "dense_problem.hpp"
#include "opflearn/nlp.hpp"

/// Analytic NLP test problems shared by the unit and acceptance suites.
namespace opflearn::testing {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Stationarity residual computed from the dense callbacks only.
inline double stationarity(const DenseProblem& p, const nlp::NlpSolution& s) {
  Vec r = p.grad(s.x) - s.bound_lower_multipliers + s.bound_upper_multipliers;
  if (p.m_eq + p.m_in > 0) {
    Vec mult(p.m_eq + p.m_in);
    mult << s.eq_multipliers,
        s.ineq_upper_multipliers - s.ineq_lower_multipliers;
    r += p.jac(s.x).transpose() * mult;
  }
  return r.cwiseAbs().maxCoeff();
}

inline double max_complementarity(const DenseProblem& p, const nlp::NlpSolution& s) {
  double worst = 0.0;
  if (p.m_in > 0) {
    const Vec c = p.cons(s.x).tail(p.m_in);
    for (int i = 0; i < p.m_in; ++i) {
      if (std::isfinite(p.g_hi[i])) {
        worst = std::max(worst, std::abs(s.ineq_upper_multipliers[i] * (c[i] - p.g_hi[i])));
      }
      if (std::isfinite(p.g_lo[i])) {
        worst = std::max(worst, std::abs(s.ineq_lower_multipliers[i] * (p.g_lo[i] - c[i])));
      }
    }
  }
  for (int j = 0; j < p.n; ++j) {
    if (std::isfinite(p.x_lo[j])) {
      worst = std::max(worst, std::abs(s.bound_lower_multipliers[j] * (s.x[j] - p.x_lo[j])));
    }
    if (std::isfinite(p.x_hi[j])) {
      worst = std::max(worst, std::abs(s.bound_upper_multipliers[j] * (p.x_hi[j] - s.x[j])));
    }
  }
  return worst;
}

inline DenseProblem bounded_square() {
  // min x^2 s.t. x >= 1
  DenseProblem p = DenseProblem::unconstrained(1);
  p.x_lo[0] = 1.0;
  p.f = [](const Vec& x) { return x[0] * x[0]; };
  p.grad = [](const Vec& x) { return Vec::Constant(1, 2 * x[0]); };
  p.hess = [](const Vec&) { return Mat::Constant(1, 1, 2.0); };
  p.convex = true;
  return p;
}

inline DenseProblem projection_onto_line() {
  // min (x-2)^2 + (y-1)^2 s.t. x + y = 1
  DenseProblem p = DenseProblem::unconstrained(2);
  p.m_eq = 1;
  p.f = [](const Vec& x) { return std::pow(x[0] - 2, 2) + std::pow(x[1] - 1, 2); };
  p.grad = [](const Vec& x) { return Vec{{2 * (x[0] - 2), 2 * (x[1] - 1)}}; };
  p.hess = [](const Vec&) { return Mat(2 * Mat::Identity(2, 2)); };
  p.cons = [](const Vec& x) { return Vec::Constant(1, x[0] + x[1] - 1); };
  p.jac = [](const Vec&) { return Mat{{1.0, 1.0}}; };
  p.convex = true;
  return p;
}

inline DenseProblem interval_chebyshev_lp() {
  // max r s.t. x + r <= 1, -x + r <= 1, r >= 0; variables (x, r)
  DenseProblem p = DenseProblem::unconstrained(2);
  p.x_lo[1] = 0.0;
  p.m_in = 2;
  p.g_lo = Vec::Constant(2, -nlp::kInf);
  p.g_hi = Vec::Constant(2, 1.0);
  p.f = [](const Vec& x) { return -x[1]; };
  p.grad = [](const Vec&) { return Vec{{0.0, -1.0}}; };
  p.hess = [](const Vec&) { return Mat(Mat::Zero(2, 2)); };
  p.cons = [](const Vec& x) { return Vec{{x[0] + x[1], -x[0] + x[1]}}; };
  p.jac = [](const Vec&) { return Mat{{1.0, 1.0}, {-1.0, 1.0}}; };
  p.convex = true;
  return p;
}

inline DenseProblem constrained_rosenbrock() {
  // min (1-x)^2 + 100 (y - x^2)^2 s.t. x^2 + y^2 <= 2
  DenseProblem p = DenseProblem::unconstrained(2);
  p.m_in = 1;
  p.g_lo = Vec::Constant(1, -nlp::kInf);
  p.g_hi = Vec::Constant(1, 2.0);
  p.f = [](const Vec& x) {
    return std::pow(1 - x[0], 2) + 100 * std::pow(x[1] - x[0] * x[0], 2);
  };
  p.grad = [](const Vec& x) {
    return Vec{{-2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] * x[0]),
                200 * (x[1] - x[0] * x[0])}};
  };
  p.hess = [](const Vec& x) {
    return Mat{{2 - 400 * (x[1] - 3 * x[0] * x[0]), -400 * x[0]},
               {-400 * x[0], 200.0}};
  };
  p.cons = [](const Vec& x) { return Vec::Constant(1, x.squaredNorm()); };
  p.jac = [](const Vec& x) { return Mat{{2 * x[0], 2 * x[1]}}; };
  p.cons_hess = [](const Vec&, const Vec& m) {
    return Mat(2 * m[0] * Mat::Identity(2, 2));
  };
  return p;
}

/// Convex QP with random data: min 1/2 x'Qx + q'x s.t. Ax <= b, -2 <= x <= 2.
inline DenseProblem random_convex_qp(unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> normal;
  const int n = 4;
  const int m = 3;
  Mat l(n, n);
  for (int i = 0; i < n * n; ++i) l.data()[i] = normal(rng);
  Mat q = l * l.transpose() + 0.1 * Mat::Identity(n, n);
  Vec lin(n);
  for (int i = 0; i < n; ++i) lin[i] = 3 * normal(rng);
  Mat a(m, n);
  for (int i = 0; i < m * n; ++i) a.data()[i] = normal(rng);
  DenseProblem p = DenseProblem::unconstrained(n);
  p.x_lo.setConstant(-2.0);
  p.x_hi.setConstant(2.0);
  p.m_in = m;
  p.g_lo = Vec::Constant(m, -nlp::kInf);
  p.g_hi = Vec::Constant(m, 0.5);
  p.f = [q, lin](const Vec& x) { return 0.5 * x.dot(q * x) + lin.dot(x); };
  p.grad = [q, lin](const Vec& x) { return Vec(q * x + lin); };
  p.hess = [q](const Vec&) { return q; };
  p.cons = [a](const Vec& x) { return Vec(a * x); };
  p.jac = [a](const Vec&) { return a; };
  p.convex = true;
  return p;
}

}  // namespace opflearn::testing
