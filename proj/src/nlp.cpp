#include "opflearn/nlp.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>
#include <vector>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <lapacke.h>

namespace opflearn::nlp {

std::string_view to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal:
      return "Optimal";
    case SolveStatus::LocallyInfeasible:
      return "LocallyInfeasible";
    case SolveStatus::IterationLimit:
      return "IterationLimit";
    case SolveStatus::NumericalFailure:
      return "NumericalFailure";
  }
  return "Unknown";
}

namespace {

using Eigen::VectorXd;

struct Inertia {
  int positive = 0;
  int negative = 0;
  int zero = 0;
};

/// Symmetric indefinite KKT matrix
///
///   [ H + diag(d)   J' ]
///   [ J         -dc I  ]
///
/// with fixed sparsity. Factorized densely by LAPACK Bunch-Kaufman below the
/// configured size, otherwise by a sparse LDL' with AMD ordering.
class KktSolver {
 public:
  KktSolver(int nw, int m, std::vector<SparsityEntry> hessian,
            std::vector<SparsityEntry> jacobian, bool dense)
      : nw_(nw),
        m_(m),
        hessian_(std::move(hessian)),
        jacobian_(std::move(jacobian)),
        dense_(dense) {}

  bool dense() const { return dense_; }

  Inertia factor(std::span<const double> h_values, const VectorXd& diagonal,
                 std::span<const double> j_values, double delta_c) {
    const int nk = nw_ + m_;
    if (dense_) {
      if (kkt_.rows() != nk) {
        kkt_.resize(nk, nk);
        pivots_.resize(nk);
      }
      kkt_.setZero();
      for (std::size_t k = 0; k < hessian_.size(); ++k) {
        kkt_(hessian_[k].row, hessian_[k].col) += h_values[k];
      }
      for (int i = 0; i < nw_; ++i) {
        kkt_(i, i) += diagonal[i];
      }
      for (std::size_t k = 0; k < jacobian_.size(); ++k) {
        kkt_(nw_ + jacobian_[k].row, jacobian_[k].col) += j_values[k];
      }
      for (int r = 0; r < m_; ++r) {
        kkt_(nw_ + r, nw_ + r) = -delta_c;
      }
      if (nk == 0) {
        return {};
      }
      // Symmetric equilibration D K D keeps the inertia and lets pivots be
      // judged against unit scale.
      scaling_ = VectorXd::Zero(nk);
      for (int c = 0; c < nk; ++c) {
        for (int r = c; r < nk; ++r) {
          const double a = std::abs(kkt_(r, c));
          scaling_[r] = std::max(scaling_[r], a);
          scaling_[c] = std::max(scaling_[c], a);
        }
      }
      for (int i = 0; i < nk; ++i) {
        scaling_[i] = scaling_[i] > 0.0 && std::isfinite(scaling_[i])
                          ? 1.0 / std::sqrt(scaling_[i])
                          : 1.0;
      }
      for (int c = 0; c < nk; ++c) {
        for (int r = c; r < nk; ++r) {
          kkt_(r, c) *= scaling_[r] * scaling_[c];
        }
      }
      const lapack_int info = LAPACKE_dsytrf(LAPACK_COL_MAJOR, 'L', nk,
                                             kkt_.data(), nk, pivots_.data());
      if (info < 0) {
        return Inertia{0, 0, nk};
      }
      return dense_inertia(kPivotTol);
    }

    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(hessian_.size() + jacobian_.size() + nk);
    for (std::size_t k = 0; k < hessian_.size(); ++k) {
      entries.emplace_back(hessian_[k].row, hessian_[k].col, h_values[k]);
    }
    for (int i = 0; i < nw_; ++i) {
      entries.emplace_back(i, i, diagonal[i]);
    }
    for (std::size_t k = 0; k < jacobian_.size(); ++k) {
      entries.emplace_back(nw_ + jacobian_[k].row, jacobian_[k].col,
                           j_values[k]);
    }
    for (int r = 0; r < m_; ++r) {
      entries.emplace_back(nw_ + r, nw_ + r, -delta_c);
    }
    scaling_ = VectorXd::Zero(nk);
    for (const auto& t : entries) {
      const double a = std::abs(t.value());
      scaling_[t.row()] = std::max(scaling_[t.row()], a);
      scaling_[t.col()] = std::max(scaling_[t.col()], a);
    }
    for (int i = 0; i < nk; ++i) {
      scaling_[i] = scaling_[i] > 0.0 && std::isfinite(scaling_[i])
                        ? 1.0 / std::sqrt(scaling_[i])
                        : 1.0;
    }
    for (auto& t : entries) {
      t = Eigen::Triplet<double>(t.row(), t.col(),
                                 t.value() * scaling_[t.row()] * scaling_[t.col()]);
    }
    sparse_.resize(nk, nk);
    sparse_.setFromTriplets(entries.begin(), entries.end());
    if (!analyzed_) {
      ldlt_.analyzePattern(sparse_);
      analyzed_ = true;
    }
    ldlt_.factorize(sparse_);
    if (ldlt_.info() != Eigen::Success) {
      return Inertia{0, 0, nk};
    }
    Inertia inertia;
    const VectorXd d = ldlt_.vectorD();
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      if (!std::isfinite(d[i]) || std::abs(d[i]) <= kPivotTol) {
        ++inertia.zero;
      } else if (d[i] > 0) {
        ++inertia.positive;
      } else {
        ++inertia.negative;
      }
    }
    return inertia;
  }

  VectorXd solve(const VectorXd& rhs) const {
    const int nk = nw_ + m_;
    if (nk == 0) {
      return rhs;
    }
    VectorXd sol = rhs.cwiseProduct(scaling_);
    if (dense_) {
      LAPACKE_dsytrs(LAPACK_COL_MAJOR, 'L', nk, 1, kkt_.data(), nk,
                     pivots_.data(), sol.data(), nk);
    } else {
      sol = ldlt_.solve(sol).eval();
    }
    return sol.cwiseProduct(scaling_);
  }

 private:
  Inertia dense_inertia(double tiny) const {
    Inertia inertia;
    const int nk = nw_ + m_;
    auto classify = [&](double v) {
      if (!std::isfinite(v) || std::abs(v) <= tiny) {
        ++inertia.zero;
      } else if (v > 0) {
        ++inertia.positive;
      } else {
        ++inertia.negative;
      }
    };
    int k = 0;
    while (k < nk) {
      if (pivots_[k] > 0) {
        classify(kkt_(k, k));
        k += 1;
      } else {
        const double a = kkt_(k, k);
        const double b = kkt_(k + 1, k);
        const double c = kkt_(k + 1, k + 1);
        // Eigenvalues of the 2x2 block via trace and determinant.
        const double tr = a + c;
        const double disc = std::sqrt(0.25 * (a - c) * (a - c) + b * b);
        classify(0.5 * tr + disc);
        classify(0.5 * tr - disc);
        k += 2;
      }
    }
    return inertia;
  }

  static constexpr double kPivotTol = 1e-13;

  int nw_;
  int m_;
  VectorXd scaling_;
  std::vector<SparsityEntry> hessian_;
  std::vector<SparsityEntry> jacobian_;
  bool dense_;

  Eigen::MatrixXd kkt_;
  std::vector<lapack_int> pivots_;

  Eigen::SparseMatrix<double> sparse_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower,
                        Eigen::AMDOrdering<int>>
      ldlt_;
  bool analyzed_ = false;
};

/// Minimizes rho * sum(p + n) + zeta/2 * ||D (x - x_ref)||^2 subject to the
/// original constraints shifted by p - n, with p, n >= 0. Its optimum
/// measures the local (global, for convex problems) minimum infeasibility.
class RestorationProblem final : public NlpProblem {
 public:
  RestorationProblem(const NlpProblem& inner, VectorXd x_ref, double rho,
                     double zeta)
      : inner_(inner),
        n_(inner.num_variables()),
        m_(inner.num_equalities() + inner.num_inequalities()),
        x_ref_(std::move(x_ref)),
        rho_(rho),
        zeta_(zeta) {
    scale_ = x_ref_.cwiseAbs().cwiseMax(1.0).cwiseInverse();
    inner_jac_ = inner_.jacobian_structure();
    inner_hess_ = inner_.hessian_structure();
  }

  int num_variables() const override { return n_ + 2 * m_; }
  int num_equalities() const override { return inner_.num_equalities(); }
  int num_inequalities() const override { return inner_.num_inequalities(); }

  void variable_bounds(Eigen::Ref<VectorXd> lower,
                       Eigen::Ref<VectorXd> upper) const override {
    inner_.variable_bounds(lower.head(n_), upper.head(n_));
    lower.tail(2 * m_).setZero();
    upper.tail(2 * m_).setConstant(kInf);
  }
  void inequality_bounds(Eigen::Ref<VectorXd> lower,
                         Eigen::Ref<VectorXd> upper) const override {
    inner_.inequality_bounds(lower, upper);
  }

  double objective(const VectorXd& x) const override {
    const VectorXd dx = (x.head(n_) - x_ref_).cwiseProduct(scale_);
    return rho_ * x.tail(2 * m_).sum() + 0.5 * zeta_ * dx.squaredNorm();
  }
  void objective_gradient(const VectorXd& x,
                          Eigen::Ref<VectorXd> grad) const override {
    grad.head(n_) = zeta_ * (x.head(n_) - x_ref_).cwiseProduct(scale_).cwiseProduct(scale_);
    grad.tail(2 * m_).setConstant(rho_);
  }
  void constraints(const VectorXd& x,
                   Eigen::Ref<VectorXd> values) const override {
    const VectorXd xi = x.head(n_);
    inner_.constraints(xi, values);
    values -= x.segment(n_, m_);
    values += x.tail(m_);
  }
  std::vector<SparsityEntry> jacobian_structure() const override {
    auto s = inner_jac_;
    for (int r = 0; r < m_; ++r) {
      s.push_back({r, n_ + r});
      s.push_back({r, n_ + m_ + r});
    }
    return s;
  }
  void jacobian_values(const VectorXd& x,
                       std::span<double> values) const override {
    const VectorXd xi = x.head(n_);
    inner_.jacobian_values(xi, values.first(inner_jac_.size()));
    std::size_t k = inner_jac_.size();
    for (int r = 0; r < m_; ++r) {
      values[k++] = -1.0;
      values[k++] = 1.0;
    }
  }
  std::vector<SparsityEntry> hessian_structure() const override {
    auto s = inner_hess_;
    for (int i = 0; i < n_; ++i) {
      s.push_back({i, i});
    }
    return s;
  }
  void hessian_values(const VectorXd& x, double objective_factor,
                      const VectorXd& multipliers,
                      std::span<double> values) const override {
    const VectorXd xi = x.head(n_);
    inner_.hessian_values(xi, 0.0, multipliers,
                          values.first(inner_hess_.size()));
    std::size_t k = inner_hess_.size();
    for (int i = 0; i < n_; ++i) {
      values[k++] = objective_factor * zeta_ * scale_[i] * scale_[i];
    }
  }
  bool is_convex() const override { return inner_.is_convex(); }

  int inner_size() const { return n_; }

 private:
  const NlpProblem& inner_;
  int n_;
  int m_;
  VectorXd x_ref_;
  VectorXd scale_;
  double rho_;
  double zeta_;
  std::vector<SparsityEntry> inner_jac_;
  std::vector<SparsityEntry> inner_hess_;
};

constexpr double kBoundRelax = 1e-10;
constexpr double kEpsilon = std::numeric_limits<double>::epsilon();

/// Presents f and c multiplied by positive constants so that gradients at the
/// starting point are at most kMaxGradient in magnitude.
class ScaledProblem final : public NlpProblem {
 public:
  static constexpr double kMaxGradient = 100.0;

  ScaledProblem(const NlpProblem& inner, const VectorXd& x0) : inner_(inner) {
    const int n = inner.num_variables();
    const int m = inner.num_equalities() + inner.num_inequalities();
    VectorXd grad(n);
    inner.objective_gradient(x0, grad);
    const double g = n > 0 ? grad.cwiseAbs().maxCoeff() : 0.0;
    obj_ = std::isfinite(g) && g > kMaxGradient ? kMaxGradient / g : 1.0;

    rows_ = VectorXd::Ones(m);
    jac_ = inner.jacobian_structure();
    std::vector<double> values(jac_.size());
    inner.jacobian_values(x0, values);
    VectorXd largest = VectorXd::Zero(m);
    for (std::size_t k = 0; k < jac_.size(); ++k) {
      largest[jac_[k].row] = std::max(largest[jac_[k].row], std::abs(values[k]));
    }
    for (int r = 0; r < m; ++r) {
      if (std::isfinite(largest[r]) && largest[r] > kMaxGradient) {
        rows_[r] = kMaxGradient / largest[r];
      }
    }
  }

  double objective_factor() const { return obj_; }
  const VectorXd& row_factors() const { return rows_; }

  int num_variables() const override { return inner_.num_variables(); }
  int num_equalities() const override { return inner_.num_equalities(); }
  int num_inequalities() const override { return inner_.num_inequalities(); }
  void variable_bounds(Eigen::Ref<VectorXd> lower,
                       Eigen::Ref<VectorXd> upper) const override {
    inner_.variable_bounds(lower, upper);
  }
  void inequality_bounds(Eigen::Ref<VectorXd> lower,
                         Eigen::Ref<VectorXd> upper) const override {
    inner_.inequality_bounds(lower, upper);
    const auto d = rows_.tail(inner_.num_inequalities());
    lower = lower.cwiseProduct(d);
    upper = upper.cwiseProduct(d);
  }
  double objective(const VectorXd& x) const override {
    return obj_ * inner_.objective(x);
  }
  void objective_gradient(const VectorXd& x,
                          Eigen::Ref<VectorXd> grad) const override {
    inner_.objective_gradient(x, grad);
    grad *= obj_;
  }
  void constraints(const VectorXd& x,
                   Eigen::Ref<VectorXd> values) const override {
    inner_.constraints(x, values);
    values = values.cwiseProduct(rows_);
  }
  std::vector<SparsityEntry> jacobian_structure() const override {
    return jac_;
  }
  void jacobian_values(const VectorXd& x,
                       std::span<double> values) const override {
    inner_.jacobian_values(x, values);
    for (std::size_t k = 0; k < jac_.size(); ++k) {
      values[k] *= rows_[jac_[k].row];
    }
  }
  std::vector<SparsityEntry> hessian_structure() const override {
    return inner_.hessian_structure();
  }
  void hessian_values(const VectorXd& x, double objective_factor,
                      const VectorXd& multipliers,
                      std::span<double> values) const override {
    inner_.hessian_values(x, objective_factor * obj_,
                          multipliers.cwiseProduct(rows_), values);
  }
  bool is_convex() const override { return inner_.is_convex(); }

 private:
  const NlpProblem& inner_;
  double obj_ = 1.0;
  VectorXd rows_;
  std::vector<SparsityEntry> jac_;
};

/// Primal-dual barrier method on w = (free x, inequality slacks) with
/// constraints c(w) = [c_E(x); c_I(x) - s] = 0 and box bounds on w.
class InteriorPoint {
 public:
  InteriorPoint(const NlpProblem& problem, const NlpConfig& config,
                double obj_factor, VectorXd row_factors)
      : problem_(problem),
        config_(config),
        obj_factor_(obj_factor),
        row_factors_(std::move(row_factors)) {
    n_full_ = problem.num_variables();
    m_eq_ = problem.num_equalities();
    m_in_ = problem.num_inequalities();
    m_ = m_eq_ + m_in_;

    x_lo_full_.resize(n_full_);
    x_hi_full_.resize(n_full_);
    problem.variable_bounds(x_lo_full_, x_hi_full_);
    g_lo_.resize(m_in_);
    g_hi_.resize(m_in_);
    problem.inequality_bounds(g_lo_, g_hi_);

    column_of_.assign(n_full_, -1);
    for (int j = 0; j < n_full_; ++j) {
      if (x_lo_full_[j] > x_hi_full_[j]) {
        inconsistent_bounds_ = true;
      }
      if (std::isfinite(x_lo_full_[j]) &&
          x_hi_full_[j] - x_lo_full_[j] <= 1e-14 * std::max(1.0, std::abs(x_lo_full_[j]))) {
        fixed_.push_back(j);
      } else {
        column_of_[j] = static_cast<int>(free_.size());
        free_.push_back(j);
      }
    }
    n_ = static_cast<int>(free_.size());
    nw_ = n_ + m_in_;

    lo_.resize(nw_);
    hi_.resize(nw_);
    for (int i = 0; i < n_; ++i) {
      lo_[i] = x_lo_full_[free_[i]];
      hi_[i] = x_hi_full_[free_[i]];
    }
    for (int i = 0; i < m_in_; ++i) {
      double lo = g_lo_[i];
      double hi = g_hi_[i];
      if (lo > hi) {
        inconsistent_bounds_ = true;
      }
      if (std::isfinite(lo) && hi - lo <= 1e-14 * std::max(1.0, std::abs(lo))) {
        const double pad = 1e-8 * std::max(1.0, std::abs(lo));
        lo -= pad;
        hi += pad;
      }
      lo_[n_ + i] = lo;
      hi_[n_ + i] = hi;
    }
    has_lo_ = lo_.array().isFinite();
    has_hi_ = hi_.array().isFinite();
    // Slightly relaxed bounds keep slacks representable as mu -> 0 near
    // bounds of large magnitude.
    for (int i = 0; i < nw_; ++i) {
      if (has_lo_[i]) {
        lo_[i] -= kBoundRelax * std::max(1.0, std::abs(lo_[i]));
      }
      if (has_hi_[i]) {
        hi_[i] += kBoundRelax * std::max(1.0, std::abs(hi_[i]));
      }
    }

    full_jac_ = problem.jacobian_structure();
    full_hess_ = problem.hessian_structure();
    jac_values_full_.resize(full_jac_.size());
    hess_values_full_.resize(full_hess_.size());

    std::vector<SparsityEntry> jac_w;
    for (std::size_t k = 0; k < full_jac_.size(); ++k) {
      const int col = column_of_[full_jac_[k].col];
      if (col >= 0) {
        jac_map_.push_back(static_cast<int>(k));
        jac_w.push_back({full_jac_[k].row, col});
      }
    }
    for (int i = 0; i < m_in_; ++i) {
      jac_w.push_back({m_eq_ + i, n_ + i});
    }
    jac_w_ = jac_w;
    jac_values_w_.resize(jac_w_.size());

    std::vector<SparsityEntry> hess_w;
    for (std::size_t k = 0; k < full_hess_.size(); ++k) {
      int r = column_of_[full_hess_[k].row];
      int c = column_of_[full_hess_[k].col];
      if (r >= 0 && c >= 0) {
        if (r < c) {
          std::swap(r, c);
        }
        hess_map_.push_back(static_cast<int>(k));
        hess_w.push_back({r, c});
      }
    }
    hess_w_ = hess_w;
    hess_values_w_.resize(hess_w_.size());

    const bool dense = nw_ + m_ < config.dense_threshold;
    kkt_ = std::make_unique<KktSolver>(nw_, m_, hess_w_, jac_w_, dense);
    delta_c_floor_ = dense ? 0.0 : 1e-10;
  }

  NlpSolution run(const VectorXd& x0_full) {
    fixed_values_ = x0_full;
    for (int j : fixed_) {
      fixed_values_[j] = 0.5 * (x_lo_full_[j] + x_hi_full_[j]);
    }
    if (inconsistent_bounds_) {
      NlpSolution sol = package(SolveStatus::LocallyInfeasible, to_w(x0_full));
      return sol;
    }

    VectorXd w(nw_);
    for (int i = 0; i < n_; ++i) {
      w[i] = x0_full[free_[i]];
    }
    push_into_bounds(w.head(n_), 0);
    {
      VectorXd c(m_);
      problem_.constraints(full_x(w), c);
      w.tail(m_in_) = c.tail(m_in_);
      push_into_bounds(w.tail(m_in_), n_);
    }
    w_ = w;
    z_lo_ = has_lo_.select(VectorXd::Ones(nw_), VectorXd::Zero(nw_));
    z_hi_ = has_hi_.select(VectorXd::Ones(nw_), VectorXd::Zero(nw_));
    mu_ = config_.mu_init;
    evaluate(w_);
    lambda_ = least_squares_multipliers();

    return iterate();
  }

  /// Entry from a restoration result: reinitialize duals at the new point.
  NlpSolution resume_after_restoration(const VectorXd& w) {
    w_ = w;
    z_lo_ = VectorXd::Zero(nw_);
    z_hi_ = VectorXd::Zero(nw_);
    for (int i = 0; i < nw_; ++i) {
      if (has_lo_[i]) {
        z_lo_[i] = std::min(1e3, mu_ / (w_[i] - lo_[i]));
      }
      if (has_hi_[i]) {
        z_hi_[i] = std::min(1e3, mu_ / (hi_[i] - w_[i]));
      }
    }
    evaluate(w_);
    lambda_ = least_squares_multipliers();
    filter_.clear();
    return iterate();
  }

 private:
  VectorXd full_x(const VectorXd& w) const {
    VectorXd x = fixed_values_;
    for (int i = 0; i < n_; ++i) {
      x[free_[i]] = w[i];
    }
    return x;
  }

  VectorXd to_w(const VectorXd& x_full) const {
    VectorXd w = VectorXd::Zero(nw_);
    for (int i = 0; i < n_; ++i) {
      w[i] = x_full[free_[i]];
    }
    return w;
  }

  void push_into_bounds(Eigen::Ref<VectorXd> v, int offset) const {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double lo = lo_[offset + i];
      const double hi = hi_[offset + i];
      double push_lo = 0.0;
      double push_hi = 0.0;
      if (std::isfinite(lo)) {
        push_lo = config_.bound_push * std::max(1.0, std::abs(lo));
      }
      if (std::isfinite(hi)) {
        push_hi = config_.bound_push * std::max(1.0, std::abs(hi));
      }
      if (std::isfinite(lo) && std::isfinite(hi)) {
        push_lo = std::min(push_lo, config_.bound_frac * (hi - lo));
        push_hi = std::min(push_hi, config_.bound_frac * (hi - lo));
      }
      if (std::isfinite(lo)) {
        v[i] = std::max(v[i], lo + push_lo);
      }
      if (std::isfinite(hi)) {
        v[i] = std::min(v[i], hi - push_hi);
      }
    }
  }

  /// Objective, gradient, constraints, and Jacobian at w.
  void evaluate(const VectorXd& w) {
    const VectorXd x = full_x(w);
    f_ = problem_.objective(x);
    VectorXd grad_full(n_full_);
    problem_.objective_gradient(x, grad_full);
    grad_ = VectorXd::Zero(nw_);
    for (int i = 0; i < n_; ++i) {
      grad_[i] = grad_full[free_[i]];
    }
    c_ = constraint_values(w, x);
    problem_.jacobian_values(x, jac_values_full_);
    for (std::size_t k = 0; k < jac_map_.size(); ++k) {
      jac_values_w_[k] = jac_values_full_[jac_map_[k]];
    }
    for (int i = 0; i < m_in_; ++i) {
      jac_values_w_[jac_map_.size() + i] = -1.0;
    }
  }

  VectorXd constraint_values(const VectorXd& w, const VectorXd& x) const {
    VectorXd c(m_);
    problem_.constraints(x, c);
    c.tail(m_in_) -= w.tail(m_in_);
    return c;
  }

  VectorXd jacobian_transpose_times(const VectorXd& v) const {
    VectorXd out = VectorXd::Zero(nw_);
    for (std::size_t k = 0; k < jac_w_.size(); ++k) {
      out[jac_w_[k].col] += jac_values_w_[k] * v[jac_w_[k].row];
    }
    return out;
  }

  VectorXd jacobian_times(const VectorXd& v) const {
    VectorXd out = VectorXd::Zero(m_);
    for (std::size_t k = 0; k < jac_w_.size(); ++k) {
      out[jac_w_[k].row] += jac_values_w_[k] * v[jac_w_[k].col];
    }
    return out;
  }

  VectorXd least_squares_multipliers() {
    if (m_ == 0) {
      return VectorXd();
    }
    std::vector<double> zero_h(hess_w_.size(), 0.0);
    const Inertia inertia =
        kkt_->factor(zero_h, VectorXd::Ones(nw_), jac_values_w_, delta_c_floor_);
    if (inertia.positive != nw_ || inertia.negative != m_) {
      return VectorXd::Zero(m_);
    }
    VectorXd rhs = VectorXd::Zero(nw_ + m_);
    rhs.head(nw_) = -(grad_ - z_lo_ + z_hi_);
    const VectorXd sol = kkt_->solve(rhs);
    VectorXd lambda = sol.tail(m_);
    if (!lambda.allFinite() || lambda.cwiseAbs().maxCoeff() > 1e3) {
      lambda.setZero();
    }
    return lambda;
  }

  double slack_lo(int i, const VectorXd& w) const { return w[i] - lo_[i]; }
  double slack_hi(int i, const VectorXd& w) const { return hi_[i] - w[i]; }

  /// Barrier objective including the damping term for one-sided bounds.
  double barrier_value(const VectorXd& w, double f) const {
    double phi = f;
    const double damping = kDamping * mu_;
    for (int i = 0; i < nw_; ++i) {
      if (has_lo_[i]) {
        const double s = slack_lo(i, w);
        if (s <= 0.0) {
          return kInf;
        }
        phi -= mu_ * std::log(s);
        if (!has_hi_[i]) {
          phi += damping * s;
        }
      }
      if (has_hi_[i]) {
        const double s = slack_hi(i, w);
        if (s <= 0.0) {
          return kInf;
        }
        phi -= mu_ * std::log(s);
        if (!has_lo_[i]) {
          phi += damping * s;
        }
      }
    }
    return phi;
  }

  VectorXd barrier_gradient() const {
    VectorXd g = grad_;
    const double damping = kDamping * mu_;
    for (int i = 0; i < nw_; ++i) {
      if (has_lo_[i]) {
        g[i] -= mu_ / slack_lo(i, w_);
        if (!has_hi_[i]) {
          g[i] += damping;
        }
      }
      if (has_hi_[i]) {
        g[i] += mu_ / slack_hi(i, w_);
        if (!has_lo_[i]) {
          g[i] -= damping;
        }
      }
    }
    return g;
  }

  struct Errors {
    double dual = 0.0;
    double primal = 0.0;
    double complementarity = 0.0;
    double overall() const { return std::max({dual, primal, complementarity}); }
  };

  Errors errors(double mu) const {
    Errors e;
    const VectorXd grad_lag =
        grad_ + jacobian_transpose_times(lambda_) - z_lo_ + z_hi_;
    e.dual = nw_ > 0 ? grad_lag.cwiseAbs().maxCoeff() : 0.0;
    e.primal = m_ > 0 ? c_.cwiseAbs().maxCoeff() : 0.0;
    for (int i = 0; i < nw_; ++i) {
      if (has_lo_[i]) {
        e.complementarity = std::max(
            e.complementarity, std::abs(slack_lo(i, w_) * z_lo_[i] - mu));
      }
      if (has_hi_[i]) {
        e.complementarity = std::max(
            e.complementarity, std::abs(slack_hi(i, w_) * z_hi_[i] - mu));
      }
    }
    return e;
  }

  /// Optimality errors of the unscaled problem.
  Errors unscaled(const Errors& scaled) const {
    Errors e;
    e.dual = scaled.dual / obj_factor_;
    e.complementarity = scaled.complementarity / obj_factor_;
    for (int r = 0; r < m_; ++r) {
      e.primal = std::max(e.primal, std::abs(c_[r]) / row_factors_[r]);
    }
    return e;
  }

  double fraction_to_boundary(const VectorXd& v, const VectorXd& dv,
                              const VectorXd& lo, const VectorXd& hi,
                              double tau) const {
    double alpha = 1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (std::isfinite(lo[i]) && dv[i] < 0.0) {
        alpha = std::min(alpha, -tau * (v[i] - lo[i]) / dv[i]);
      }
      if (std::isfinite(hi[i]) && dv[i] > 0.0) {
        alpha = std::min(alpha, tau * (hi[i] - v[i]) / dv[i]);
      }
    }
    return alpha;
  }

  double dual_step(const VectorXd& dz_lo, const VectorXd& dz_hi,
                   double tau) const {
    double alpha = 1.0;
    for (int i = 0; i < nw_; ++i) {
      if (has_lo_[i] && dz_lo[i] < 0.0) {
        alpha = std::min(alpha, -tau * z_lo_[i] / dz_lo[i]);
      }
      if (has_hi_[i] && dz_hi[i] < 0.0) {
        alpha = std::min(alpha, -tau * z_hi_[i] / dz_hi[i]);
      }
    }
    return alpha;
  }

  /// Factorizes with inertia correction. Returns false past the
  /// regularization cap.
  bool factor_with_correction(const VectorXd& sigma, double& delta_w_used) {
    double delta_w = 0.0;
    double delta_c = delta_c_floor_;
    for (int attempt = 0;; ++attempt) {
      const VectorXd diag = sigma.array() + delta_w;
      const Inertia inertia =
          kkt_->factor(hess_values_w_, diag, jac_values_w_, delta_c);
      if (inertia.positive == nw_ && inertia.negative == m_ &&
          inertia.zero == 0) {
        delta_w_used = delta_w;
        if (delta_w > 0.0) {
          last_delta_w_ = delta_w;
        }
        return true;
      }
      if (inertia.zero > 0 && delta_c == delta_c_floor_) {
        delta_c = std::max(delta_c_floor_, 1e-8 * std::pow(mu_, 0.25));
      }
      if (delta_w == 0.0) {
        delta_w = last_delta_w_ == 0.0
                      ? 1e-4
                      : std::max(config_.delta_min, last_delta_w_ / 3.0);
      } else {
        delta_w *= config_.delta_growth;
      }
      if (delta_w > config_.delta_max || attempt > 60) {
        return false;
      }
    }
  }

  NlpSolution iterate();
  NlpSolution restore();
  NlpSolution package(SolveStatus status, const VectorXd& w);

  static constexpr double kDamping = 1e-5;

  const NlpProblem& problem_;
  const NlpConfig& config_;
  double obj_factor_ = 1.0;
  VectorXd row_factors_;
  int n_full_ = 0;
  int m_eq_ = 0;
  int m_in_ = 0;
  int m_ = 0;
  int n_ = 0;
  int nw_ = 0;
  bool inconsistent_bounds_ = false;

  VectorXd x_lo_full_, x_hi_full_, g_lo_, g_hi_;
  std::vector<int> free_, fixed_, column_of_;
  VectorXd fixed_values_;
  VectorXd lo_, hi_;
  Eigen::Array<bool, Eigen::Dynamic, 1> has_lo_, has_hi_;

  std::vector<SparsityEntry> full_jac_, full_hess_, jac_w_, hess_w_;
  std::vector<int> jac_map_, hess_map_;
  std::vector<double> jac_values_full_, hess_values_full_, jac_values_w_,
      hess_values_w_;
  std::unique_ptr<KktSolver> kkt_;
  double delta_c_floor_ = 0.0;
  double last_delta_w_ = 0.0;

  VectorXd w_, lambda_, z_lo_, z_hi_;
  double f_ = 0.0;
  VectorXd grad_, c_;
  double mu_ = 0.1;
  std::vector<std::pair<double, double>> filter_;
  double theta_max_ = -1.0;
  double theta_min_ = 0.0;
  int iterations_ = 0;
  int restorations_ = 0;
  double stall_mu_ = 0.0;
  double stall_error_ = 0.0;
  int stall_count_ = 0;
};

NlpSolution InteriorPoint::iterate() {
  const double kappa_sigma = 1e10;
  for (;; ++iterations_) {
    Errors e0 = errors(0.0);
    if (!std::isfinite(e0.overall()) || !std::isfinite(f_)) {
      return package(SolveStatus::NumericalFailure, w_);
    }
    const bool converged = e0.overall() <= config_.tol &&
                           unscaled(e0).overall() <= config_.tol;
    if (converged && mu_ <= config_.mu_final * (1 + 1e-12)) {
      return package(SolveStatus::Optimal, w_);
    }
    // Near-degenerate bounds can pin the barrier error above the mu decrease
    // threshold through the slack floor. Accept once that error stops moving.
    const double barrier_error = errors(mu_).overall();
    if (mu_ == stall_mu_ && barrier_error >= 0.99 * stall_error_) {
      ++stall_count_;
    } else {
      stall_count_ = 0;
    }
    stall_mu_ = mu_;
    stall_error_ = barrier_error;
    if (converged && stall_count_ >= 5) {
      return package(SolveStatus::Optimal, w_);
    }
    // Monotone barrier decrease while the subproblem is solved well enough.
    while (mu_ > config_.mu_final &&
           errors(mu_).overall() <= config_.barrier_tol_factor * mu_) {
      mu_ = std::max(config_.mu_final,
                     std::min(config_.mu_linear_factor * mu_,
                              std::pow(mu_, config_.mu_superlinear_power)));
      filter_.clear();
    }
    if (iterations_ >= config_.max_iter) {
      return package(SolveStatus::IterationLimit, w_);
    }

    {
      const VectorXd x = full_x(w_);
      problem_.hessian_values(x, 1.0, lambda_, hess_values_full_);
      for (std::size_t k = 0; k < hess_map_.size(); ++k) {
        hess_values_w_[k] = hess_values_full_[hess_map_[k]];
      }
    }
    VectorXd sigma_lo = VectorXd::Zero(nw_);
    VectorXd sigma_hi = VectorXd::Zero(nw_);
    for (int i = 0; i < nw_; ++i) {
      if (has_lo_[i]) {
        sigma_lo[i] = z_lo_[i] / slack_lo(i, w_);
      }
      if (has_hi_[i]) {
        sigma_hi[i] = z_hi_[i] / slack_hi(i, w_);
      }
    }
    const VectorXd sigma = sigma_lo + sigma_hi;

    double delta_w = 0.0;
    if (!factor_with_correction(sigma, delta_w)) {
      if (config_.allow_restoration && restorations_ < 3) {
        return restore();
      }
      return package(SolveStatus::NumericalFailure, w_);
    }

    const VectorXd grad_barrier = barrier_gradient();
    VectorXd rhs(nw_ + m_);
    rhs.head(nw_) = -(grad_barrier + jacobian_transpose_times(lambda_));
    rhs.tail(m_) = -c_;
    const VectorXd sol = kkt_->solve(rhs);
    if (!sol.allFinite()) {
      return package(SolveStatus::NumericalFailure, w_);
    }
    const VectorXd dw = sol.head(nw_);
    const VectorXd dlambda = sol.tail(m_);

    VectorXd dz_lo = VectorXd::Zero(nw_);
    VectorXd dz_hi = VectorXd::Zero(nw_);
    for (int i = 0; i < nw_; ++i) {
      if (has_lo_[i]) {
        dz_lo[i] = mu_ / slack_lo(i, w_) - z_lo_[i] - sigma_lo[i] * dw[i];
      }
      if (has_hi_[i]) {
        dz_hi[i] = mu_ / slack_hi(i, w_) - z_hi_[i] + sigma_hi[i] * dw[i];
      }
    }

    const double tau = std::max(config_.tau_min, 1.0 - mu_);
    const double alpha_max = fraction_to_boundary(w_, dw, lo_, hi_, tau);
    const double alpha_z = dual_step(dz_lo, dz_hi, tau);

    // Filter line search on (theta, phi) = (||c||_1, barrier objective).
    const double theta0 = c_.lpNorm<1>();
    const double phi0 = barrier_value(w_, f_);
    const double grad_dot = grad_barrier.dot(dw);
    if (theta_max_ < 0.0) {
      theta_max_ = 1e4 * std::max(1.0, theta0);
      theta_min_ = 1e-4 * std::max(1.0, theta0);
    }
    constexpr double kGammaTheta = 1e-5;
    constexpr double kGammaPhi = 1e-8;
    constexpr double kSwitchTheta = 1.1;
    constexpr double kSwitchPhi = 2.3;

    auto evaluate_trial = [&](const VectorXd& w_trial, VectorXd& c_trial,
                              double& f_trial, double& theta, double& phi) {
      const VectorXd x = full_x(w_trial);
      f_trial = problem_.objective(x);
      c_trial = constraint_values(w_trial, x);
      theta = c_trial.lpNorm<1>();
      phi = barrier_value(w_trial, f_trial);
      return std::isfinite(phi) && c_trial.allFinite();
    };
    auto in_filter = [&](double theta, double phi) {
      if (theta > theta_max_) {
        return true;
      }
      for (const auto& [ft, fp] : filter_) {
        if (theta >= ft && phi >= fp) {
          return true;
        }
      }
      return false;
    };
    // Returns 0 for rejection, 1 for a phi-type step, 2 for a theta-type step.
    auto acceptance = [&](double alpha, double theta, double phi) {
      if (in_filter(theta, phi)) {
        return 0;
      }
      const bool switching =
          grad_dot < 0.0 &&
          alpha * std::pow(-grad_dot, kSwitchPhi) >
              std::pow(theta0, kSwitchTheta);
      if (switching && theta0 <= theta_min_) {
        return phi <= phi0 + config_.armijo * alpha * grad_dot +
                          1e-14 * std::max(1.0, std::abs(phi0))
                   ? 1
                   : 0;
      }
      const bool enough = theta <= (1.0 - kGammaTheta) * theta0 ||
                          phi <= phi0 - kGammaPhi * theta0;
      if (!enough) {
        return 0;
      }
      return switching && phi <= phi0 + config_.armijo * alpha * grad_dot ? 1
                                                                           : 2;
    };

    const double step_scale = 1.0 + w_.cwiseAbs().maxCoeff();
    const bool tiny_step = dw.cwiseAbs().maxCoeff() <= 1e-14 * step_scale;
    if (tiny_step && e0.primal > config_.tol && config_.allow_restoration &&
        restorations_ < 3) {
      return restore();
    }

    double alpha = alpha_max;
    VectorXd w_new;
    bool accepted = false;
    int kind = 0;
    VectorXd c_trial;
    double f_trial = 0.0;
    while (alpha >= config_.min_step) {
      VectorXd w_trial = w_ + alpha * dw;
      double theta = kInf;
      double phi = kInf;
      const bool finite =
          evaluate_trial(w_trial, c_trial, f_trial, theta, phi);
      kind = finite ? acceptance(alpha, theta, phi) : 0;
      if (tiny_step || kind > 0) {
        w_new = std::move(w_trial);
        accepted = true;
        break;
      }
      if (finite && alpha == alpha_max && m_ > 0 && theta >= theta0) {
        // Second-order corrections against the Maratos effect.
        VectorXd c_soc_acc = alpha * c_ + c_trial;
        double theta_prev = theta0;
        double theta_soc = theta;
        for (int p = 0; p < 4; ++p) {
          if (p > 0) {
            if (theta_soc > 0.99 * theta_prev) {
              break;
            }
            c_soc_acc = alpha * c_soc_acc + c_trial;
          }
          theta_prev = theta_soc;
          VectorXd rhs_soc = rhs;
          rhs_soc.tail(m_) = -c_soc_acc;
          const VectorXd sol_soc = kkt_->solve(rhs_soc);
          if (!sol_soc.allFinite()) {
            break;
          }
          const VectorXd dw_soc = sol_soc.head(nw_);
          const double alpha_soc =
              fraction_to_boundary(w_, dw_soc, lo_, hi_, tau);
          VectorXd w_soc = w_ + alpha_soc * dw_soc;
          double phi_soc = kInf;
          if (!evaluate_trial(w_soc, c_trial, f_trial, theta_soc, phi_soc)) {
            break;
          }
          kind = acceptance(alpha, theta_soc, phi_soc);
          if (kind > 0) {
            w_new = std::move(w_soc);
            accepted = true;
            break;
          }
        }
        if (accepted) {
          break;
        }
      }
      alpha *= 0.5;
    }
    if (accepted && kind != 1) {
      filter_.emplace_back((1.0 - kGammaTheta) * theta0,
                           phi0 - kGammaPhi * theta0);
    }

    // Vanishing steps while infeasible signal a stationary point of the
    // infeasibility; hand over to restoration.
    const bool stalled = accepted && !tiny_step && alpha < 1e-6 &&
                         e0.primal > config_.tol;
    if (!accepted || stalled) {
      if (config_.allow_restoration && restorations_ < 3) {
        return restore();
      }
      return package(SolveStatus::NumericalFailure, w_);
    }

    w_ = std::move(w_new);
    lambda_ += alpha * dlambda;
    z_lo_ += alpha_z * dz_lo;
    z_hi_ += alpha_z * dz_hi;
    // Slacks that collapsed below rounding level move their bound outward.
    const double slack_floor = std::pow(kEpsilon, 0.75);
    for (int i = 0; i < nw_; ++i) {
      if (has_lo_[i] && slack_lo(i, w_) < slack_floor * std::max(1.0, std::abs(lo_[i]))) {
        lo_[i] -= slack_floor * std::max(1.0, std::abs(lo_[i]));
      }
      if (has_hi_[i] && slack_hi(i, w_) < slack_floor * std::max(1.0, std::abs(hi_[i]))) {
        hi_[i] += slack_floor * std::max(1.0, std::abs(hi_[i]));
      }
    }
    evaluate(w_);
    for (int i = 0; i < nw_; ++i) {
      if (has_lo_[i]) {
        const double s = slack_lo(i, w_);
        z_lo_[i] = std::clamp(z_lo_[i], mu_ / (kappa_sigma * s),
                              kappa_sigma * mu_ / s);
      }
      if (has_hi_[i]) {
        const double s = slack_hi(i, w_);
        z_hi_[i] = std::clamp(z_hi_[i], mu_ / (kappa_sigma * s),
                              kappa_sigma * mu_ / s);
      }
    }
  }
}

NlpSolution InteriorPoint::restore() {
  ++restorations_;
  const VectorXd x = full_x(w_);
  RestorationProblem resto(problem_, x, config_.restoration_rho,
                           std::sqrt(mu_));
  NlpConfig inner = config_;
  inner.allow_restoration = false;
  inner.mu_init = std::max(mu_, 1e-2);
  inner.max_iter = std::max(50, config_.max_iter - iterations_);

  VectorXd start(resto.num_variables());
  start.head(n_full_) = x;
  VectorXd c(m_);
  problem_.constraints(x, c);
  for (int r = 0; r < m_; ++r) {
    double violation = 0.0;
    if (r < m_eq_) {
      violation = c[r];
    } else {
      const int i = r - m_eq_;
      if (c[r] > g_hi_[i]) {
        violation = c[r] - g_hi_[i];
      } else if (c[r] < g_lo_[i]) {
        violation = c[r] - g_lo_[i];
      }
    }
    start[n_full_ + r] = std::max(violation, 0.0) + 1e-2;
    start[n_full_ + m_ + r] = std::max(-violation, 0.0) + 1e-2;
  }
  const NlpSolution rs = solve(resto, inner, start);
  iterations_ += rs.iterations;

  const VectorXd x_r = rs.x.head(n_full_);
  VectorXd c_r(m_);
  problem_.constraints(x_r, c_r);
  double infeasibility = 0.0;
  for (int r = 0; r < m_; ++r) {
    if (r < m_eq_) {
      infeasibility = std::max(infeasibility, std::abs(c_r[r]));
    } else {
      const int i = r - m_eq_;
      infeasibility = std::max({infeasibility, c_r[r] - g_hi_[i], g_lo_[i] - c_r[r]});
    }
  }
  if (rs.status == SolveStatus::Optimal &&
      infeasibility > std::max(10.0 * config_.tol, 1e-5)) {
    NlpSolution sol = package(SolveStatus::LocallyInfeasible, w_);
    sol.constraint_violation = infeasibility;
    return sol;
  }
  if (rs.status != SolveStatus::Optimal && infeasibility > config_.tol) {
    return package(rs.status == SolveStatus::IterationLimit
                       ? SolveStatus::IterationLimit
                       : SolveStatus::NumericalFailure,
                   w_);
  }
  if (iterations_ >= config_.max_iter) {
    return package(SolveStatus::IterationLimit, w_);
  }

  VectorXd w(nw_);
  for (int i = 0; i < n_; ++i) {
    w[i] = x_r[free_[i]];
  }
  push_into_bounds(w.head(n_), 0);
  w.tail(m_in_) = c_r.tail(m_in_);
  push_into_bounds(w.tail(m_in_), n_);
  return resume_after_restoration(w);
}

NlpSolution InteriorPoint::package(SolveStatus status, const VectorXd& w) {
  NlpSolution sol;
  sol.status = status;
  sol.iterations = iterations_;
  sol.x = full_x(w).cwiseMax(x_lo_full_).cwiseMin(x_hi_full_);
  sol.objective = problem_.objective(sol.x);

  sol.eq_multipliers = VectorXd::Zero(m_eq_);
  sol.ineq_lower_multipliers = VectorXd::Zero(m_in_);
  sol.ineq_upper_multipliers = VectorXd::Zero(m_in_);
  sol.bound_lower_multipliers = VectorXd::Zero(n_full_);
  sol.bound_upper_multipliers = VectorXd::Zero(n_full_);
  if (lambda_.size() == m_ && z_lo_.size() == nw_) {
    sol.eq_multipliers = lambda_.head(m_eq_);
    for (int i = 0; i < m_in_; ++i) {
      sol.ineq_lower_multipliers[i] = z_lo_[n_ + i];
      sol.ineq_upper_multipliers[i] = z_hi_[n_ + i];
    }
    for (int i = 0; i < n_; ++i) {
      sol.bound_lower_multipliers[free_[i]] = z_lo_[i];
      sol.bound_upper_multipliers[free_[i]] = z_hi_[i];
    }
    if (!fixed_.empty()) {
      // Fixed variables: multiplier from the stationarity residual.
      VectorXd grad_full(n_full_);
      problem_.objective_gradient(sol.x, grad_full);
      problem_.jacobian_values(sol.x, jac_values_full_);
      VectorXd residual = grad_full;
      for (std::size_t k = 0; k < full_jac_.size(); ++k) {
        residual[full_jac_[k].col] +=
            jac_values_full_[k] * lambda_[full_jac_[k].row];
      }
      for (int j : fixed_) {
        if (residual[j] >= 0.0) {
          sol.bound_lower_multipliers[j] = residual[j];
        } else {
          sol.bound_upper_multipliers[j] = -residual[j];
        }
      }
    }
  }

  return sol;
}

}  // namespace

NlpSolution solve(const NlpProblem& problem, const NlpConfig& config,
                  const Eigen::VectorXd& x0) {
  const ScaledProblem scaled(problem, x0);
  InteriorPoint ip(scaled, config, scaled.objective_factor(), scaled.row_factors());
  NlpSolution sol = ip.run(x0);

  const double df = scaled.objective_factor();
  const VectorXd& rows = scaled.row_factors();
  const int m_eq = problem.num_equalities();
  const int m_in = problem.num_inequalities();
  sol.eq_multipliers = sol.eq_multipliers.cwiseProduct(rows.head(m_eq)) / df;
  sol.ineq_lower_multipliers =
      sol.ineq_lower_multipliers.cwiseProduct(rows.tail(m_in)) / df;
  sol.ineq_upper_multipliers =
      sol.ineq_upper_multipliers.cwiseProduct(rows.tail(m_in)) / df;
  sol.bound_lower_multipliers /= df;
  sol.bound_upper_multipliers /= df;
  sol.objective = problem.objective(sol.x);

  const KktReport report = kkt_report(problem, sol);
  sol.kkt_error =
      std::max({report.stationarity, report.primal, report.complementarity});
  if (sol.status != SolveStatus::LocallyInfeasible) {
    sol.constraint_violation = report.primal;
  }
  return sol;
}

KktReport kkt_report(const NlpProblem& problem, const NlpSolution& solution) {
  const int n = problem.num_variables();
  const int m_eq = problem.num_equalities();
  const int m_in = problem.num_inequalities();
  const int m = m_eq + m_in;
  const VectorXd& x = solution.x;

  VectorXd lo(n), hi(n), g_lo(m_in), g_hi(m_in);
  problem.variable_bounds(lo, hi);
  problem.inequality_bounds(g_lo, g_hi);

  VectorXd grad(n);
  problem.objective_gradient(x, grad);
  VectorXd c(m);
  problem.constraints(x, c);
  const auto structure = problem.jacobian_structure();
  std::vector<double> values(structure.size());
  problem.jacobian_values(x, values);

  VectorXd multipliers(m);
  multipliers.head(m_eq) = solution.eq_multipliers;
  multipliers.tail(m_in) =
      solution.ineq_upper_multipliers - solution.ineq_lower_multipliers;

  VectorXd stationarity = grad - solution.bound_lower_multipliers +
                          solution.bound_upper_multipliers;
  for (std::size_t k = 0; k < structure.size(); ++k) {
    stationarity[structure[k].col] += values[k] * multipliers[structure[k].row];
  }

  KktReport report;
  report.stationarity = n > 0 ? stationarity.cwiseAbs().maxCoeff() : 0.0;
  for (int r = 0; r < m_eq; ++r) {
    report.primal = std::max(report.primal, std::abs(c[r]));
  }
  for (int i = 0; i < m_in; ++i) {
    const double v = c[m_eq + i];
    report.primal = std::max({report.primal, v - g_hi[i], g_lo[i] - v});
    if (std::isfinite(g_lo[i])) {
      report.complementarity =
          std::max(report.complementarity,
                   std::abs(solution.ineq_lower_multipliers[i] * (v - g_lo[i])));
    }
    if (std::isfinite(g_hi[i])) {
      report.complementarity =
          std::max(report.complementarity,
                   std::abs(solution.ineq_upper_multipliers[i] * (g_hi[i] - v)));
    }
  }
  for (int j = 0; j < n; ++j) {
    report.primal = std::max({report.primal, x[j] - hi[j], lo[j] - x[j]});
    if (std::isfinite(lo[j]) && hi[j] > lo[j]) {
      report.complementarity =
          std::max(report.complementarity,
                   std::abs(solution.bound_lower_multipliers[j] * (x[j] - lo[j])));
    }
    if (std::isfinite(hi[j]) && hi[j] > lo[j]) {
      report.complementarity =
          std::max(report.complementarity,
                   std::abs(solution.bound_upper_multipliers[j] * (hi[j] - x[j])));
    }
  }
  return report;
}

}  // namespace opflearn::nlp
