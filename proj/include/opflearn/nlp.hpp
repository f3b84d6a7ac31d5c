#pragma once

#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace opflearn::nlp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct SparsityEntry {
  int row = 0;
  int col = 0;
};

/// Smooth constrained problem
///
///   min f(x)  s.t.  c_E(x) = 0,  g_lo <= c_I(x) <= g_hi,  x_lo <= x <= x_hi.
///
/// Constraint rows are ordered equalities first, then inequalities.
/// Sparsity patterns must not change between calls; repeated entries are
/// summed. The Hessian pattern lists the lower triangle (row >= col).
class NlpProblem {
 public:
  virtual ~NlpProblem() = default;

  virtual int num_variables() const = 0;
  virtual int num_equalities() const = 0;
  virtual int num_inequalities() const = 0;

  virtual void variable_bounds(Eigen::Ref<Eigen::VectorXd> lower,
                               Eigen::Ref<Eigen::VectorXd> upper) const = 0;
  virtual void inequality_bounds(Eigen::Ref<Eigen::VectorXd> lower,
                                 Eigen::Ref<Eigen::VectorXd> upper) const = 0;

  virtual double objective(const Eigen::VectorXd& x) const = 0;
  virtual void objective_gradient(const Eigen::VectorXd& x,
                                  Eigen::Ref<Eigen::VectorXd> grad) const = 0;
  virtual void constraints(const Eigen::VectorXd& x,
                           Eigen::Ref<Eigen::VectorXd> values) const = 0;

  virtual std::vector<SparsityEntry> jacobian_structure() const = 0;
  virtual void jacobian_values(const Eigen::VectorXd& x,
                               std::span<double> values) const = 0;

  /// Hessian of objective_factor * f + sum_i multipliers[i] * c_i.
  virtual std::vector<SparsityEntry> hessian_structure() const = 0;
  virtual void hessian_values(const Eigen::VectorXd& x, double objective_factor,
                              const Eigen::VectorXd& multipliers,
                              std::span<double> values) const = 0;

  /// Convex problems make LocallyInfeasible a global certificate.
  virtual bool is_convex() const { return false; }
};

enum class SolveStatus {
  Optimal,
  LocallyInfeasible,
  IterationLimit,
  NumericalFailure,
};

std::string_view to_string(SolveStatus status);

/// Multipliers follow the convention that every one-sided inequality
/// h(x) <= 0 carries a multiplier >= 0 and the Lagrangian is
/// f + eq' c_E + sum(mult * h). Two-sided rows and boxes report one
/// multiplier per side.
struct NlpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd eq_multipliers;
  Eigen::VectorXd ineq_lower_multipliers;
  Eigen::VectorXd ineq_upper_multipliers;
  Eigen::VectorXd bound_lower_multipliers;
  Eigen::VectorXd bound_upper_multipliers;
  SolveStatus status = SolveStatus::NumericalFailure;
  double objective = 0.0;
  double constraint_violation = 0.0;
  double kkt_error = 0.0;
  int iterations = 0;

  bool ok() const { return status == SolveStatus::Optimal; }
};

struct NlpConfig {
  double tol = 1e-6;
  int max_iter = 300;
  double mu_init = 0.1;
  /// Barrier value at which the solver may stop; keeps multipliers of
  /// inactive constraints near mu_final / slack.
  double mu_final = 1e-9;
  double mu_linear_factor = 0.2;
  double mu_superlinear_power = 1.5;
  double barrier_tol_factor = 10.0;
  double tau_min = 0.99;
  double bound_push = 1e-2;
  double bound_frac = 1e-2;
  double delta_min = 1e-12;
  double delta_max = 1e4;
  double delta_growth = 10.0;
  double armijo = 1e-4;
  double min_step = 1e-12;
  /// Penalty weight on constraint violation in the restoration phase.
  double restoration_rho = 1e3;
  /// Dense LAPACK factorization below this KKT size; sparse LDL' above.
  int dense_threshold = 500;
  bool allow_restoration = true;
};

NlpSolution solve(const NlpProblem& problem, const NlpConfig& config,
                  const Eigen::VectorXd& x0);

/// Recomputes the KKT residuals of a solution independently of the solver
/// internals.
struct KktReport {
  double stationarity = 0.0;
  double primal = 0.0;
  double complementarity = 0.0;
};

KktReport kkt_report(const NlpProblem& problem, const NlpSolution& solution);

}  // namespace opflearn::nlp
