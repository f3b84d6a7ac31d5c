#pragma once

#include <array>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "opflearn/load_profile.hpp"
#include "opflearn/netio.hpp"
#include "opflearn/nlp.hpp"
#include "opflearn/powerflow.hpp"

namespace opflearn {

inline constexpr double kDefaultProjTol = 1e-5;

/// Second-order-cone (Jabr) relaxation of the AC OPF feasible set in lifted
/// variables c_ii = |v_i|^2 and V_i conj(V_j) = c_ij - j s_ij.
///
/// Variables: c_ii per bus, c_ij per branch, s_ij per branch, p_g, q_g, and
/// in the load-variable modes p_l, q_l per load. Equalities are the linear
/// active then reactive balance per bus. Inequalities: squared flow at the
/// from end of rated branches, then the to end, then one cone row per
/// branch, then the angle envelope rows, then the power-factor rows
/// q_l - p_l <= 0 in max-load mode.
class RelaxedFormulation final : public nlp::NlpProblem {
 public:
  enum class Mode {
    /// Loads fixed, minimize generation cost.
    Cost,
    /// Loads free with p_l >= 0 and 0 <= q_l <= p_l, maximize one p_l.
    MaxLoad,
    /// Loads free, minimize 1/2 ||x_l - x_hat||^2.
    Projection,
  };

  /// `load` is the fixed demand (Cost), the projection target (Projection),
  /// or the starting demand (MaxLoad).
  RelaxedFormulation(const NetworkModel& model, Mode mode,
                     const LoadProfile& load, int target_load = -1);

  int num_variables() const override { return n_; }
  int num_equalities() const override { return 2 * nb_; }
  int num_inequalities() const override { return m_in_; }

  void variable_bounds(Eigen::Ref<Eigen::VectorXd> lower,
                       Eigen::Ref<Eigen::VectorXd> upper) const override;
  void inequality_bounds(Eigen::Ref<Eigen::VectorXd> lower,
                         Eigen::Ref<Eigen::VectorXd> upper) const override;
  double objective(const Eigen::VectorXd& x) const override;
  void objective_gradient(const Eigen::VectorXd& x,
                          Eigen::Ref<Eigen::VectorXd> grad) const override;
  void constraints(const Eigen::VectorXd& x,
                   Eigen::Ref<Eigen::VectorXd> values) const override;
  std::vector<nlp::SparsityEntry> jacobian_structure() const override;
  void jacobian_values(const Eigen::VectorXd& x,
                       std::span<double> values) const override;
  std::vector<nlp::SparsityEntry> hessian_structure() const override;
  void hessian_values(const Eigen::VectorXd& x, double objective_factor,
                      const Eigen::VectorXd& multipliers,
                      std::span<double> values) const override;
  bool is_convex() const override { return true; }

  Mode mode() const { return mode_; }
  bool loads_free() const { return mode_ != Mode::Cost; }

  int c_bus(int bus) const { return bus; }
  int c_branch(int e) const { return nb_ + e; }
  int s_branch(int e) const { return nb_ + ne_ + e; }
  int pg(int g) const { return nb_ + 2 * ne_ + g; }
  int qg(int g) const { return nb_ + 2 * ne_ + ng_ + g; }
  int pl(int k) const { return nb_ + 2 * ne_ + 2 * ng_ + k; }
  int ql(int k) const { return nb_ + 2 * ne_ + 2 * ng_ + nl_ + k; }

  Eigen::VectorXd initial_point() const;

  /// Lifts an AC operating point into the relaxation's variables.
  Eigen::VectorXd lift(const VoltageState& voltage, const Eigen::VectorXd& pg,
                       const Eigen::VectorXd& qg, const LoadProfile& load) const;

  /// Demand carried by a point (the fixed demand in Cost mode).
  LoadProfile load_at(const Eigen::VectorXd& x) const;

  double cost(const Eigen::VectorXd& x) const;
  void set_objective_scale(double scale) { obj_scale_ = scale; }
  double objective_scale() const { return obj_scale_; }

 private:
  struct AngleRow {
    int branch = 0;
    double coef_c = 0.0;  // row: coef_c * c_ij + coef_s * s_ij <= 0
    double coef_s = 0.0;
  };
  /// Linear coefficients over (c_ff, c_tt, c_ij, s_ij).
  struct BranchLinear {
    Eigen::Vector4d p_from, q_from, p_to, q_to;
  };

  std::array<int, 4> branch_vars(int e) const;

  const NetworkModel& model_;
  Mode mode_;
  LoadProfile load_;
  int target_ = -1;
  int nb_ = 0, ne_ = 0, ng_ = 0, nl_ = 0, n_ = 0, m_in_ = 0;
  std::vector<BranchLinear> lin_;
  std::vector<int> rated_;
  std::vector<AngleRow> angle_rows_;
  double obj_scale_ = 1.0;
};

enum class RelaxStatus { Optimal, RelaxInfeasible, NumericalFailure };

std::string_view to_string(RelaxStatus status);

struct RelaxConfig {
  nlp::NlpConfig nlp;
  /// Projection distance (p.u.) below which a load counts as feasible.
  double proj_tol = kDefaultProjTol;
};

struct RelaxResult {
  RelaxStatus status = RelaxStatus::NumericalFailure;
  /// Generation cost lower bound, unscaled.
  double objective = 0.0;
  /// Lifted point in RelaxedFormulation(Cost) layout.
  Eigen::VectorXd point;
  /// Projection distance when infeasibility was certified.
  double distance = 0.0;

  bool ok() const { return status == RelaxStatus::Optimal; }
};

/// Relaxed cost minimization. A failed solve is confirmed by projection:
/// a distance above proj_tol certifies that the AC OPF is infeasible too.
RelaxResult solve_relaxed(const NetworkModel& model, const LoadProfile& load,
                          const RelaxConfig& config = {});

/// Relaxed maximum active demand at model.loads[load_index] with every load
/// free (p >= 0, 0 <= q <= p). Throws Error{NumericalFailure} or
/// Error{Unbounded}.
double max_load(const NetworkModel& model, int load_index,
                const RelaxConfig& config = {});

struct ProjectionResult {
  LoadProfile x_star;
  double distance = 0.0;
  bool feasible() const { return distance == 0.0; }
};

/// Euclidean projection of x_hat onto the relaxed-feasible load set. When the
/// distance is within proj_tol, x_star = x_hat and distance = 0. Throws
/// Error{NumericalFailure}.
ProjectionResult nearest_feasible(const NetworkModel& model,
                                  const LoadProfile& x_hat,
                                  const RelaxConfig& config = {});

}  // namespace opflearn
