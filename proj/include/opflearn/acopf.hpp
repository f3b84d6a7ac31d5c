#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "opflearn/load_profile.hpp"
#include "opflearn/netio.hpp"
#include "opflearn/nlp.hpp"
#include "opflearn/powerflow.hpp"

namespace opflearn {

inline constexpr double kDefaultActiveTol = 1e-5;

/// AC OPF in polar form. Variables are ordered (theta, |v|, p_g, q_g).
/// Equalities are the active balance at every bus followed by the reactive
/// balance. Inequalities are the squared apparent flow at the from end of
/// every rated branch, then at the to end, then the angle difference of every
/// branch with an angle limit.
class AcOpfProblem final : public nlp::NlpProblem {
 public:
  AcOpfProblem(const NetworkModel& model, const LoadProfile& load);

  int num_variables() const override { return 2 * nb_ + 2 * ng_; }
  int num_equalities() const override { return 2 * nb_; }
  int num_inequalities() const override {
    return 2 * static_cast<int>(rated_.size()) +
           static_cast<int>(angle_limited_.size());
  }

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

  int theta(int bus) const { return bus; }
  int vm(int bus) const { return nb_ + bus; }
  int pg(int gen) const { return 2 * nb_ + gen; }
  int qg(int gen) const { return 2 * nb_ + ng_ + gen; }

  /// Branch indices owning the flow rows and the angle rows.
  const std::vector<int>& rated_branches() const { return rated_; }
  const std::vector<int>& angle_limited_branches() const {
    return angle_limited_;
  }

  /// Flat voltages clipped to the bounds, generators at their box midpoint.
  Eigen::VectorXd initial_point() const;

  /// Multiplies the cost inside the solver; depends only on the model.
  double objective_scale() const { return obj_scale_; }
  void set_objective_scale(double scale) { obj_scale_ = scale; }

  /// Unscaled generation cost.
  double cost(const Eigen::VectorXd& x) const;

 private:
  const NetworkModel& model_;
  LoadProfile load_;
  std::vector<BranchAdmittance> y_;
  std::vector<int> rated_;
  std::vector<int> angle_limited_;
  int nb_ = 0;
  int ng_ = 0;
  double obj_scale_ = 1.0;
};

enum class DualFamily : std::uint8_t {
  V_upper,
  V_lower,
  Pg_upper,
  Pg_lower,
  Qg_upper,
  Qg_lower,
  Flow_from,
  Flow_to,
  AngleDiff_upper,
  AngleDiff_lower,
};

inline constexpr DualFamily kDualFamilies[] = {
    DualFamily::V_upper,         DualFamily::V_lower,   DualFamily::Pg_upper,
    DualFamily::Pg_lower,        DualFamily::Qg_upper,  DualFamily::Qg_lower,
    DualFamily::Flow_from,       DualFamily::Flow_to,   DualFamily::AngleDiff_upper,
    DualFamily::AngleDiff_lower,
};

std::string_view to_string(DualFamily family);

/// Index is the bus id for voltage families and the 1-based case-file row
/// for generator and branch families.
struct DualRecord {
  DualFamily family = DualFamily::V_upper;
  int index = 0;
  double multiplier = 0.0;
};

enum class AcOpfStatus { Optimal, LocallyInfeasible, NoConvergence };

std::string_view to_string(AcOpfStatus status);

struct AcOpfSolution {
  AcOpfStatus status = AcOpfStatus::NoConvergence;
  /// Outputs: per-generator voltage magnitude and active power (p.u.).
  Eigen::VectorXd vg;
  Eigen::VectorXd pg;
  Eigen::VectorXd qg;
  VoltageState voltage;
  double objective = 0.0;
  /// Canonical order: every family in kDualFamilies order, every element of
  /// the family. Multipliers are in solver-scaled units and >= 0.
  std::vector<DualRecord> duals;
  double objective_scale = 1.0;
  int iterations = 0;
  double max_violation = 0.0;

  bool ok() const { return status == AcOpfStatus::Optimal; }
  GeneratorSetpoints setpoints() const { return {vg, pg}; }
};

struct AcOpfConfig {
  nlp::NlpConfig nlp;
  /// Rescale the cost so its initial gradient is at most 100 in magnitude.
  bool scale_objective = true;
};

AcOpfProblem build_acopf(const NetworkModel& model, const LoadProfile& load);

AcOpfSolution solve_acopf(const NetworkModel& model, const LoadProfile& load,
                          const AcOpfConfig& config = {});

/// Bits over the canonical dual layout: set iff |multiplier| > active_tol.
struct ActiveSet {
  std::vector<std::uint8_t> bits;

  std::size_t count() const;
  std::string to_string() const;
  auto operator<=>(const ActiveSet&) const = default;
};

ActiveSet active_set(const AcOpfSolution& solution,
                     double active_tol = kDefaultActiveTol);

/// Column labels of the canonical dual layout, e.g. "Pg_upper_3".
std::vector<std::string> dual_labels(const NetworkModel& model);

}  // namespace opflearn
