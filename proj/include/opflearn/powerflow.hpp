#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "opflearn/load_profile.hpp"
#include "opflearn/netio.hpp"

namespace opflearn {

struct VoltageState {
  Eigen::VectorXd magnitude;
  Eigen::VectorXd angle;  // rad, slack at 0

  static VoltageState flat(int num_buses) {
    return {Eigen::VectorXd::Ones(num_buses), Eigen::VectorXd::Zero(num_buses)};
  }
};

enum class BusRole { Slack, Generator, Load };

/// Net injection targets and the bus classification that fixes which
/// mismatches are enforced.
struct InjectionSpec {
  Eigen::VectorXcd target;  // s_n = p_n + j q_n
  std::vector<BusRole> roles;
};

/// Generator dispatch that, together with a LoadProfile, fixes a power flow.
/// One entry per in-service generator; the slack generators' active power is
/// ignored.
struct GeneratorSetpoints {
  Eigen::VectorXd v;
  Eigen::VectorXd p;
};

/// s_n = v_n * conj(sum_m Y_nm v_m).
Eigen::VectorXcd injections(const NetworkModel& model,
                            const VoltageState& state);
Eigen::VectorXcd injections(const AdmittanceMatrix& y,
                            const VoltageState& state);

/// Mismatch injections - target: active rows at every non-slack bus (bus
/// order), then reactive rows at every load bus.
struct Mismatch {
  Eigen::VectorXd values;
  double max_norm = 0.0;
};

Mismatch residual(const NetworkModel& model, const VoltageState& state,
                  const InjectionSpec& spec);

/// Derivative of residual() with respect to the unknowns: angles at non-slack
/// buses, then magnitudes at load buses.
Eigen::MatrixXd jacobian(const NetworkModel& model, const VoltageState& state,
                         const std::vector<BusRole>& roles);

std::vector<BusRole> bus_roles(const NetworkModel& model);

/// Targets implied by a load profile and generator dispatch.
InjectionSpec make_injection_spec(const NetworkModel& model,
                                  const LoadProfile& load,
                                  const GeneratorSetpoints& setpoints);

struct PowerFlowOptions {
  double tol = 1e-8;
  int max_iter = 50;
  std::optional<VoltageState> warm_start;
};

struct PowerFlowResult {
  VoltageState state;
  int iterations = 0;
  double max_mismatch = 0.0;
};

/// Newton-Raphson power flow. Generator buses hold the setpoint magnitude,
/// non-slack generators inject their active setpoint. Throws
/// Error{NoConvergence} on iteration cap or step collapse.
PowerFlowResult solve_pf(const NetworkModel& model, const LoadProfile& load,
                         const GeneratorSetpoints& setpoints,
                         const PowerFlowOptions& options = {});

}  // namespace opflearn
