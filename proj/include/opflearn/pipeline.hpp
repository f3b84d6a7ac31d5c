#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "opflearn/acopf.hpp"
#include "opflearn/dataset.hpp"
#include "opflearn/netio.hpp"
#include "opflearn/polytope.hpp"
#include "opflearn/relax.hpp"

namespace opflearn {

enum class MaxLoadMode {
  /// Relaxed maximum demand per load.
  Solve,
  /// kappa times the nominal demand.
  NominalMultiple,
};

struct RunConfig {
  /// Target number of AC-feasible records.
  long n = 100;
  std::uint64_t seed = 0;
  MaxLoadMode max_load_mode = MaxLoadMode::Solve;
  double kappa = 2.0;
  double proj_tol = kDefaultProjTol;
  double active_tol = kDefaultActiveTol;
  /// Cap on candidates tried; 0 selects 100 n.
  long max_attempts = 0;
  SamplerOptions sampler;
  int workers = 1;

  long attempt_budget() const { return max_attempts > 0 ? max_attempts : 100 * n; }
};

struct TypicalConfig {
  long n = 100;
  double width = 0.2;
  std::uint64_t seed = 0;
  double active_tol = kDefaultActiveTol;
  long max_attempts = 0;
  int workers = 1;
  /// Sample q around p0 instead of q0.
  bool reactive_from_active = false;

  long attempt_budget() const { return max_attempts > 0 ? max_attempts : 100 * n; }
};

struct RunStats {
  long samples_attempted = 0;
  long feasible_found = 0;
  long certificates_added = 0;
  /// Relaxed-feasible candidates whose AC OPF failed.
  long relax_feasible_but_ac_failed = 0;
  /// (feasible record index, distinct active sets so far).
  std::vector<std::pair<long, long>> unique_active_set_curve;
  /// Seconds spent building the input space, sampling, in AC OPF solves and
  /// in projections. Not part of the deterministic output.
  double seconds_setup = 0.0;
  double seconds_sampling = 0.0;
  double seconds_acopf = 0.0;
  double seconds_projection = 0.0;
};

/// A certificate row with the points that produced it.
struct Certificate {
  int row = 0;
  Eigen::VectorXd x_hat;
  Eigen::VectorXd x_star;
};

enum class RunStatus { Complete, AttemptBudgetExhausted, EmptyPolytope };

std::string_view to_string(RunStatus status);

struct RunResult {
  RunStatus status = RunStatus::Complete;
  Dataset dataset;
  RunStats stats;
  /// Final polytope and certificate history (OPF-Learn runs only).
  HalfspacePolytope polytope{0};
  std::vector<Certificate> certificates;

  bool complete() const { return status == RunStatus::Complete; }
};

/// Upper demand bounds used for the initial input space.
Eigen::VectorXd load_upper_bounds(const NetworkModel& model, const RunConfig& config);

/// Samples the shrinking load polytope until n AC-feasible records are found
/// or the attempt budget is spent. Candidates are drawn and processed in
/// fixed batches, so the result does not depend on the worker count.
RunResult create_dataset(const NetworkModel& model, const RunConfig& config);

/// Baseline: i.i.d. uniform draws in [(1 - w) x0, (1 + w) x0] per load.
RunResult typical_dataset(const NetworkModel& model, const TypicalConfig& config);

nlohmann::json to_json(const RunConfig& config);
nlohmann::json to_json(const TypicalConfig& config);
nlohmann::json to_json(const RunStats& stats);

}  // namespace opflearn
