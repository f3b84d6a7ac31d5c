#include "opflearn/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <optional>
#include <random>
#include <set>
#include <thread>

#include "opflearn/error.hpp"

namespace opflearn {

using Eigen::VectorXd;

namespace {

constexpr long kBatchSize = 8;

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <typename Fn>
void parallel_for(int workers, std::size_t n, Fn&& fn) {
  const auto threads = std::min<std::size_t>(std::max(workers, 1), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      fn(i);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        fn(i);
      }
    });
  }
}

std::vector<AcOpfSolution> solve_batch(const NetworkModel& model,
                                       const std::vector<VectorXd>& xs, int workers) {
  std::vector<AcOpfSolution> out(xs.size());
  parallel_for(workers, xs.size(), [&](std::size_t i) {
    out[i] = solve_acopf(model, LoadProfile::from_stacked(xs[i]));
  });
  return out;
}

void record_feasible(RunResult& result, std::set<ActiveSet>& seen,
                     const VectorXd& x, const AcOpfSolution& sol) {
  DatasetRecord rec = make_record(LoadProfile::from_stacked(x), sol, result.dataset.active_tol);
  seen.insert(rec.active);
  result.dataset.records.push_back(std::move(rec));
  ++result.stats.feasible_found;
  result.stats.unique_active_set_curve.emplace_back(
      result.stats.feasible_found - 1, static_cast<long>(seen.size()));
}

}  // namespace

std::string_view to_string(RunStatus status) {
  switch (status) {
    case RunStatus::Complete:
      return "Complete";
    case RunStatus::AttemptBudgetExhausted:
      return "AttemptBudgetExhausted";
    case RunStatus::EmptyPolytope:
      return "EmptyPolytope";
  }
  return "Unknown";
}

VectorXd load_upper_bounds(const NetworkModel& model, const RunConfig& config) {
  VectorXd p_bar(model.num_loads());
  for (int k = 0; k < model.num_loads(); ++k) {
    if (config.max_load_mode == MaxLoadMode::Solve) {
      RelaxConfig rc;
      rc.proj_tol = config.proj_tol;
      p_bar[k] = max_load(model, k, rc);
    } else {
      p_bar[k] = config.kappa * model.loads[k].p0;
    }
  }
  if (!(p_bar.array() > 0.0).all()) {
    throw Error(ErrorKind::InvalidArgument, "every load needs a positive upper bound");
  }
  return p_bar;
}

RunResult create_dataset(const NetworkModel& model, const RunConfig& config) {
  if (config.n < 0) {
    throw Error(ErrorKind::InvalidArgument, "target sample count must be >= 0");
  }
  if (config.max_load_mode == MaxLoadMode::NominalMultiple && !(config.kappa > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "kappa must be positive");
  }
  RunResult result;
  result.dataset = make_dataset(model, SamplingMethod::OpfLearn, config.seed, config.active_tol);
  result.dataset.config = to_json(config);
  if (config.n == 0) {
    return result;
  }
  RunStats& stats = result.stats;

  Stopwatch setup;
  result.polytope = init_input_space(load_upper_bounds(model, config), model.total_p_max());
  stats.seconds_setup = setup.seconds();

  RelaxConfig relax_config;
  relax_config.proj_tol = config.proj_tol;
  Sampler sampler(config.seed, config.sampler);
  std::set<ActiveSet> seen;
  const long budget = config.attempt_budget();

  while (stats.feasible_found < config.n) {
    if (stats.samples_attempted >= budget) {
      result.status = RunStatus::AttemptBudgetExhausted;
      break;
    }
    const long batch = std::min(kBatchSize, budget - stats.samples_attempted);
    std::vector<VectorXd> xs;
    Stopwatch sampling;
    try {
      for (long b = 0; b < batch; ++b) {
        xs.push_back(sampler.sample(result.polytope));
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::EmptyPolytope) {
        throw;
      }
      result.status = RunStatus::EmptyPolytope;
      break;
    }
    stats.seconds_sampling += sampling.seconds();

    Stopwatch acopf;
    const std::vector<AcOpfSolution> sols = solve_batch(model, xs, config.workers);
    stats.seconds_acopf += acopf.seconds();

    // Projections do not depend on the polytope, so they run for the whole
    // batch up front; a failed projection leaves the entry empty.
    Stopwatch projection;
    std::vector<std::optional<ProjectionResult>> projs(xs.size());
    parallel_for(config.workers, xs.size(), [&](std::size_t i) {
      if (!sols[i].ok()) {
        try {
          projs[i] = nearest_feasible(model, LoadProfile::from_stacked(xs[i]), relax_config);
        } catch (const Error&) {
        }
      }
    });
    stats.seconds_projection += projection.seconds();

    for (std::size_t i = 0; i < xs.size() && stats.feasible_found < config.n; ++i) {
      ++stats.samples_attempted;
      if (!contains(result.polytope, xs[i])) {
        continue;  // cut by a certificate from earlier in this batch
      }
      if (sols[i].ok()) {
        record_feasible(result, seen, xs[i], sols[i]);
      } else if (projs[i] && projs[i]->distance > config.proj_tol) {
        const VectorXd x_star = projs[i]->x_star.stacked();
        add_halfspace(result.polytope, xs[i], x_star, config.proj_tol);
        result.certificates.push_back({result.polytope.num_rows() - 1, xs[i], x_star});
        ++stats.certificates_added;
      } else {
        ++stats.relax_feasible_but_ac_failed;
      }
    }
  }
  return result;
}

RunResult typical_dataset(const NetworkModel& model, const TypicalConfig& config) {
  if (!(config.width > 0.0 && config.width < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "width must lie in (0, 1)");
  }
  if (config.n < 0) {
    throw Error(ErrorKind::InvalidArgument, "target sample count must be >= 0");
  }
  LoadProfile nominal = LoadProfile::nominal(model);
  if (config.reactive_from_active) {
    nominal.q = nominal.p;
  }
  const VectorXd x0 = nominal.stacked();
  if (x0.size() == 0 || x0.cwiseAbs().maxCoeff() == 0.0) {
    throw Error(ErrorKind::InvalidArgument, "nominal loads are all zero");
  }
  const VectorXd lo = ((1.0 - config.width) * x0).cwiseMin((1.0 + config.width) * x0);
  const VectorXd hi = ((1.0 - config.width) * x0).cwiseMax((1.0 + config.width) * x0);

  RunResult result;
  result.dataset = make_dataset(model, SamplingMethod::Typical, config.seed, config.active_tol);
  result.dataset.config = to_json(config);
  RunStats& stats = result.stats;
  std::mt19937_64 rng(config.seed);
  std::set<ActiveSet> seen;
  const long budget = config.attempt_budget();

  while (stats.feasible_found < config.n) {
    if (stats.samples_attempted >= budget) {
      result.status = RunStatus::AttemptBudgetExhausted;
      break;
    }
    const long batch = std::min(kBatchSize, budget - stats.samples_attempted);
    Stopwatch sampling;
    std::vector<VectorXd> xs(batch, VectorXd(x0.size()));
    for (VectorXd& x : xs) {
      for (Eigen::Index j = 0; j < x.size(); ++j) {
        x[j] = lo[j] == hi[j] ? lo[j]
                              : std::uniform_real_distribution<double>(lo[j], hi[j])(rng);
      }
    }
    stats.seconds_sampling += sampling.seconds();
    Stopwatch acopf;
    const std::vector<AcOpfSolution> sols = solve_batch(model, xs, config.workers);
    stats.seconds_acopf += acopf.seconds();
    for (std::size_t i = 0; i < xs.size() && stats.feasible_found < config.n; ++i) {
      ++stats.samples_attempted;
      if (sols[i].ok()) {
        record_feasible(result, seen, xs[i], sols[i]);
      }
    }
  }
  return result;
}

nlohmann::json to_json(const RunConfig& c) {
  return {
      {"n", c.n},
      {"seed", c.seed},
      {"max_load_mode", c.max_load_mode == MaxLoadMode::Solve ? "solve" : "nominal"},
      {"kappa", c.kappa},
      {"proj_tol", c.proj_tol},
      {"active_tol", c.active_tol},
      {"max_attempts", c.attempt_budget()},
      {"thinning", c.sampler.thinning},
      {"burn_in", c.sampler.burn_in},
      {"batch_size", kBatchSize},
  };
}

nlohmann::json to_json(const TypicalConfig& c) {
  return {
      {"n", c.n},
      {"width", c.width},
      {"seed", c.seed},
      {"active_tol", c.active_tol},
      {"max_attempts", c.attempt_budget()},
      {"reactive_from_active", c.reactive_from_active},
      {"batch_size", kBatchSize},
  };
}

nlohmann::json to_json(const RunStats& s) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& [index, count] : s.unique_active_set_curve) {
    curve.push_back({index, count});
  }
  return {
      {"samples_attempted", s.samples_attempted},
      {"feasible_found", s.feasible_found},
      {"certificates_added", s.certificates_added},
      {"relax_feasible_but_ac_failed", s.relax_feasible_but_ac_failed},
      {"unique_active_set_curve", std::move(curve)},
  };
}

}  // namespace opflearn
