#include <string>

#include <doctest.h>

#include "opflearn/error.hpp"
#include "opflearn/pipeline.hpp"

using namespace opflearn;
using Eigen::VectorXd;

namespace {

const NetworkModel& case5() {
  static const NetworkModel m =
      load_case(std::string(OPFLEARN_DATA_DIR) + "/pglib_opf_case5_pjm.m");
  return m;
}

RunConfig small_run(long n, std::uint64_t seed) {
  RunConfig c;
  c.n = n;
  c.seed = seed;
  return c;
}

void check_same(const Dataset& a, const Dataset& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a.records[k].x.stacked() == b.records[k].x.stacked());
    CHECK(a.records[k].pg == b.records[k].pg);
    CHECK(a.records[k].vg == b.records[k].vg);
    CHECK(a.records[k].duals == b.records[k].duals);
  }
}

}  // namespace

TEST_CASE("zero target does no work") {
  const RunResult r = create_dataset(case5(), small_run(0, 1));
  CHECK(r.complete());
  CHECK(r.dataset.records.empty());
  CHECK(r.stats.samples_attempted == 0);
  CHECK(r.stats.certificates_added == 0);
}

TEST_CASE("case5 run yields AC-feasible records inside the final polytope") {
  const RunResult r = create_dataset(case5(), small_run(10, 7));
  REQUIRE(r.complete());
  REQUIRE(r.dataset.size() == 10);
  CHECK(r.stats.feasible_found == 10);
  CHECK(r.stats.samples_attempted >= 10);
  CHECK(r.stats.samples_attempted >= r.stats.feasible_found + r.stats.certificates_added +
                                          r.stats.relax_feasible_but_ac_failed);
  CHECK(r.polytope.num_rows() == 13 + r.stats.certificates_added);
  CHECK(static_cast<long>(r.certificates.size()) == r.stats.certificates_added);
  REQUIRE(r.stats.unique_active_set_curve.size() == 10);
  CHECK(r.stats.unique_active_set_curve.back().second ==
        static_cast<long>(unique_active_sets(r.dataset).count));

  for (const DatasetRecord& rec : r.dataset.records) {
    CHECK(contains(r.polytope, rec.x.stacked()));
    CHECK(rec.vg.size() == 5);
    CHECK(rec.pg.size() == 5);
    CHECK(active_set_of(rec.duals, r.dataset.active_tol) == rec.active);
    REQUIRE(rec.voltage.has_value());
    // The stored dispatch reproduces the OPF voltages through a power flow.
    const RecordCheck check = check_record(case5(), rec);
    CHECK(check.converged);
    CHECK(check.residual <= 1e-6);
    REQUIRE(check.voltage_error.has_value());
    CHECK(*check.voltage_error <= 1e-5);
  }

  for (const Certificate& c : r.certificates) {
    const VectorXd n = c.x_hat - c.x_star;
    CHECK(r.polytope.a().row(c.row).transpose().isApprox(n));
    CHECK(r.polytope.b()[c.row] == doctest::Approx(n.dot(c.x_star)));
    CHECK(r.polytope.slack(c.x_hat)[c.row] < 0.0);
  }
}

TEST_CASE("results do not depend on the worker count") {
  RunConfig c = small_run(12, 3);
  const RunResult serial = create_dataset(case5(), c);
  const RunResult again = create_dataset(case5(), c);
  c.workers = 4;
  const RunResult parallel = create_dataset(case5(), c);
  check_same(serial.dataset, again.dataset);
  check_same(serial.dataset, parallel.dataset);
  CHECK(serial.stats.samples_attempted == parallel.stats.samples_attempted);
  CHECK(serial.stats.certificates_added == parallel.stats.certificates_added);
  CHECK(serial.polytope.b() == parallel.polytope.b());
}

TEST_CASE("attempt budget is honoured") {
  RunConfig c = small_run(50, 2);
  c.max_attempts = 5;
  const RunResult r = create_dataset(case5(), c);
  CHECK(r.status == RunStatus::AttemptBudgetExhausted);
  CHECK(r.stats.samples_attempted == 5);
  CHECK(r.dataset.size() <= 5);
}

TEST_CASE("nominal-multiple bounds") {
  RunConfig c;
  c.max_load_mode = MaxLoadMode::NominalMultiple;
  c.kappa = 1.5;
  const VectorXd p_bar = load_upper_bounds(case5(), c);
  for (int k = 0; k < case5().num_loads(); ++k) {
    CHECK(p_bar[k] == doctest::Approx(1.5 * case5().loads[k].p0));
  }
  c.kappa = -1.0;
  CHECK_THROWS_AS(create_dataset(case5(), c), Error);
}

TEST_CASE("typical baseline stays in the nominal band") {
  TypicalConfig c;
  c.n = 20;
  c.seed = 9;
  const RunResult r = typical_dataset(case5(), c);
  REQUIRE(r.complete());
  REQUIRE(r.dataset.size() == 20);
  CHECK(r.dataset.method == SamplingMethod::Typical);
  const VectorXd x0 = LoadProfile::nominal(case5()).stacked();
  for (const DatasetRecord& rec : r.dataset.records) {
    const VectorXd x = rec.x.stacked();
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      CHECK(x[j] >= std::min(0.8 * x0[j], 1.2 * x0[j]));
      CHECK(x[j] <= std::max(0.8 * x0[j], 1.2 * x0[j]));
    }
  }
  c.workers = 3;
  check_same(r.dataset, typical_dataset(case5(), c).dataset);

  c.width = 1.0;
  CHECK_THROWS_AS(typical_dataset(case5(), c), Error);
}

TEST_CASE("configuration is echoed") {
  RunConfig c = small_run(4, 5);
  const auto j = to_json(c);
  CHECK(j.at("n") == 4);
  CHECK(j.at("max_attempts") == 400);
  CHECK(j.at("max_load_mode") == "solve");
  const RunResult r = create_dataset(case5(), c);
  CHECK(r.dataset.config == j);
  CHECK(to_json(r.stats).at("feasible_found") == 4);
}
