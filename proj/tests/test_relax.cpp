#include <cmath>
#include <random>

#include <doctest.h>

#include "fd_check.hpp"
#include "opflearn/acopf.hpp"
#include "opflearn/error.hpp"
#include "opflearn/relax.hpp"

using namespace opflearn;
using Eigen::VectorXd;
using Mode = RelaxedFormulation::Mode;

namespace {

const std::string kData = OPFLEARN_DATA_DIR;

const NetworkModel& case5() {
  static const NetworkModel m = load_case(kData + "/pglib_opf_case5_pjm.m");
  return m;
}

const NetworkModel& case14() {
  static const NetworkModel m = load_case(kData + "/case14.m");
  return m;
}

/// Generator at bus 1 (p_max 1), load at bus 2, one line with the given
/// reactance and rating.
NetworkModel two_bus(double x, double rate) {
  NetworkModel m;
  m.name = "two_bus";
  m.buses = {Bus{1, 3, 0, 0, 0.9, 1.1}, Bus{2, 1, 0, 0, 0.9, 1.1}};
  Generator g;
  g.p_max = 1.0;
  g.q_min = -1.0;
  g.q_max = 1.0;
  g.cost_b = 1.0;
  g.case_row = 1;
  m.gens = {g};
  Branch br;
  br.from = 0;
  br.to = 1;
  br.x = x;
  br.rate = rate;
  br.case_row = 1;
  m.branches = {br};
  m.loads = {Load{1, 0.2, 0.0}};
  m.slack = 0;
  return m;
}

/// Largest violation of a point against every row and bound of a problem.
double max_violation(const nlp::NlpProblem& p, const VectorXd& x) {
  const VectorXd c = testing::constraint_vector(p, x);
  VectorXd lo(p.num_variables()), hi(p.num_variables());
  p.variable_bounds(lo, hi);
  VectorXd glo(p.num_inequalities()), ghi(p.num_inequalities());
  p.inequality_bounds(glo, ghi);
  double worst = 0.0;
  for (int r = 0; r < p.num_equalities(); ++r) worst = std::max(worst, std::abs(c[r]));
  for (int i = 0; i < p.num_inequalities(); ++i) {
    const double v = c[p.num_equalities() + i];
    worst = std::max({worst, v - ghi[i], glo[i] - v});
  }
  for (int j = 0; j < p.num_variables(); ++j) {
    worst = std::max({worst, x[j] - hi[j], lo[j] - x[j]});
  }
  return worst;
}

LoadProfile scaled(const NetworkModel& m, double factor) {
  LoadProfile l = LoadProfile::nominal(m);
  l.p *= factor;
  l.q *= factor;
  return l;
}

}  // namespace

TEST_CASE("relaxation derivatives match finite differences") {
  std::mt19937 rng(31);
  std::normal_distribution<double> normal;
  for (const NetworkModel* m : {&case5(), &case14()}) {
    for (Mode mode : {Mode::Cost, Mode::MaxLoad, Mode::Projection}) {
      const RelaxedFormulation p(*m, mode, LoadProfile::nominal(*m), 0);
      VectorXd x = p.initial_point();
      for (int j = 0; j < x.size(); ++j) x[j] += 0.2 * normal(rng);
      VectorXd mult(p.num_equalities() + p.num_inequalities());
      for (int r = 0; r < mult.size(); ++r) mult[r] = normal(rng);
      const auto err = testing::derivative_errors(p, x, 0.9, mult);
      CHECK(err.gradient <= 1e-6);
      CHECK(err.jacobian <= 1e-6);
      CHECK(err.hessian <= 1e-6);
    }
  }
}

TEST_CASE("lifted AC solutions satisfy every relaxed row") {
  std::mt19937 rng(41);
  std::uniform_real_distribution<double> u(0.6, 1.05);
  for (const NetworkModel* m : {&case5(), &case14()}) {
    int accepted = 0;
    for (int trial = 0; trial < 80 && accepted < 50; ++trial) {
      LoadProfile load = LoadProfile::nominal(*m);
      for (int k = 0; k < load.size(); ++k) {
        load.p[k] *= u(rng);
        load.q[k] *= u(rng);
      }
      const AcOpfSolution s = solve_acopf(*m, load);
      if (!s.ok()) continue;
      ++accepted;
      for (Mode mode : {Mode::Cost, Mode::Projection}) {
        const RelaxedFormulation p(*m, mode, load);
        CHECK(max_violation(p, p.lift(s.voltage, s.pg, s.qg, load)) <= 1e-6);
      }
    }
    CHECK(accepted == 50);
  }
}

TEST_CASE("relaxation bounds the AC objective from below") {
  for (const NetworkModel* m : {&case5(), &case14()}) {
    for (double factor : {0.0, 0.5, 1.0}) {
      CAPTURE(factor);
      const LoadProfile load = scaled(*m, factor);
      const AcOpfSolution ac = solve_acopf(*m, load);
      const RelaxResult rx = solve_relaxed(*m, load);
      REQUIRE(ac.ok());
      REQUIRE(rx.ok());
      CHECK(rx.objective <= ac.objective + 1e-6 * (1 + std::abs(ac.objective)));
    }
  }
  // The five-bus case has a known nonzero SOC gap at nominal load.
  const RelaxResult rx = solve_relaxed(case5(), LoadProfile::nominal(case5()));
  CHECK(rx.objective < 17551.89 * 0.999);
}

TEST_CASE("maximum loads") {
  SUBCASE("capacity-limited single bus") {
    NetworkModel m = two_bus(0.1, 0.0);
    m.buses.pop_back();
    m.branches.clear();
    m.gens[0].p_max = 4.0;
    m.loads = {Load{0, 1.0, 0.0}};
    CHECK(max_load(m, 0) == doctest::Approx(4.0).epsilon(1e-6));
  }
  SUBCASE("line-limited two buses") {
    // Reactive losses x |I|^2 ~ 2.5e-4 shave a negligible amount off 0.5.
    CHECK(std::abs(max_load(two_bus(0.001, 0.5), 0) - 0.5) <= 1e-4);
  }
  SUBCASE("five-bus loads exceed their nominal values") {
    for (int k = 0; k < case5().num_loads(); ++k) {
      CHECK(max_load(case5(), k) >= case5().loads[k].p0);
    }
  }
  SUBCASE("relaxing line ratings never lowers the maximum") {
    NetworkModel wider = case5();
    for (auto& br : wider.branches) br.rate *= 2.0;
    for (int k = 0; k < case5().num_loads(); ++k) {
      CHECK(max_load(wider, k) >= max_load(case5(), k) - 1e-6);
    }
  }
  SUBCASE("invalid load index") {
    CHECK_THROWS_AS(max_load(case5(), 7), Error);
  }
}

TEST_CASE("loads beyond the relaxed maximum are infeasible") {
  const NetworkModel& m = case5();
  const double p_bar = max_load(m, 0);

  LoadProfile twice = LoadProfile::nominal(m);
  twice.p[0] = 2.0 * p_bar;
  const RelaxResult rx = solve_relaxed(m, twice);
  CHECK(rx.status == RelaxStatus::RelaxInfeasible);
  CHECK(rx.distance > kDefaultProjTol);

  LoadProfile over = LoadProfile::zero(m);
  over.p[0] = 1.01 * p_bar;
  CHECK_FALSE(solve_acopf(m, over).ok());
}

TEST_CASE("projection onto the relaxed load set") {
  SUBCASE("zero load is feasible") {
    const auto r = nearest_feasible(case5(), LoadProfile::zero(case5()));
    CHECK(r.distance == 0.0);
    CHECK(r.feasible());
  }
  SUBCASE("two-bus analytic projection") {
    const NetworkModel m = two_bus(0.001, 0.5);
    const LoadProfile x_hat{VectorXd::Constant(1, 1.0), VectorXd::Zero(1)};
    const auto r = nearest_feasible(m, x_hat);
    CHECK(std::abs(r.x_star.p[0] - 0.5) <= 1e-4);
    CHECK(std::abs(r.distance - 0.5) <= 1e-4);
  }
  SUBCASE("idempotence") {
    const auto first = nearest_feasible(case5(), scaled(case5(), 3.0));
    REQUIRE(first.distance > 0.0);
    const auto second = nearest_feasible(case5(), first.x_star);
    CHECK(second.distance == 0.0);
  }
}

TEST_CASE("projection residual supports the relaxed load set") {
  const NetworkModel& m = case5();
  std::mt19937 rng(53);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  std::vector<LoadProfile> feasible;
  // Interior points and boundary points from other projections.
  while (feasible.size() < 100) {
    LoadProfile l = LoadProfile::nominal(m);
    for (int k = 0; k < l.size(); ++k) {
      l.p[k] *= u(rng);
      l.q[k] *= u(rng);
    }
    const auto r = nearest_feasible(m, l);
    feasible.push_back(r.x_star);
  }
  for (double factor : {1.8, 2.5, 4.0}) {
    LoadProfile x_hat = scaled(m, factor);
    const auto r = nearest_feasible(m, x_hat);
    REQUIRE(r.distance > 0.0);
    const VectorXd n = x_hat.stacked() - r.x_star.stacked();
    double worst = -1e300;
    for (const auto& x : feasible) {
      worst = std::max(worst, n.dot(x.stacked() - r.x_star.stacked()));
    }
    CHECK(worst <= 1e-8);
  }
}
