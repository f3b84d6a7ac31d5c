#include <algorithm>
#include <cmath>
#include <random>

#include <doctest.h>

#include "opflearn/acopf.hpp"
#include "opflearn/error.hpp"

using namespace opflearn;
using Eigen::VectorXd;

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

/// Dense Jacobian and Lagrangian Hessian assembled from the sparse callbacks.
Eigen::MatrixXd dense_jacobian(const nlp::NlpProblem& p, const VectorXd& x) {
  const auto s = p.jacobian_structure();
  std::vector<double> v(s.size());
  p.jacobian_values(x, v);
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(p.num_equalities() + p.num_inequalities(),
                                            p.num_variables());
  for (std::size_t k = 0; k < s.size(); ++k) j(s[k].row, s[k].col) += v[k];
  return j;
}

Eigen::MatrixXd dense_hessian(const nlp::NlpProblem& p, const VectorXd& x,
                              double sigma, const VectorXd& mult) {
  const auto s = p.hessian_structure();
  std::vector<double> v(s.size());
  p.hessian_values(x, sigma, mult, v);
  const int n = p.num_variables();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t k = 0; k < s.size(); ++k) {
    CHECK(s[k].row >= s[k].col);
    h(s[k].row, s[k].col) += v[k];
    if (s[k].row != s[k].col) h(s[k].col, s[k].row) += v[k];
  }
  return h;
}

VectorXd constraint_vector(const nlp::NlpProblem& p, const VectorXd& x) {
  VectorXd c(p.num_equalities() + p.num_inequalities());
  p.constraints(x, c);
  return c;
}

VectorXd lagrangian_gradient(const nlp::NlpProblem& p, const VectorXd& x,
                             double sigma, const VectorXd& mult) {
  VectorXd g(p.num_variables());
  p.objective_gradient(x, g);
  return sigma * g + dense_jacobian(p, x).transpose() * mult;
}

VectorXd random_point(const AcOpfProblem& p, const NetworkModel& m, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  VectorXd x = p.initial_point();
  for (int i = 0; i < m.num_buses(); ++i) {
    x[p.theta(i)] = 0.3 * u(rng);
    x[p.vm(i)] = 1.0 + 0.1 * u(rng);
  }
  for (int g = 0; g < m.num_gens(); ++g) {
    x[p.pg(g)] += u(rng);
    x[p.qg(g)] += u(rng);
  }
  return x;
}

/// Single bus with one generator and no load.
NetworkModel one_bus(double cost_c) {
  NetworkModel m;
  m.buses = {Bus{1, 3, 0, 0, 0.9, 1.1}};
  Generator g;
  g.p_max = 4.0;
  g.q_min = -1.0;
  g.q_max = 1.0;
  g.cost_a = 2.0;
  g.cost_b = 10.0;
  g.cost_c = cost_c;
  g.case_row = 1;
  m.gens = {g};
  return m;
}

}  // namespace

TEST_CASE("problem dimensions on the five-bus case") {
  const AcOpfProblem p = build_acopf(case5(), LoadProfile::nominal(case5()));
  CHECK(p.num_variables() == 20);
  CHECK(p.num_equalities() == 10);
  // Six rated branches at both ends plus six angle-difference rows.
  CHECK(p.num_inequalities() == 18);
}

TEST_CASE("unrated branches contribute no flow rows") {
  const AcOpfProblem p = build_acopf(case14(), LoadProfile::nominal(case14()));
  NetworkModel unrated = case14();
  for (auto& br : unrated.branches) br.rate = 0.0;
  const AcOpfProblem q = build_acopf(unrated, LoadProfile::nominal(unrated));
  CHECK(p.num_inequalities() == 40);
  CHECK(q.num_inequalities() == 0);
}

TEST_CASE("mis-sized load is rejected") {
  CHECK_THROWS_AS(build_acopf(case5(), LoadProfile::zero(case14())), Error);
}

TEST_CASE("constraint derivatives match finite differences") {
  for (const NetworkModel* m : {&case5(), &case14()}) {
    const AcOpfProblem p = build_acopf(*m, LoadProfile::nominal(*m));
    std::mt19937 rng(23);
    const int rows = p.num_equalities() + p.num_inequalities();
    for (int trial = 0; trial < 5; ++trial) {
      const VectorXd x = random_point(p, *m, rng);
      VectorXd mult(rows);
      for (int r = 0; r < rows; ++r) mult[r] = std::normal_distribution<double>()(rng);
      const Eigen::MatrixXd j = dense_jacobian(p, x);
      const Eigen::MatrixXd h = dense_hessian(p, x, 0.7, mult);
      const double step = 1e-6;
      Eigen::MatrixXd j_fd(j.rows(), j.cols());
      Eigen::MatrixXd h_fd(h.rows(), h.cols());
      for (int c = 0; c < p.num_variables(); ++c) {
        VectorXd plus = x, minus = x;
        plus[c] += step;
        minus[c] -= step;
        j_fd.col(c) = (constraint_vector(p, plus) - constraint_vector(p, minus)) / (2 * step);
        h_fd.col(c) = (lagrangian_gradient(p, plus, 0.7, mult) -
                       lagrangian_gradient(p, minus, 0.7, mult)) / (2 * step);
      }
      CHECK((j - j_fd).cwiseAbs().maxCoeff() / std::max(1.0, j.cwiseAbs().maxCoeff()) <= 1e-6);
      CHECK((h - h_fd).cwiseAbs().maxCoeff() / std::max(1.0, h.cwiseAbs().maxCoeff()) <= 1e-6);
    }
  }
}

TEST_CASE("five-bus nominal solve matches the reference solver") {
  const NetworkModel& m = case5();
  const AcOpfSolution s = solve_acopf(m, LoadProfile::nominal(m));
  REQUIRE(s.ok());
  // Reference: independent primal-dual interior point OPF on the same file.
  CHECK(std::abs(s.objective - 17551.8909208874) <= 1e-3 * 17551.8909208874);
  const VectorXd vm_ref{{1.07761765, 1.08406474, 1.1, 1.06413725, 1.06907066}};
  CHECK((s.voltage.magnitude - vm_ref).cwiseAbs().maxCoeff() <= 1e-4);
  const VectorXd pg_ref{{0.40, 1.70, 3.24498498, 0.0, 4.70693598}};
  CHECK((s.pg - pg_ref).cwiseAbs().maxCoeff() <= 1e-4);
  CHECK(s.objective_scale == doctest::Approx(100.0 / 4000.0));

  // Power balance holds at the returned point.
  const InjectionSpec spec{
      make_injection_spec(m, LoadProfile::nominal(m), s.setpoints()).target, bus_roles(m)};
  Eigen::VectorXcd target = spec.target;
  for (int g = 0; g < m.num_gens(); ++g) {
    target[m.gens[g].bus] += std::complex<double>(0.0, s.qg[g]);
  }
  const Eigen::VectorXcd mismatch = injections(m, s.voltage) - target;
  CHECK(mismatch.cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("fourteen-bus nominal solve matches the reference solver") {
  const NetworkModel& m = case14();
  const AcOpfSolution s = solve_acopf(m, LoadProfile::nominal(m));
  REQUIRE(s.ok());
  CHECK(std::abs(s.objective - 8081.5262571833) <= 1e-3 * 8081.5262571833);
  const VectorXd pg_ref{{1.94330124, 0.367191829, 0.28742826, 0.0, 0.0849505918}};
  CHECK((s.pg - pg_ref).cwiseAbs().maxCoeff() <= 1e-4);
}

TEST_CASE("duals follow the canonical layout and sign convention") {
  const NetworkModel& m = case5();
  const AcOpfSolution s = solve_acopf(m, LoadProfile::nominal(m));
  REQUIRE(s.ok());
  const auto labels = dual_labels(m);
  REQUIRE(s.duals.size() == 2 * 5 + 4 * 5 + 4 * 6);
  REQUIRE(labels.size() == s.duals.size());
  CHECK(labels.front() == "V_upper_1");
  CHECK(labels[10] == "Pg_upper_1");
  CHECK(labels.back() == "AngleDiff_lower_6");
  for (const auto& d : s.duals) {
    CHECK(d.multiplier >= -1e-9);
  }
  // Generators 1 and 2 sit at their upper limits, bus 3 at its voltage cap.
  CHECK(s.duals[10].multiplier > kDefaultActiveTol);
  CHECK(s.duals[11].multiplier > kDefaultActiveTol);
  CHECK(s.duals[2].multiplier > kDefaultActiveTol);
}

TEST_CASE("active set agrees with primal slacks at the solution") {
  const NetworkModel& m = case5();
  const LoadProfile load = LoadProfile::nominal(m);
  const AcOpfSolution s = solve_acopf(m, load);
  REQUIRE(s.ok());
  const ActiveSet set = active_set(s);
  AcOpfProblem p = build_acopf(m, load);
  VectorXd x(p.num_variables());
  x << s.voltage.angle, s.voltage.magnitude, s.pg, s.qg;
  const VectorXd c = constraint_vector(p, x);
  VectorXd lo(p.num_variables()), hi(p.num_variables());
  p.variable_bounds(lo, hi);
  VectorXd glo(p.num_inequalities()), ghi(p.num_inequalities());
  p.inequality_bounds(glo, ghi);

  std::vector<std::uint8_t> tight;
  const double eps = 1e-6;
  for (int i = 0; i < m.num_buses(); ++i) tight.push_back(hi[p.vm(i)] - x[p.vm(i)] <= eps);
  for (int i = 0; i < m.num_buses(); ++i) tight.push_back(x[p.vm(i)] - lo[p.vm(i)] <= eps);
  for (int g = 0; g < m.num_gens(); ++g) tight.push_back(hi[p.pg(g)] - x[p.pg(g)] <= eps);
  for (int g = 0; g < m.num_gens(); ++g) tight.push_back(x[p.pg(g)] - lo[p.pg(g)] <= eps);
  for (int g = 0; g < m.num_gens(); ++g) tight.push_back(hi[p.qg(g)] - x[p.qg(g)] <= eps);
  for (int g = 0; g < m.num_gens(); ++g) tight.push_back(x[p.qg(g)] - lo[p.qg(g)] <= eps);
  const int nr = static_cast<int>(p.rated_branches().size());
  const int rows = p.num_equalities();
  for (int side = 0; side < 2; ++side) {
    for (int e = 0; e < m.num_branches(); ++e) {
      const int r = side * nr + e;  // every case5 branch is rated
      tight.push_back(ghi[r] - c[rows + r] <= eps * std::max(1.0, ghi[r]));
    }
  }
  for (int e = 0; e < m.num_branches(); ++e) {
    tight.push_back(ghi[2 * nr + e] - c[rows + 2 * nr + e] <= eps);
  }
  for (int e = 0; e < m.num_branches(); ++e) {
    tight.push_back(c[rows + 2 * nr + e] - glo[2 * nr + e] <= eps);
  }
  CHECK(set.bits == tight);
  CHECK(set.count() > 0);
}

TEST_CASE("active set threshold is strict") {
  AcOpfSolution s;
  s.duals = {{DualFamily::V_upper, 1, 0.0}, {DualFamily::V_lower, 1, 1e-5},
             {DualFamily::Pg_upper, 1, 2e-5}};
  CHECK(active_set(s, 1e-5).to_string() == "001");
  s.duals[2].multiplier = 0.0;
  CHECK(active_set(s).count() == 0);
  CHECK(active_set(s) == active_set(s));
}

TEST_CASE("zero load leaves flow limits inactive") {
  const NetworkModel& m = case5();
  const AcOpfSolution s = solve_acopf(m, LoadProfile::zero(m));
  REQUIRE(s.ok());
  for (const auto& d : s.duals) {
    if (d.family == DualFamily::Flow_from || d.family == DualFamily::Flow_to) {
      CHECK(d.multiplier <= kDefaultActiveTol);
    }
  }
  // Only losses need serving; dispatch stays near the lower limits.
  CHECK(s.pg.sum() <= 0.05);
}

TEST_CASE("single idle generator costs only its constant term") {
  const NetworkModel m = one_bus(7.5);
  const AcOpfSolution s = solve_acopf(m, LoadProfile::zero(m));
  REQUIRE(s.ok());
  CHECK(std::abs(s.pg[0]) <= 1e-6);
  CHECK(s.objective == doctest::Approx(7.5).epsilon(1e-6));
}

TEST_CASE("objective is invariant to generator order") {
  const std::string path = kData + "/pglib_opf_case5_pjm.m";
  RawCase raw = read_matpower_file(path);
  std::reverse(raw.gen.begin(), raw.gen.end());
  std::reverse(raw.gencost.begin(), raw.gencost.end());
  const NetworkModel permuted = build_model(raw);
  const AcOpfSolution a = solve_acopf(case5(), LoadProfile::nominal(case5()));
  const AcOpfSolution b = solve_acopf(permuted, LoadProfile::nominal(permuted));
  REQUIRE(a.ok());
  REQUIRE(b.ok());
  CHECK(b.objective == doctest::Approx(a.objective).epsilon(1e-6));
}

TEST_CASE("heavily overloaded case is reported as a failure") {
  const NetworkModel& m = case5();
  LoadProfile load = LoadProfile::nominal(m);
  load.p *= 3.0;
  load.q *= 3.0;
  const AcOpfSolution s = solve_acopf(m, load);
  CHECK_FALSE(s.ok());
}
