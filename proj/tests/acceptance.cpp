// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>

#include "fd_check.hpp"
#include "nlp_problems.hpp"
#include "opflearn/acopf.hpp"
#include "opflearn/dataset.hpp"
#include "opflearn/mlbench.hpp"
#include "opflearn/pipeline.hpp"
#include "opflearn/polytope.hpp"
#include "opflearn/powerflow.hpp"
#include "opflearn/relax.hpp"

using namespace opflearn;
using namespace opflearn::testing;
using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fs = std::filesystem;

namespace {

constexpr long kSamples = 2000;
constexpr std::uint64_t kLearnSeed = 1;
constexpr std::uint64_t kTypicalSeed = 2;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

const NetworkModel& case5() {
  static const NetworkModel m = load_case(std::string(OPFLEARN_DATA_DIR) + "/pglib_opf_case5_pjm.m");
  return m;
}

const NetworkModel& case14() {
  static const NetworkModel m = load_case(std::string(OPFLEARN_DATA_DIR) + "/case14.m");
  return m;
}

const RunResult& learn_run() {
  static const RunResult r = [] {
    RunConfig c;
    c.n = kSamples;
    c.seed = kLearnSeed;
    return create_dataset(case5(), c);
  }();
  return r;
}

const RunResult& typical_run() {
  static const RunResult r = [] {
    TypicalConfig c;
    c.n = kSamples;
    c.seed = kTypicalSeed;
    return typical_dataset(case5(), c);
  }();
  return r;
}

Verdict representativeness() {
  const RunResult& a = learn_run();
  const RunResult& b = typical_run();
  if (!a.complete() || !b.complete()) {
    return {false, fmt("runs incomplete (%zu, %zu records)", a.dataset.size(), b.dataset.size())};
  }
  const auto learn = unique_active_sets(a.dataset).count;
  const auto typical = unique_active_sets(b.dataset).count;
  const double ratio = typical == 0 ? INFINITY : double(learn) / double(typical);
  return {ratio >= 10.0, fmt("case5 N=%ld: OPF-Learn %zu vs typical %zu unique active sets, "
                             "ratio %.1f (need >= 10)",
                             kSamples, learn, typical, ratio)};
}

Verdict cross_dataset_errors() {
  const ml::CrossReport r = ml::cross_experiment(learn_run().dataset, typical_run().dataset, {});
  const auto mse = [&](SamplingMethod train, SamplingMethod test) {
    return r.cell(ml::Target::Pg, train, test).result.mse;
  };
  const double typical_ratio = mse(SamplingMethod::Typical, SamplingMethod::OpfLearn) /
                               mse(SamplingMethod::Typical, SamplingMethod::Typical);
  const double learn_ratio = mse(SamplingMethod::OpfLearn, SamplingMethod::OpfLearn) /
                             mse(SamplingMethod::OpfLearn, SamplingMethod::Typical);
  return {typical_ratio >= 10.0 && learn_ratio <= 10.0,
          fmt("Pg MSE(OPF-Learn test)/MSE(typical test): typical-trained %.3g (need >= 10), "
              "OPF-Learn-trained %.3g (need <= 10)",
              typical_ratio, learn_ratio)};
}

Verdict relaxation_lower_bound() {
  RunConfig c14;
  c14.n = 100;
  c14.seed = 3;
  const RunResult run14 = create_dataset(case14(), c14);
  int checked = 0;
  int held = 0;
  double worst = -INFINITY;
  const auto audit = [&](const NetworkModel& m, const Dataset& ds) {
    for (std::size_t k = 0; k < ds.size() && k < 100; ++k) {
      ++checked;
      const RelaxResult rx = solve_relaxed(m, ds.records[k].x);
      const double ac = ds.records[k].objective;
      const double gap = rx.ok() ? (rx.objective - ac) / std::max(1.0, std::abs(ac)) : INFINITY;
      worst = std::max(worst, gap);
      held += gap <= 1e-6 ? 1 : 0;
    }
  };
  audit(case5(), learn_run().dataset);
  audit(case14(), run14.dataset);
  return {checked == 200 && held == checked,
          fmt("%d/%d accepted case5+case14 loads have relaxed cost <= AC cost "
              "(worst relative excess %.2e, tol 1e-6)",
              held, checked, worst)};
}

Verdict certificate_validity() {
  const RunResult& r = learn_run();
  const HalfspacePolytope& p = r.polytope;
  double worst_plane = 0.0;
  double worst_violation = 0.0;
  long cuts = 0;
  for (const Certificate& c : r.certificates) {
    const VectorXd n = c.x_hat - c.x_star;
    const VectorXd a = p.a().row(c.row).transpose();
    worst_plane = std::max({worst_plane, std::abs(a.dot(c.x_star) - p.b()[c.row]),
                            (a - n).cwiseAbs().maxCoeff()});
    worst_violation =
        std::max(worst_violation, std::abs((a.dot(c.x_hat) - p.b()[c.row]) - n.squaredNorm()));
    for (const DatasetRecord& rec : r.dataset.records) {
      cuts += a.dot(rec.x.stacked()) > p.b()[c.row] + 1e-8 ? 1 : 0;
    }
  }
  const bool ok = !r.certificates.empty() && worst_plane <= 1e-8 && worst_violation <= 1e-8 &&
                  cuts == 0;
  return {ok, fmt("%zu certificates: |n'x*-b| <= %.1e, |viol-||n||^2| <= %.1e (tol 1e-8), "
                  "%ld of %zu accepted samples cut",
                  r.certificates.size(), worst_plane, worst_violation, cuts, r.dataset.size())};
}

Verdict sampler_uniformity() {
  constexpr int kDim = 6;
  constexpr int kDraws = 50000;
  HalfspacePolytope box(kDim);
  for (int j = 0; j < kDim; ++j) {
    box.add_row(VectorXd::Unit(kDim, j), 1.0);
    box.add_row(-VectorXd::Unit(kDim, j), 0.0);
  }
  Sampler sampler(20240611);
  MatrixXd s(kDraws, kDim);
  for (int k = 0; k < kDraws; ++k) s.row(k) = sampler.sample(box).transpose();
  const VectorXd mean = s.colwise().mean();
  const MatrixXd centered = s.rowwise() - mean.transpose();
  const MatrixXd cov = centered.transpose() * centered / (kDraws - 1);
  double worst_corr = 0.0;
  for (int i = 0; i < kDim; ++i) {
    for (int j = i + 1; j < kDim; ++j) {
      worst_corr = std::max(worst_corr, std::abs(cov(i, j) / std::sqrt(cov(i, i) * cov(j, j))));
    }
  }
  const ChebyshevBall box_ball = chebyshev_center(box);
  const double center_err = (box_ball.center - VectorXd::Constant(kDim, 0.5)).cwiseAbs().maxCoeff();
  const ChebyshevBall tri = chebyshev_center(init_input_space(VectorXd::Constant(1, 1.0), 1.0));
  const double tri_err = std::abs(tri.radius - 1.0 / (2.0 + std::sqrt(2.0)));
  const bool ok = mean.minCoeff() >= 0.47 && mean.maxCoeff() <= 0.53 && worst_corr < 0.05 &&
                  center_err <= 1e-6 && tri_err <= 1e-6;
  return {ok, fmt("means in [%.4f, %.4f], max |corr| %.4f; box center err %.1e, "
                  "triangle radius err %.1e",
                  mean.minCoeff(), mean.maxCoeff(), worst_corr, center_err, tri_err)};
}

Verdict solution_fidelity() {
  double worst_residual = 0.0;
  double worst_voltage = 0.0;
  long failures = 0;
  long checked = 0;
  const fs::path dir = fs::temp_directory_path() / "opflearn_acceptance_fidelity";
  for (const RunResult* r : {&learn_run(), &typical_run()}) {
    for (const DatasetRecord& rec : r->dataset.records) {
      const RecordCheck c = check_record(case5(), rec);
      ++checked;
      worst_residual = std::max(worst_residual, c.residual);
      worst_voltage = std::max(worst_voltage, c.voltage_error.value_or(INFINITY));
      failures += c.converged && c.residual <= 1e-6 && c.voltage_error.value_or(INFINITY) <= 1e-5
                      ? 0
                      : 1;
    }
    // The same check from the files on disk.
    fs::remove_all(dir);
    write_csv(r->dataset, dir);
    for (const DatasetRecord& rec : read_csv(dir).records) {
      const RecordCheck c = check_record(case5(), rec);
      ++checked;
      worst_residual = std::max(worst_residual, c.residual);
      failures += c.converged && c.residual <= 1e-6 ? 0 : 1;
    }
  }
  return {failures == 0, fmt("%ld record checks: max residual %.2e (tol 1e-6), "
                             "max voltage deviation %.2e (tol 1e-5), %ld failures",
                             checked, worst_residual, worst_voltage, failures)};
}

VoltageState random_state(int n, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  VoltageState s = VoltageState::flat(n);
  for (int i = 0; i < n; ++i) {
    s.magnitude[i] = 1.0 + 0.1 * u(rng);
    s.angle[i] = 0.3 * u(rng);
  }
  return s;
}

double power_flow_jacobian_error(const NetworkModel& m, std::mt19937& rng) {
  const auto roles = bus_roles(m);
  const InjectionSpec spec{Eigen::VectorXcd::Zero(m.num_buses()), roles};
  const VoltageState s = random_state(m.num_buses(), rng);
  const MatrixXd jac = jacobian(m, s, roles);
  MatrixXd fd(jac.rows(), jac.cols());
  const double h = 1e-6;
  int col = 0;
  for (int pass = 0; pass < 2; ++pass) {
    for (int i = 0; i < m.num_buses(); ++i) {
      if (pass == 0 ? roles[i] == BusRole::Slack : roles[i] != BusRole::Load) continue;
      VoltageState plus = s, minus = s;
      (pass == 0 ? plus.angle : plus.magnitude)[i] += h;
      (pass == 0 ? minus.angle : minus.magnitude)[i] -= h;
      fd.col(col++) = (residual(m, plus, spec).values - residual(m, minus, spec).values) / (2 * h);
    }
  }
  return (jac - fd).cwiseAbs().maxCoeff() / std::max(1.0, jac.cwiseAbs().maxCoeff());
}

double acopf_jacobian_error(const NetworkModel& m, std::mt19937& rng) {
  const AcOpfProblem p = build_acopf(m, LoadProfile::nominal(m));
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
  const VectorXd mult = VectorXd::Zero(p.num_equalities() + p.num_inequalities());
  return derivative_errors(p, x, 1.0, mult).jacobian;
}

double backprop_error() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const MatrixXd x = MatrixXd::NullaryExpr(10, 6, [&] { return u(rng); });
  const MatrixXd y = MatrixXd::NullaryExpr(10, 5, [&] { return u(rng); });
  const ml::Mlp net(ml::Mlp::standard_widths(6, 5), 5);
  VectorXd grad;
  VectorXd scratch;
  net.loss_and_gradient(x, y, grad);
  ml::Mlp probe = net;
  const VectorXd theta = net.parameters();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(theta[i]));
    VectorXd t = theta;
    t[i] += h;
    probe.set_parameters(t);
    const double up = probe.loss_and_gradient(x, y, scratch);
    t[i] -= 2 * h;
    probe.set_parameters(t);
    const double down = probe.loss_and_gradient(x, y, scratch);
    worst = std::max(worst, std::abs((up - down) / (2 * h) - grad[i]) /
                                std::max(1.0, std::abs(grad[i])));
  }
  return worst;
}

Verdict solver_correctness() {
  int solved = 0;
  int total = 0;
  double worst_kkt = 0.0;
  double worst_x = 0.0;
  double degenerate_x = 0.0;
  // `degenerate`: the optimum lies on a constraint with a zero multiplier, where
  // interior iterates approach x* like sqrt(mu); only the KKT residuals are gated.
  const auto run = [&](const DenseProblem& p, const VectorXd& x0, const VectorXd& expected,
                       bool degenerate = false) {
    ++total;
    const nlp::NlpSolution s = nlp::solve(p, {}, x0);
    if (!s.ok()) return;
    const nlp::KktReport r = nlp::kkt_report(p, s);
    const double kkt = std::max(stationarity(p, s), r.primal);
    const double dx = expected.size() ? (s.x - expected).cwiseAbs().maxCoeff() : 0.0;
    worst_kkt = std::max(worst_kkt, kkt);
    if (degenerate) {
      degenerate_x = std::max(degenerate_x, dx);
    } else {
      worst_x = std::max(worst_x, dx);
    }
    const bool located = degenerate || dx <= 1e-6;
    solved += kkt <= 1e-6 && r.complementarity <= 1e-5 && located ? 1 : 0;
  };
  run(bounded_square(), VectorXd::Constant(1, 3.0), VectorXd::Constant(1, 1.0));
  run(projection_onto_line(), VectorXd::Zero(2), VectorXd{{1.0, 0.0}});
  run(interval_chebyshev_lp(), VectorXd::Zero(2), VectorXd{{0.0, 1.0}});
  run(constrained_rosenbrock(), VectorXd{{-1.2, 1.0}}, VectorXd{{1.0, 1.0}}, true);
  for (unsigned seed = 1; seed <= 10; ++seed) {
    run(random_convex_qp(seed), VectorXd::Zero(4), VectorXd());
  }

  std::mt19937 rng(23);
  double jac = 0.0;
  for (const NetworkModel* m : {&case5(), &case14()}) {
    for (int trial = 0; trial < 5; ++trial) {
      jac = std::max({jac, power_flow_jacobian_error(*m, rng), acopf_jacobian_error(*m, rng)});
    }
  }
  const double backprop = backprop_error();
  return {solved == total && jac <= 1e-6 && backprop <= 1e-5,
          fmt("%d/%d NLP problems to 1e-6 (max KKT %.1e, max |x-x*| %.1e, degenerate "
              "Rosenbrock |x-x*| %.1e); Jacobian FD %.1e (tol 1e-6); backprop FD %.1e (tol 1e-5)",
              solved, total, worst_kkt, worst_x, degenerate_x, jac, backprop)};
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Verdict determinism() {
  const fs::path root = fs::temp_directory_path() / "opflearn_acceptance_determinism";
  fs::remove_all(root);
  int codes[2];
  for (int k = 0; k < 2; ++k) {
    const std::string cmd = std::string("\"") + OPFLEARN_CLI + "\" generate --case \"" +
                            OPFLEARN_DATA_DIR + "/pglib_opf_case5_pjm.m\" --n 200 --seed 7 " +
                            "--out \"" + (root / std::to_string(k)).string() + "\" > /dev/null";
    codes[k] = std::system(cmd.c_str());
  }
  int identical = 0;
  for (const char* f : {"inputs.csv", "outputs.csv", "duals.csv"}) {
    const std::string a = slurp(root / "0" / f);
    identical += !a.empty() && a == slurp(root / "1" / f) ? 1 : 0;
  }
  return {codes[0] == 0 && codes[1] == 0 && identical == 3,
          fmt("two generate runs (case5, n=200, seed 7): exit %d/%d, %d/3 CSVs byte-identical",
              codes[0], codes[1], identical)};
}

Verdict input_space() {
  const NetworkModel& m = case5();
  const int n = m.num_loads();
  VectorXd p_bar(n);
  for (int k = 0; k < n; ++k) p_bar[k] = max_load(m, k);
  const double total = m.total_p_max();
  const HalfspacePolytope p = init_input_space(p_bar, total);
  int matched = 0;
  const auto row_is = [&](int r, const VectorXd& a, double b) {
    matched += p.a().row(r).transpose() == a && p.b()[r] == b ? 1 : 0;
  };
  for (int k = 0; k < n; ++k) {
    const VectorXd ep = VectorXd::Unit(2 * n, k);
    const VectorXd eq = VectorXd::Unit(2 * n, n + k);
    row_is(k, ep, p_bar[k]);
    row_is(n + k, -ep, 0.0);
    row_is(2 * n + k, -eq, 0.0);
    row_is(3 * n + k, eq - ep, 0.0);
  }
  VectorXd sum = VectorXd::Zero(2 * n);
  sum.head(n).setOnes();
  row_is(4 * n, sum, total);
  return {p.num_rows() == 4 * n + 1 && matched == 4 * n + 1,
          fmt("%d rows (expect %d), %d match p <= p_bar, p >= 0, q >= 0, q <= p, "
              "sum p <= %.4g",
              p.num_rows(), 4 * n + 1, matched, total)};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Verdict()>> criteria[] = {
      {"1 representativeness gap", representativeness},
      {"2 cross-dataset error asymmetry", cross_dataset_errors},
      {"3 relaxation lower bound", relaxation_lower_bound},
      {"4 certificate validity", certificate_validity},
      {"5 sampler uniformity", sampler_uniformity},
      {"6 solution fidelity", solution_fidelity},
      {"7 solver correctness", solver_correctness},
      {"8 determinism", determinism},
      {"9 input-space construction", input_space},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += v.pass ? 0 : 1;
    std::printf("[%s] %s: %s\n", v.pass ? "PASS" : "FAIL", name, v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", int(std::size(criteria)) - failed, std::size(criteria));
  return failed == 0 ? 0 : 1;
}
