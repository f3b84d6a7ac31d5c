#include "opflearn/acopf.hpp"

#include <array>
#include <cmath>

#include <Eigen/Core>

#include "opflearn/error.hpp"

namespace opflearn {

namespace {

using Eigen::Matrix4d;
using Eigen::Vector4d;
using Eigen::VectorXd;

/// One end's injection h = k vi^2 + vi vj (alpha cos d + beta sin d) with
/// d = theta_i - theta_j, evaluated with derivatives in branch order
/// (theta_from, theta_to, v_from, v_to).
struct EndTerm {
  double k = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  bool at_to = false;  // own bus is the to bus
};

struct TermValue {
  double h = 0.0;
  Vector4d grad;
  Matrix4d hess;
};

struct BranchTerms {
  EndTerm p_from, q_from, p_to, q_to;
};

BranchTerms branch_terms(const BranchAdmittance& y) {
  BranchTerms t;
  t.p_from = {y.ff.real(), y.ft.real(), y.ft.imag(), false};
  t.q_from = {-y.ff.imag(), -y.ft.imag(), y.ft.real(), false};
  t.p_to = {y.tt.real(), y.tf.real(), y.tf.imag(), true};
  t.q_to = {-y.tt.imag(), -y.tf.imag(), y.tf.real(), true};
  return t;
}

TermValue evaluate(const EndTerm& term, double theta_f, double theta_t,
                   double v_f, double v_t) {
  // Local order (theta_i, theta_j, v_i, v_j) for own bus i.
  const double ti = term.at_to ? theta_t : theta_f;
  const double tj = term.at_to ? theta_f : theta_t;
  const double vi = term.at_to ? v_t : v_f;
  const double vj = term.at_to ? v_f : v_t;
  const double d = ti - tj;
  const double cs = std::cos(d);
  const double sn = std::sin(d);
  const double c = term.alpha * cs + term.beta * sn;
  const double dc = -term.alpha * sn + term.beta * cs;
  const double vv = vi * vj;

  TermValue local;
  local.h = term.k * vi * vi + vv * c;
  local.grad << vv * dc, -vv * dc, 2 * term.k * vi + vj * c, vi * c;
  local.hess << -vv * c, vv * c, vj * dc, vi * dc,  //
      vv * c, -vv * c, -vj * dc, -vi * dc,          //
      vj * dc, -vj * dc, 2 * term.k, c,             //
      vi * dc, -vi * dc, c, 0.0;
  if (!term.at_to) {
    return local;
  }
  static constexpr std::array<int, 4> swap = {1, 0, 3, 2};
  TermValue out;
  out.h = local.h;
  for (int a = 0; a < 4; ++a) {
    out.grad[a] = local.grad[swap[a]];
    for (int b = 0; b < 4; ++b) {
      out.hess(a, b) = local.hess(swap[a], swap[b]);
    }
  }
  return out;
}

/// |S|^2 = P^2 + Q^2 with derivatives.
TermValue squared_flow(const TermValue& p, const TermValue& q) {
  TermValue f;
  f.h = p.h * p.h + q.h * q.h;
  f.grad = 2 * (p.h * p.grad + q.h * q.grad);
  f.hess = 2 * (p.grad * p.grad.transpose() + p.h * p.hess +
                q.grad * q.grad.transpose() + q.h * q.hess);
  return f;
}

constexpr std::array<std::pair<int, int>, 10> kLowerPairs = {{
    {0, 0}, {1, 0}, {1, 1}, {2, 0}, {2, 1}, {2, 2}, {3, 0}, {3, 1}, {3, 2}, {3, 3},
}};

}  // namespace

AcOpfProblem::AcOpfProblem(const NetworkModel& model, const LoadProfile& load)
    : model_(model), load_(load), nb_(model.num_buses()), ng_(model.num_gens()) {
  if (load.size() != model.num_loads() || load.q.size() != model.num_loads()) {
    throw Error(ErrorKind::InvalidArgument,
                "load profile has " + std::to_string(load.size()) +
                    " entries, model has " + std::to_string(model.num_loads()) +
                    " loads");
  }
  y_.reserve(model.branches.size());
  for (int e = 0; e < model.num_branches(); ++e) {
    const Branch& br = model.branches[e];
    y_.push_back(branch_admittance(br));
    if (br.has_flow_limit()) {
      rated_.push_back(e);
    }
    if (br.has_angle_limit()) {
      angle_limited_.push_back(e);
    }
  }
}

void AcOpfProblem::variable_bounds(Eigen::Ref<VectorXd> lower,
                                   Eigen::Ref<VectorXd> upper) const {
  for (int i = 0; i < nb_; ++i) {
    const bool slack = i == model_.slack;
    lower[theta(i)] = slack ? 0.0 : -nlp::kInf;
    upper[theta(i)] = slack ? 0.0 : nlp::kInf;
    lower[vm(i)] = model_.buses[i].v_min;
    upper[vm(i)] = model_.buses[i].v_max;
  }
  for (int g = 0; g < ng_; ++g) {
    lower[pg(g)] = model_.gens[g].p_min;
    upper[pg(g)] = model_.gens[g].p_max;
    lower[qg(g)] = model_.gens[g].q_min;
    upper[qg(g)] = model_.gens[g].q_max;
  }
}

void AcOpfProblem::inequality_bounds(Eigen::Ref<VectorXd> lower,
                                     Eigen::Ref<VectorXd> upper) const {
  const int nr = static_cast<int>(rated_.size());
  for (int r = 0; r < nr; ++r) {
    const double rate = model_.branches[rated_[r]].rate;
    lower[r] = lower[nr + r] = -nlp::kInf;
    upper[r] = upper[nr + r] = rate * rate;
  }
  for (std::size_t a = 0; a < angle_limited_.size(); ++a) {
    const Branch& br = model_.branches[angle_limited_[a]];
    lower[2 * nr + a] = br.angle_min;
    upper[2 * nr + a] = br.angle_max;
  }
}

double AcOpfProblem::cost(const VectorXd& x) const {
  double total = 0.0;
  for (int g = 0; g < ng_; ++g) {
    const Generator& gen = model_.gens[g];
    const double p = x[pg(g)];
    total += gen.cost_a * p * p + gen.cost_b * p + gen.cost_c;
  }
  return total;
}

double AcOpfProblem::objective(const VectorXd& x) const {
  return obj_scale_ * cost(x);
}

void AcOpfProblem::objective_gradient(const VectorXd& x,
                                      Eigen::Ref<VectorXd> grad) const {
  grad.setZero();
  for (int g = 0; g < ng_; ++g) {
    const Generator& gen = model_.gens[g];
    grad[pg(g)] = obj_scale_ * (2 * gen.cost_a * x[pg(g)] + gen.cost_b);
  }
}

void AcOpfProblem::constraints(const VectorXd& x,
                               Eigen::Ref<VectorXd> values) const {
  values.setZero();
  auto p_row = values.head(nb_);
  for (int i = 0; i < nb_; ++i) {
    const double v2 = x[vm(i)] * x[vm(i)];
    values[i] += model_.buses[i].gs * v2;
    values[nb_ + i] -= model_.buses[i].bs * v2;
  }
  for (int g = 0; g < ng_; ++g) {
    const int bus = model_.gens[g].bus;
    values[bus] -= x[pg(g)];
    values[nb_ + bus] -= x[qg(g)];
  }
  for (int k = 0; k < model_.num_loads(); ++k) {
    const int bus = model_.loads[k].bus;
    values[bus] += load_.p[k];
    values[nb_ + bus] += load_.q[k];
  }
  const int nr = static_cast<int>(rated_.size());
  std::vector<int> rated_slot(model_.branches.size(), -1);
  for (int r = 0; r < nr; ++r) {
    rated_slot[rated_[r]] = r;
  }
  for (int e = 0; e < model_.num_branches(); ++e) {
    const Branch& br = model_.branches[e];
    const BranchTerms t = branch_terms(y_[e]);
    const double tf = x[theta(br.from)], tt = x[theta(br.to)];
    const double vf = x[vm(br.from)], vt = x[vm(br.to)];
    const TermValue pf = evaluate(t.p_from, tf, tt, vf, vt);
    const TermValue qf = evaluate(t.q_from, tf, tt, vf, vt);
    const TermValue pt = evaluate(t.p_to, tf, tt, vf, vt);
    const TermValue qt = evaluate(t.q_to, tf, tt, vf, vt);
    p_row[br.from] += pf.h;
    values[nb_ + br.from] += qf.h;
    p_row[br.to] += pt.h;
    values[nb_ + br.to] += qt.h;
    if (const int r = rated_slot[e]; r >= 0) {
      values[2 * nb_ + r] = pf.h * pf.h + qf.h * qf.h;
      values[2 * nb_ + nr + r] = pt.h * pt.h + qt.h * qt.h;
    }
  }
  for (std::size_t a = 0; a < angle_limited_.size(); ++a) {
    const Branch& br = model_.branches[angle_limited_[a]];
    values[2 * nb_ + 2 * nr + a] = x[theta(br.from)] - x[theta(br.to)];
  }
}

std::vector<nlp::SparsityEntry> AcOpfProblem::jacobian_structure() const {
  std::vector<nlp::SparsityEntry> s;
  auto branch_row = [&](int row, const Branch& br) {
    for (int col : {theta(br.from), theta(br.to), vm(br.from), vm(br.to)}) {
      s.push_back({row, col});
    }
  };
  for (const Branch& br : model_.branches) {
    branch_row(br.from, br);
    branch_row(nb_ + br.from, br);
    branch_row(br.to, br);
    branch_row(nb_ + br.to, br);
  }
  for (int i = 0; i < nb_; ++i) {
    s.push_back({i, vm(i)});
    s.push_back({nb_ + i, vm(i)});
  }
  for (int g = 0; g < ng_; ++g) {
    s.push_back({model_.gens[g].bus, pg(g)});
    s.push_back({nb_ + model_.gens[g].bus, qg(g)});
  }
  const int nr = static_cast<int>(rated_.size());
  for (int r = 0; r < nr; ++r) {
    branch_row(2 * nb_ + r, model_.branches[rated_[r]]);
  }
  for (int r = 0; r < nr; ++r) {
    branch_row(2 * nb_ + nr + r, model_.branches[rated_[r]]);
  }
  for (std::size_t a = 0; a < angle_limited_.size(); ++a) {
    const Branch& br = model_.branches[angle_limited_[a]];
    const int row = 2 * nb_ + 2 * nr + static_cast<int>(a);
    s.push_back({row, theta(br.from)});
    s.push_back({row, theta(br.to)});
  }
  return s;
}

void AcOpfProblem::jacobian_values(const VectorXd& x,
                                   std::span<double> values) const {
  std::size_t k = 0;
  auto put = [&](const Vector4d& g) {
    for (int a = 0; a < 4; ++a) {
      values[k++] = g[a];
    }
  };
  for (int e = 0; e < model_.num_branches(); ++e) {
    const Branch& br = model_.branches[e];
    const BranchTerms t = branch_terms(y_[e]);
    const double tf = x[theta(br.from)], tt = x[theta(br.to)];
    const double vf = x[vm(br.from)], vt = x[vm(br.to)];
    put(evaluate(t.p_from, tf, tt, vf, vt).grad);
    put(evaluate(t.q_from, tf, tt, vf, vt).grad);
    put(evaluate(t.p_to, tf, tt, vf, vt).grad);
    put(evaluate(t.q_to, tf, tt, vf, vt).grad);
  }
  for (int i = 0; i < nb_; ++i) {
    values[k++] = 2 * model_.buses[i].gs * x[vm(i)];
    values[k++] = -2 * model_.buses[i].bs * x[vm(i)];
  }
  for (int g = 0; g < ng_; ++g) {
    values[k++] = -1.0;
    values[k++] = -1.0;
  }
  for (int side = 0; side < 2; ++side) {
    for (int e : rated_) {
      const Branch& br = model_.branches[e];
      const BranchTerms t = branch_terms(y_[e]);
      const double tf = x[theta(br.from)], tt = x[theta(br.to)];
      const double vf = x[vm(br.from)], vt = x[vm(br.to)];
      const EndTerm& p = side == 0 ? t.p_from : t.p_to;
      const EndTerm& q = side == 0 ? t.q_from : t.q_to;
      put(squared_flow(evaluate(p, tf, tt, vf, vt), evaluate(q, tf, tt, vf, vt)).grad);
    }
  }
  for (std::size_t a = 0; a < angle_limited_.size(); ++a) {
    values[k++] = 1.0;
    values[k++] = -1.0;
  }
}

std::vector<nlp::SparsityEntry> AcOpfProblem::hessian_structure() const {
  std::vector<nlp::SparsityEntry> s;
  for (const Branch& br : model_.branches) {
    const std::array<int, 4> idx = {theta(br.from), theta(br.to), vm(br.from),
                                    vm(br.to)};
    for (auto [a, b] : kLowerPairs) {
      s.push_back({std::max(idx[a], idx[b]), std::min(idx[a], idx[b])});
    }
  }
  for (int i = 0; i < nb_; ++i) {
    s.push_back({vm(i), vm(i)});
  }
  for (int g = 0; g < ng_; ++g) {
    s.push_back({pg(g), pg(g)});
  }
  return s;
}

void AcOpfProblem::hessian_values(const VectorXd& x, double objective_factor,
                                  const VectorXd& multipliers,
                                  std::span<double> values) const {
  const int nr = static_cast<int>(rated_.size());
  std::vector<int> rated_slot(model_.branches.size(), -1);
  for (int r = 0; r < nr; ++r) {
    rated_slot[rated_[r]] = r;
  }
  std::size_t k = 0;
  for (int e = 0; e < model_.num_branches(); ++e) {
    const Branch& br = model_.branches[e];
    const BranchTerms t = branch_terms(y_[e]);
    const double tf = x[theta(br.from)], tt = x[theta(br.to)];
    const double vf = x[vm(br.from)], vt = x[vm(br.to)];
    const TermValue pf = evaluate(t.p_from, tf, tt, vf, vt);
    const TermValue qf = evaluate(t.q_from, tf, tt, vf, vt);
    const TermValue pt = evaluate(t.p_to, tf, tt, vf, vt);
    const TermValue qt = evaluate(t.q_to, tf, tt, vf, vt);
    Matrix4d h = multipliers[br.from] * pf.hess +
                 multipliers[nb_ + br.from] * qf.hess +
                 multipliers[br.to] * pt.hess + multipliers[nb_ + br.to] * qt.hess;
    if (const int r = rated_slot[e]; r >= 0) {
      h += multipliers[2 * nb_ + r] * squared_flow(pf, qf).hess;
      h += multipliers[2 * nb_ + nr + r] * squared_flow(pt, qt).hess;
    }
    for (auto [a, b] : kLowerPairs) {
      values[k++] = h(a, b);
    }
  }
  for (int i = 0; i < nb_; ++i) {
    values[k++] = 2 * model_.buses[i].gs * multipliers[i] -
                  2 * model_.buses[i].bs * multipliers[nb_ + i];
  }
  for (int g = 0; g < ng_; ++g) {
    values[k++] = objective_factor * obj_scale_ * 2 * model_.gens[g].cost_a;
  }
}

VectorXd AcOpfProblem::initial_point() const {
  VectorXd x = VectorXd::Zero(num_variables());
  for (int i = 0; i < nb_; ++i) {
    x[vm(i)] = std::clamp(1.0, model_.buses[i].v_min, model_.buses[i].v_max);
  }
  for (int g = 0; g < ng_; ++g) {
    const Generator& gen = model_.gens[g];
    x[pg(g)] = 0.5 * (gen.p_min + gen.p_max);
    x[qg(g)] = 0.5 * (gen.q_min + gen.q_max);
  }
  return x;
}

std::string_view to_string(DualFamily family) {
  switch (family) {
    case DualFamily::V_upper:
      return "V_upper";
    case DualFamily::V_lower:
      return "V_lower";
    case DualFamily::Pg_upper:
      return "Pg_upper";
    case DualFamily::Pg_lower:
      return "Pg_lower";
    case DualFamily::Qg_upper:
      return "Qg_upper";
    case DualFamily::Qg_lower:
      return "Qg_lower";
    case DualFamily::Flow_from:
      return "Flow_from";
    case DualFamily::Flow_to:
      return "Flow_to";
    case DualFamily::AngleDiff_upper:
      return "AngleDiff_upper";
    case DualFamily::AngleDiff_lower:
      return "AngleDiff_lower";
  }
  return "Unknown";
}

std::string_view to_string(AcOpfStatus status) {
  switch (status) {
    case AcOpfStatus::Optimal:
      return "Optimal";
    case AcOpfStatus::LocallyInfeasible:
      return "LocallyInfeasible";
    case AcOpfStatus::NoConvergence:
      return "NoConvergence";
  }
  return "Unknown";
}

AcOpfProblem build_acopf(const NetworkModel& model, const LoadProfile& load) {
  AcOpfProblem problem(model, load);
  const VectorXd x0 = problem.initial_point();
  VectorXd grad(x0.size());
  problem.objective_gradient(x0, grad);
  const double largest = grad.cwiseAbs().maxCoeff();
  problem.set_objective_scale(largest > 100.0 ? 100.0 / largest : 1.0);
  return problem;
}

namespace {

template <typename Fn>
void for_each_dual_slot(const NetworkModel& model, Fn&& fn) {
  for (DualFamily family : kDualFamilies) {
    switch (family) {
      case DualFamily::V_upper:
      case DualFamily::V_lower:
        for (int i = 0; i < model.num_buses(); ++i) {
          fn(family, i, model.buses[i].id);
        }
        break;
      case DualFamily::Pg_upper:
      case DualFamily::Pg_lower:
      case DualFamily::Qg_upper:
      case DualFamily::Qg_lower:
        for (int g = 0; g < model.num_gens(); ++g) {
          fn(family, g, model.gens[g].case_row);
        }
        break;
      default:
        for (int e = 0; e < model.num_branches(); ++e) {
          fn(family, e, model.branches[e].case_row);
        }
        break;
    }
  }
}

}  // namespace

AcOpfSolution solve_acopf(const NetworkModel& model, const LoadProfile& load,
                          const AcOpfConfig& config) {
  AcOpfProblem problem = build_acopf(model, load);
  if (!config.scale_objective) {
    problem.set_objective_scale(1.0);
  }
  const nlp::NlpSolution sol = nlp::solve(problem, config.nlp, problem.initial_point());

  AcOpfSolution out;
  out.iterations = sol.iterations;
  out.objective_scale = problem.objective_scale();
  out.max_violation = sol.constraint_violation;
  switch (sol.status) {
    case nlp::SolveStatus::Optimal:
      out.status = sol.constraint_violation <= 1e-6 ? AcOpfStatus::Optimal
                                                    : AcOpfStatus::NoConvergence;
      break;
    case nlp::SolveStatus::LocallyInfeasible:
      out.status = AcOpfStatus::LocallyInfeasible;
      break;
    default:
      out.status = AcOpfStatus::NoConvergence;
      break;
  }

  const int nb = model.num_buses();
  const int ng = model.num_gens();
  out.voltage.magnitude = sol.x.segment(nb, nb);
  out.voltage.angle = sol.x.head(nb);
  out.pg = sol.x.segment(2 * nb, ng);
  out.qg = sol.x.segment(2 * nb + ng, ng);
  out.vg.resize(ng);
  for (int g = 0; g < ng; ++g) {
    out.vg[g] = out.voltage.magnitude[model.gens[g].bus];
  }
  out.objective = problem.cost(sol.x);

  const auto& rated = problem.rated_branches();
  const auto& angled = problem.angle_limited_branches();
  const int nr = static_cast<int>(rated.size());
  std::vector<int> rated_slot(model.branches.size(), -1);
  std::vector<int> angle_slot(model.branches.size(), -1);
  for (int r = 0; r < nr; ++r) {
    rated_slot[rated[r]] = r;
  }
  for (std::size_t a = 0; a < angled.size(); ++a) {
    angle_slot[angled[a]] = static_cast<int>(a);
  }
  for_each_dual_slot(model, [&](DualFamily family, int element, int label) {
    double m = 0.0;
    switch (family) {
      case DualFamily::V_upper:
        m = sol.bound_upper_multipliers[problem.vm(element)];
        break;
      case DualFamily::V_lower:
        m = sol.bound_lower_multipliers[problem.vm(element)];
        break;
      case DualFamily::Pg_upper:
        m = sol.bound_upper_multipliers[problem.pg(element)];
        break;
      case DualFamily::Pg_lower:
        m = sol.bound_lower_multipliers[problem.pg(element)];
        break;
      case DualFamily::Qg_upper:
        m = sol.bound_upper_multipliers[problem.qg(element)];
        break;
      case DualFamily::Qg_lower:
        m = sol.bound_lower_multipliers[problem.qg(element)];
        break;
      case DualFamily::Flow_from:
        if (rated_slot[element] >= 0) {
          m = sol.ineq_upper_multipliers[rated_slot[element]];
        }
        break;
      case DualFamily::Flow_to:
        if (rated_slot[element] >= 0) {
          m = sol.ineq_upper_multipliers[nr + rated_slot[element]];
        }
        break;
      case DualFamily::AngleDiff_upper:
        if (angle_slot[element] >= 0) {
          m = sol.ineq_upper_multipliers[2 * nr + angle_slot[element]];
        }
        break;
      case DualFamily::AngleDiff_lower:
        if (angle_slot[element] >= 0) {
          m = sol.ineq_lower_multipliers[2 * nr + angle_slot[element]];
        }
        break;
    }
    out.duals.push_back({family, label, m});
  });
  return out;
}

std::size_t ActiveSet::count() const {
  std::size_t n = 0;
  for (auto b : bits) {
    n += b;
  }
  return n;
}

std::string ActiveSet::to_string() const {
  std::string s;
  s.reserve(bits.size());
  for (auto b : bits) {
    s.push_back(b ? '1' : '0');
  }
  return s;
}

ActiveSet active_set(const AcOpfSolution& solution, double active_tol) {
  ActiveSet set;
  set.bits.reserve(solution.duals.size());
  for (const DualRecord& d : solution.duals) {
    set.bits.push_back(std::abs(d.multiplier) > active_tol ? 1 : 0);
  }
  return set;
}

std::vector<std::string> dual_labels(const NetworkModel& model) {
  std::vector<std::string> labels;
  for_each_dual_slot(model, [&](DualFamily family, int, int label) {
    labels.push_back(std::string(to_string(family)) + "_" + std::to_string(label));
  });
  return labels;
}

}  // namespace opflearn
