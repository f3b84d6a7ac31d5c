#include "opflearn/relax.hpp"

#include <cmath>
#include <numbers>

#include "opflearn/error.hpp"

namespace opflearn {

namespace {

using Eigen::Matrix4d;
using Eigen::Vector4d;
using Eigen::VectorXd;

constexpr std::array<std::pair<int, int>, 10> kLowerPairs = {{
    {0, 0}, {1, 0}, {1, 1}, {2, 0}, {2, 1}, {2, 2}, {3, 0}, {3, 1}, {3, 2}, {3, 3},
}};

/// Hessian of c_ij^2 + s_ij^2 - c_ff c_tt over (c_ff, c_tt, c_ij, s_ij).
Matrix4d cone_hessian() {
  Matrix4d h = Matrix4d::Zero();
  h(0, 1) = h(1, 0) = -1.0;
  h(2, 2) = h(3, 3) = 2.0;
  return h;
}

}  // namespace

RelaxedFormulation::RelaxedFormulation(const NetworkModel& model, Mode mode,
                                       const LoadProfile& load, int target_load)
    : model_(model),
      mode_(mode),
      load_(load),
      target_(target_load),
      nb_(model.num_buses()),
      ne_(model.num_branches()),
      ng_(model.num_gens()),
      nl_(model.num_loads()) {
  if (load.size() != nl_ || load.q.size() != nl_) {
    throw Error(ErrorKind::InvalidArgument,
                "load profile not dimensioned to the model");
  }
  if (mode == Mode::MaxLoad && (target_load < 0 || target_load >= nl_)) {
    throw Error(ErrorKind::InvalidArgument,
                "max-load target " + std::to_string(target_load) +
                    " is not a load index");
  }
  n_ = nb_ + 2 * ne_ + 2 * ng_ + (loads_free() ? 2 * nl_ : 0);

  lin_.reserve(ne_);
  for (int e = 0; e < ne_; ++e) {
    const Branch& br = model.branches[e];
    const BranchAdmittance y = branch_admittance(br);
    const double gft = y.ft.real(), bft = y.ft.imag();
    const double gtf = y.tf.real(), btf = y.tf.imag();
    BranchLinear l;
    l.p_from << y.ff.real(), 0.0, gft, -bft;
    l.q_from << -y.ff.imag(), 0.0, -bft, -gft;
    l.p_to << 0.0, y.tt.real(), gtf, btf;
    l.q_to << 0.0, -y.tt.imag(), -btf, gtf;
    lin_.push_back(l);
    if (br.has_flow_limit()) {
      rated_.push_back(e);
    }
    // theta_ij = atan(-s/c): angle bounds below 90 degrees are linear cuts.
    constexpr double kRight = std::numbers::pi / 2;
    if (br.angle_max < kRight) {
      angle_rows_.push_back({e, -std::tan(br.angle_max), -1.0});
    }
    if (br.angle_min > -kRight) {
      angle_rows_.push_back({e, std::tan(br.angle_min), 1.0});
    }
  }
  m_in_ = 2 * static_cast<int>(rated_.size()) + ne_ +
          static_cast<int>(angle_rows_.size()) +
          (mode == Mode::MaxLoad ? nl_ : 0);
}

std::array<int, 4> RelaxedFormulation::branch_vars(int e) const {
  const Branch& br = model_.branches[e];
  return {c_bus(br.from), c_bus(br.to), c_branch(e), s_branch(e)};
}

void RelaxedFormulation::variable_bounds(Eigen::Ref<VectorXd> lower,
                                         Eigen::Ref<VectorXd> upper) const {
  for (int i = 0; i < nb_; ++i) {
    lower[c_bus(i)] = model_.buses[i].v_min * model_.buses[i].v_min;
    upper[c_bus(i)] = model_.buses[i].v_max * model_.buses[i].v_max;
  }
  for (int e = 0; e < ne_; ++e) {
    const Branch& br = model_.branches[e];
    const double cap = model_.buses[br.from].v_max * model_.buses[br.to].v_max;
    lower[c_branch(e)] = lower[s_branch(e)] = -cap;
    upper[c_branch(e)] = upper[s_branch(e)] = cap;
  }
  for (int g = 0; g < ng_; ++g) {
    lower[pg(g)] = model_.gens[g].p_min;
    upper[pg(g)] = model_.gens[g].p_max;
    lower[qg(g)] = model_.gens[g].q_min;
    upper[qg(g)] = model_.gens[g].q_max;
  }
  if (loads_free()) {
    const double lo = mode_ == Mode::MaxLoad ? 0.0 : -nlp::kInf;
    for (int k = 0; k < nl_; ++k) {
      lower[pl(k)] = lower[ql(k)] = lo;
      upper[pl(k)] = upper[ql(k)] = nlp::kInf;
    }
  }
}

void RelaxedFormulation::inequality_bounds(Eigen::Ref<VectorXd> lower,
                                           Eigen::Ref<VectorXd> upper) const {
  lower.setConstant(-nlp::kInf);
  upper.setZero();
  const int nr = static_cast<int>(rated_.size());
  for (int r = 0; r < nr; ++r) {
    const double rate = model_.branches[rated_[r]].rate;
    upper[r] = upper[nr + r] = rate * rate;
  }
}

double RelaxedFormulation::cost(const VectorXd& x) const {
  double total = 0.0;
  for (int g = 0; g < ng_; ++g) {
    const Generator& gen = model_.gens[g];
    const double p = x[pg(g)];
    total += gen.cost_a * p * p + gen.cost_b * p + gen.cost_c;
  }
  return total;
}

double RelaxedFormulation::objective(const VectorXd& x) const {
  switch (mode_) {
    case Mode::Cost:
      return obj_scale_ * cost(x);
    case Mode::MaxLoad:
      return -x[pl(target_)];
    case Mode::Projection: {
      double d = 0.0;
      for (int k = 0; k < nl_; ++k) {
        d += std::pow(x[pl(k)] - load_.p[k], 2) + std::pow(x[ql(k)] - load_.q[k], 2);
      }
      return 0.5 * d;
    }
  }
  return 0.0;
}

void RelaxedFormulation::objective_gradient(const VectorXd& x,
                                            Eigen::Ref<VectorXd> grad) const {
  grad.setZero();
  switch (mode_) {
    case Mode::Cost:
      for (int g = 0; g < ng_; ++g) {
        const Generator& gen = model_.gens[g];
        grad[pg(g)] = obj_scale_ * (2 * gen.cost_a * x[pg(g)] + gen.cost_b);
      }
      break;
    case Mode::MaxLoad:
      grad[pl(target_)] = -1.0;
      break;
    case Mode::Projection:
      for (int k = 0; k < nl_; ++k) {
        grad[pl(k)] = x[pl(k)] - load_.p[k];
        grad[ql(k)] = x[ql(k)] - load_.q[k];
      }
      break;
  }
}

void RelaxedFormulation::constraints(const VectorXd& x,
                                     Eigen::Ref<VectorXd> values) const {
  values.setZero();
  for (int i = 0; i < nb_; ++i) {
    values[i] += model_.buses[i].gs * x[c_bus(i)];
    values[nb_ + i] -= model_.buses[i].bs * x[c_bus(i)];
  }
  for (int g = 0; g < ng_; ++g) {
    values[model_.gens[g].bus] -= x[pg(g)];
    values[nb_ + model_.gens[g].bus] -= x[qg(g)];
  }
  for (int k = 0; k < nl_; ++k) {
    const int bus = model_.loads[k].bus;
    values[bus] += loads_free() ? x[pl(k)] : load_.p[k];
    values[nb_ + bus] += loads_free() ? x[ql(k)] : load_.q[k];
  }
  const int nr = static_cast<int>(rated_.size());
  std::vector<int> rated_slot(ne_, -1);
  for (int r = 0; r < nr; ++r) {
    rated_slot[rated_[r]] = r;
  }
  const int row0 = 2 * nb_;
  for (int e = 0; e < ne_; ++e) {
    const Branch& br = model_.branches[e];
    const auto idx = branch_vars(e);
    const Vector4d v{x[idx[0]], x[idx[1]], x[idx[2]], x[idx[3]]};
    const double pf = lin_[e].p_from.dot(v), qf = lin_[e].q_from.dot(v);
    const double pt = lin_[e].p_to.dot(v), qt = lin_[e].q_to.dot(v);
    values[br.from] += pf;
    values[nb_ + br.from] += qf;
    values[br.to] += pt;
    values[nb_ + br.to] += qt;
    if (const int r = rated_slot[e]; r >= 0) {
      values[row0 + r] = pf * pf + qf * qf;
      values[row0 + nr + r] = pt * pt + qt * qt;
    }
    values[row0 + 2 * nr + e] = v[2] * v[2] + v[3] * v[3] - v[0] * v[1];
  }
  int row = row0 + 2 * nr + ne_;
  for (const AngleRow& a : angle_rows_) {
    values[row++] = a.coef_c * x[c_branch(a.branch)] + a.coef_s * x[s_branch(a.branch)];
  }
  if (mode_ == Mode::MaxLoad) {
    for (int k = 0; k < nl_; ++k) {
      values[row++] = x[ql(k)] - x[pl(k)];
    }
  }
}

std::vector<nlp::SparsityEntry> RelaxedFormulation::jacobian_structure() const {
  std::vector<nlp::SparsityEntry> s;
  auto branch_row = [&](int row, int e) {
    for (int col : branch_vars(e)) {
      s.push_back({row, col});
    }
  };
  for (int e = 0; e < ne_; ++e) {
    const Branch& br = model_.branches[e];
    branch_row(br.from, e);
    branch_row(nb_ + br.from, e);
    branch_row(br.to, e);
    branch_row(nb_ + br.to, e);
  }
  for (int i = 0; i < nb_; ++i) {
    s.push_back({i, c_bus(i)});
    s.push_back({nb_ + i, c_bus(i)});
  }
  for (int g = 0; g < ng_; ++g) {
    s.push_back({model_.gens[g].bus, pg(g)});
    s.push_back({nb_ + model_.gens[g].bus, qg(g)});
  }
  if (loads_free()) {
    for (int k = 0; k < nl_; ++k) {
      s.push_back({model_.loads[k].bus, pl(k)});
      s.push_back({nb_ + model_.loads[k].bus, ql(k)});
    }
  }
  int row = 2 * nb_;
  for (int side = 0; side < 2; ++side) {
    for (int e : rated_) {
      branch_row(row++, e);
    }
  }
  for (int e = 0; e < ne_; ++e) {
    branch_row(row++, e);
  }
  for (const AngleRow& a : angle_rows_) {
    s.push_back({row, c_branch(a.branch)});
    s.push_back({row, s_branch(a.branch)});
    ++row;
  }
  if (mode_ == Mode::MaxLoad) {
    for (int k = 0; k < nl_; ++k) {
      s.push_back({row, ql(k)});
      s.push_back({row, pl(k)});
      ++row;
    }
  }
  return s;
}

void RelaxedFormulation::jacobian_values(const VectorXd& x,
                                         std::span<double> values) const {
  std::size_t k = 0;
  auto put = [&](const Vector4d& g) {
    for (int a = 0; a < 4; ++a) {
      values[k++] = g[a];
    }
  };
  for (int e = 0; e < ne_; ++e) {
    put(lin_[e].p_from);
    put(lin_[e].q_from);
    put(lin_[e].p_to);
    put(lin_[e].q_to);
  }
  for (int i = 0; i < nb_; ++i) {
    values[k++] = model_.buses[i].gs;
    values[k++] = -model_.buses[i].bs;
  }
  for (int g = 0; g < ng_; ++g) {
    values[k++] = -1.0;
    values[k++] = -1.0;
  }
  if (loads_free()) {
    for (int l = 0; l < nl_; ++l) {
      values[k++] = 1.0;
      values[k++] = 1.0;
    }
  }
  auto branch_point = [&](int e) {
    const auto idx = branch_vars(e);
    return Vector4d{x[idx[0]], x[idx[1]], x[idx[2]], x[idx[3]]};
  };
  for (int side = 0; side < 2; ++side) {
    for (int e : rated_) {
      const Vector4d v = branch_point(e);
      const Vector4d& lp = side == 0 ? lin_[e].p_from : lin_[e].p_to;
      const Vector4d& lq = side == 0 ? lin_[e].q_from : lin_[e].q_to;
      put(2 * (lp.dot(v) * lp + lq.dot(v) * lq));
    }
  }
  for (int e = 0; e < ne_; ++e) {
    const Vector4d v = branch_point(e);
    put(Vector4d{-v[1], -v[0], 2 * v[2], 2 * v[3]});
  }
  for (const AngleRow& a : angle_rows_) {
    values[k++] = a.coef_c;
    values[k++] = a.coef_s;
  }
  if (mode_ == Mode::MaxLoad) {
    for (int l = 0; l < nl_; ++l) {
      values[k++] = 1.0;
      values[k++] = -1.0;
    }
  }
}

std::vector<nlp::SparsityEntry> RelaxedFormulation::hessian_structure() const {
  std::vector<nlp::SparsityEntry> s;
  for (int e = 0; e < ne_; ++e) {
    const auto idx = branch_vars(e);
    for (auto [a, b] : kLowerPairs) {
      s.push_back({std::max(idx[a], idx[b]), std::min(idx[a], idx[b])});
    }
  }
  for (int g = 0; g < ng_; ++g) {
    s.push_back({pg(g), pg(g)});
  }
  if (loads_free()) {
    for (int k = 0; k < nl_; ++k) {
      s.push_back({pl(k), pl(k)});
      s.push_back({ql(k), ql(k)});
    }
  }
  return s;
}

void RelaxedFormulation::hessian_values(const VectorXd& /*x*/,
                                        double objective_factor,
                                        const VectorXd& multipliers,
                                        std::span<double> values) const {
  const int nr = static_cast<int>(rated_.size());
  std::vector<int> rated_slot(ne_, -1);
  for (int r = 0; r < nr; ++r) {
    rated_slot[rated_[r]] = r;
  }
  const int row0 = 2 * nb_;
  const Matrix4d cone = cone_hessian();
  std::size_t k = 0;
  for (int e = 0; e < ne_; ++e) {
    Matrix4d h = multipliers[row0 + 2 * nr + e] * cone;
    if (const int r = rated_slot[e]; r >= 0) {
      const BranchLinear& l = lin_[e];
      h += 2 * multipliers[row0 + r] *
           (l.p_from * l.p_from.transpose() + l.q_from * l.q_from.transpose());
      h += 2 * multipliers[row0 + nr + r] *
           (l.p_to * l.p_to.transpose() + l.q_to * l.q_to.transpose());
    }
    for (auto [a, b] : kLowerPairs) {
      values[k++] = h(a, b);
    }
  }
  for (int g = 0; g < ng_; ++g) {
    values[k++] = mode_ == Mode::Cost
                      ? objective_factor * obj_scale_ * 2 * model_.gens[g].cost_a
                      : 0.0;
  }
  if (loads_free()) {
    const double w = mode_ == Mode::Projection ? objective_factor : 0.0;
    for (int l = 0; l < nl_; ++l) {
      values[k++] = w;
      values[k++] = w;
    }
  }
}

VectorXd RelaxedFormulation::initial_point() const {
  VectorXd x = VectorXd::Zero(n_);
  for (int i = 0; i < nb_; ++i) {
    const Bus& b = model_.buses[i];
    x[c_bus(i)] = std::clamp(1.0, b.v_min * b.v_min, b.v_max * b.v_max);
  }
  for (int e = 0; e < ne_; ++e) {
    x[c_branch(e)] = 1.0;
  }
  for (int g = 0; g < ng_; ++g) {
    const Generator& gen = model_.gens[g];
    x[pg(g)] = 0.5 * (gen.p_min + gen.p_max);
    x[qg(g)] = 0.5 * (gen.q_min + gen.q_max);
  }
  if (loads_free()) {
    for (int k = 0; k < nl_; ++k) {
      x[pl(k)] = load_.p[k];
      x[ql(k)] = load_.q[k];
    }
  }
  return x;
}

VectorXd RelaxedFormulation::lift(const VoltageState& voltage, const VectorXd& p,
                                  const VectorXd& q, const LoadProfile& load) const {
  VectorXd x = VectorXd::Zero(n_);
  for (int i = 0; i < nb_; ++i) {
    x[c_bus(i)] = voltage.magnitude[i] * voltage.magnitude[i];
  }
  for (int e = 0; e < ne_; ++e) {
    const Branch& br = model_.branches[e];
    const double vv = voltage.magnitude[br.from] * voltage.magnitude[br.to];
    const double d = voltage.angle[br.from] - voltage.angle[br.to];
    x[c_branch(e)] = vv * std::cos(d);
    x[s_branch(e)] = -vv * std::sin(d);
  }
  for (int g = 0; g < ng_; ++g) {
    x[pg(g)] = p[g];
    x[qg(g)] = q[g];
  }
  if (loads_free()) {
    for (int k = 0; k < nl_; ++k) {
      x[pl(k)] = load.p[k];
      x[ql(k)] = load.q[k];
    }
  }
  return x;
}

LoadProfile RelaxedFormulation::load_at(const VectorXd& x) const {
  if (!loads_free()) {
    return load_;
  }
  LoadProfile out;
  out.p.resize(nl_);
  out.q.resize(nl_);
  for (int k = 0; k < nl_; ++k) {
    out.p[k] = x[pl(k)];
    out.q[k] = x[ql(k)];
  }
  return out;
}

std::string_view to_string(RelaxStatus status) {
  switch (status) {
    case RelaxStatus::Optimal:
      return "Optimal";
    case RelaxStatus::RelaxInfeasible:
      return "RelaxInfeasible";
    case RelaxStatus::NumericalFailure:
      return "NumericalFailure";
  }
  return "Unknown";
}

ProjectionResult nearest_feasible(const NetworkModel& model,
                                  const LoadProfile& x_hat,
                                  const RelaxConfig& config) {
  if (!x_hat.p.allFinite() || !x_hat.q.allFinite()) {
    throw Error(ErrorKind::InvalidArgument, "projection target is not finite");
  }
  const RelaxedFormulation problem(model, RelaxedFormulation::Mode::Projection, x_hat);
  // A target on the boundary has vanishing multipliers, so the barrier keeps
  // the iterate about sqrt(mu) inside; drive mu well below proj_tol^2.
  nlp::NlpConfig nlp_config = config.nlp;
  nlp_config.mu_final =
      std::min(nlp_config.mu_final, 1e-2 * config.proj_tol * config.proj_tol);
  const nlp::NlpSolution sol = nlp::solve(problem, nlp_config, problem.initial_point());
  if (!sol.ok()) {
    throw Error(ErrorKind::NumericalFailure,
                std::string("projection solve ended with ") +
                    std::string(nlp::to_string(sol.status)));
  }
  ProjectionResult result;
  result.x_star = problem.load_at(sol.x);
  result.distance = (result.x_star.stacked() - x_hat.stacked()).norm();
  if (result.distance <= config.proj_tol) {
    result.x_star = x_hat;
    result.distance = 0.0;
  }
  return result;
}

RelaxResult solve_relaxed(const NetworkModel& model, const LoadProfile& load,
                          const RelaxConfig& config) {
  RelaxedFormulation problem(model, RelaxedFormulation::Mode::Cost, load);
  {
    VectorXd grad(problem.num_variables());
    const VectorXd x0 = problem.initial_point();
    problem.objective_gradient(x0, grad);
    const double largest = grad.cwiseAbs().maxCoeff();
    problem.set_objective_scale(largest > 100.0 ? 100.0 / largest : 1.0);
  }
  const nlp::NlpSolution sol = nlp::solve(problem, config.nlp, problem.initial_point());
  RelaxResult result;
  if (sol.ok()) {
    result.status = RelaxStatus::Optimal;
    result.objective = problem.cost(sol.x);
    result.point = sol.x;
    return result;
  }
  const ProjectionResult proj = nearest_feasible(model, load, config);
  result.distance = proj.distance;
  result.status = proj.distance > config.proj_tol ? RelaxStatus::RelaxInfeasible
                                                  : RelaxStatus::NumericalFailure;
  return result;
}

double max_load(const NetworkModel& model, int load_index, const RelaxConfig& config) {
  LoadProfile start = LoadProfile::nominal(model);
  start.p = start.p.cwiseMax(0.0);
  start.q = start.q.cwiseMax(0.0).cwiseMin(start.p);
  const RelaxedFormulation problem(model, RelaxedFormulation::Mode::MaxLoad, start,
                                   load_index);
  const nlp::NlpSolution sol = nlp::solve(problem, config.nlp, problem.initial_point());
  if (!sol.ok()) {
    throw Error(ErrorKind::NumericalFailure,
                "max-load solve for load " + std::to_string(load_index) +
                    " ended with " + std::string(nlp::to_string(sol.status)));
  }
  const double value = sol.x[problem.pl(load_index)];
  if (!std::isfinite(value) || value > 1e6) {
    throw Error(ErrorKind::Unbounded,
                "max-load for load " + std::to_string(load_index) + " is unbounded");
  }
  return value;
}

}  // namespace opflearn
