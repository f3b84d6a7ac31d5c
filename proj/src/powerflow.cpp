#include "opflearn/powerflow.hpp"

#include <cmath>

#include <Eigen/LU>

#include "opflearn/error.hpp"

namespace opflearn {

namespace {

Eigen::VectorXcd phasors(const VoltageState& state) {
  Eigen::VectorXcd v(state.magnitude.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    v[i] = std::polar(state.magnitude[i], state.angle[i]);
  }
  return v;
}

struct Layout {
  std::vector<int> angle_buses;      // non-slack
  std::vector<int> magnitude_buses;  // load role
};

Layout make_layout(const std::vector<BusRole>& roles) {
  Layout layout;
  for (int i = 0; i < static_cast<int>(roles.size()); ++i) {
    if (roles[i] != BusRole::Slack) {
      layout.angle_buses.push_back(i);
    }
    if (roles[i] == BusRole::Load) {
      layout.magnitude_buses.push_back(i);
    }
  }
  return layout;
}

Mismatch mismatch_from(const Eigen::VectorXcd& s, const InjectionSpec& spec,
                       const Layout& layout) {
  const auto np = layout.angle_buses.size();
  Mismatch m;
  m.values.resize(static_cast<Eigen::Index>(np + layout.magnitude_buses.size()));
  Eigen::Index row = 0;
  for (int i : layout.angle_buses) {
    m.values[row++] = s[i].real() - spec.target[i].real();
  }
  for (int i : layout.magnitude_buses) {
    m.values[row++] = s[i].imag() - spec.target[i].imag();
  }
  m.max_norm = m.values.size() > 0 ? m.values.cwiseAbs().maxCoeff() : 0.0;
  return m;
}

}  // namespace

Eigen::VectorXcd injections(const AdmittanceMatrix& y,
                            const VoltageState& state) {
  const Eigen::VectorXcd v = phasors(state);
  const Eigen::VectorXcd current = y * v;
  return v.cwiseProduct(current.conjugate());
}

Eigen::VectorXcd injections(const NetworkModel& model,
                            const VoltageState& state) {
  return injections(admittance(model), state);
}

std::vector<BusRole> bus_roles(const NetworkModel& model) {
  std::vector<BusRole> roles(model.buses.size(), BusRole::Load);
  for (const auto& g : model.gens) {
    roles[g.bus] = BusRole::Generator;
  }
  roles[model.slack] = BusRole::Slack;
  return roles;
}

Mismatch residual(const NetworkModel& model, const VoltageState& state,
                  const InjectionSpec& spec) {
  return mismatch_from(injections(model, state), spec, make_layout(spec.roles));
}

Eigen::MatrixXd jacobian(const NetworkModel& model, const VoltageState& state,
                         const std::vector<BusRole>& roles) {
  const Layout layout = make_layout(roles);
  const Eigen::MatrixXcd y = Eigen::MatrixXcd(admittance(model));
  const Eigen::VectorXcd v = phasors(state);
  const Eigen::VectorXcd current = y * v;
  const Eigen::Index n = v.size();
  const std::complex<double> j(0.0, 1.0);

  // dS/dtheta = j diag(V) conj(diag(I) - Y diag(V))
  // dS/d|v|   = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
  Eigen::MatrixXcd ds_dtheta(n, n);
  Eigen::MatrixXcd ds_dvm(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) {
      const std::complex<double> unit = v[c] / std::abs(v[c]);
      std::complex<double> a = -y(r, c) * v[c];
      std::complex<double> b = y(r, c) * unit;
      if (r == c) {
        a += current[r];
      }
      ds_dtheta(r, c) = j * v[r] * std::conj(a);
      ds_dvm(r, c) = v[r] * std::conj(b);
      if (r == c) {
        ds_dvm(r, c) += std::conj(current[r]) * unit;
      }
    }
  }

  const auto& ab = layout.angle_buses;
  const auto& mb = layout.magnitude_buses;
  const auto na = static_cast<Eigen::Index>(ab.size());
  const auto nm = static_cast<Eigen::Index>(mb.size());
  Eigen::MatrixXd jac(na + nm, na + nm);
  for (Eigen::Index r = 0; r < na; ++r) {
    for (Eigen::Index c = 0; c < na; ++c) {
      jac(r, c) = ds_dtheta(ab[r], ab[c]).real();
    }
    for (Eigen::Index c = 0; c < nm; ++c) {
      jac(r, na + c) = ds_dvm(ab[r], mb[c]).real();
    }
  }
  for (Eigen::Index r = 0; r < nm; ++r) {
    for (Eigen::Index c = 0; c < na; ++c) {
      jac(na + r, c) = ds_dtheta(mb[r], ab[c]).imag();
    }
    for (Eigen::Index c = 0; c < nm; ++c) {
      jac(na + r, na + c) = ds_dvm(mb[r], mb[c]).imag();
    }
  }
  return jac;
}

InjectionSpec make_injection_spec(const NetworkModel& model,
                                  const LoadProfile& load,
                                  const GeneratorSetpoints& setpoints) {
  InjectionSpec spec;
  spec.roles = bus_roles(model);
  spec.target = Eigen::VectorXcd::Zero(model.num_buses());
  for (int g = 0; g < model.num_gens(); ++g) {
    spec.target[model.gens[g].bus] += setpoints.p[g];
  }
  for (int k = 0; k < model.num_loads(); ++k) {
    spec.target[model.loads[k].bus] -= std::complex<double>(load.p[k], load.q[k]);
  }
  return spec;
}

PowerFlowResult solve_pf(const NetworkModel& model, const LoadProfile& load,
                         const GeneratorSetpoints& setpoints,
                         const PowerFlowOptions& options) {
  if (load.size() != model.num_loads() ||
      setpoints.v.size() != model.num_gens() ||
      setpoints.p.size() != model.num_gens()) {
    throw Error(ErrorKind::InvalidArgument,
                "solve_pf: load or setpoints not dimensioned to the model");
  }
  const InjectionSpec spec = make_injection_spec(model, load, setpoints);
  const Layout layout = make_layout(spec.roles);
  const AdmittanceMatrix y = admittance(model);

  PowerFlowResult result;
  result.state = options.warm_start.value_or(VoltageState::flat(model.num_buses()));
  for (int g = model.num_gens() - 1; g >= 0; --g) {
    result.state.magnitude[model.gens[g].bus] = setpoints.v[g];
  }

  const auto na = static_cast<Eigen::Index>(layout.angle_buses.size());
  for (int iter = 0;; ++iter) {
    const Mismatch m = mismatch_from(injections(y, result.state), spec, layout);
    result.iterations = iter;
    result.max_mismatch = m.max_norm;
    if (!std::isfinite(m.max_norm) || m.max_norm > 1e10) {
      throw Error(ErrorKind::NoConvergence, "power flow diverged");
    }
    if (m.max_norm <= options.tol) {
      return result;
    }
    if (iter >= options.max_iter) {
      throw Error(ErrorKind::NoConvergence,
                  "power flow hit the iteration cap with mismatch " +
                      std::to_string(m.max_norm));
    }
    const Eigen::MatrixXd jac = jacobian(model, result.state, spec.roles);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
    const Eigen::VectorXd step = lu.solve(-m.values);
    if (!step.allFinite()) {
      throw Error(ErrorKind::NoConvergence, "singular power flow Jacobian");
    }
    for (Eigen::Index k = 0; k < na; ++k) {
      result.state.angle[layout.angle_buses[k]] += step[k];
    }
    for (std::size_t k = 0; k < layout.magnitude_buses.size(); ++k) {
      result.state.magnitude[layout.magnitude_buses[k]] +=
          step[na + static_cast<Eigen::Index>(k)];
    }
  }
}

}  // namespace opflearn
