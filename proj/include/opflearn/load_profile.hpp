#pragma once

#include <Eigen/Core>

#include "opflearn/netio.hpp"

namespace opflearn {

/// Active and reactive demand per load bus (p.u.), ordered as
/// NetworkModel::loads. The stacked vector (p..., q...) is the sampler's
/// input-space coordinate.
struct LoadProfile {
  Eigen::VectorXd p;
  Eigen::VectorXd q;

  int size() const { return static_cast<int>(p.size()); }

  Eigen::VectorXd stacked() const {
    Eigen::VectorXd x(2 * p.size());
    x << p, q;
    return x;
  }

  static LoadProfile from_stacked(const Eigen::VectorXd& x) {
    const Eigen::Index n = x.size() / 2;
    return LoadProfile{x.head(n), x.tail(n)};
  }

  static LoadProfile nominal(const NetworkModel& model) {
    LoadProfile load;
    load.p.resize(model.num_loads());
    load.q.resize(model.num_loads());
    for (int k = 0; k < model.num_loads(); ++k) {
      load.p[k] = model.loads[k].p0;
      load.q[k] = model.loads[k].q0;
    }
    return load;
  }

  static LoadProfile zero(const NetworkModel& model) {
    return LoadProfile{Eigen::VectorXd::Zero(model.num_loads()),
                       Eigen::VectorXd::Zero(model.num_loads())};
  }
};

}  // namespace opflearn
