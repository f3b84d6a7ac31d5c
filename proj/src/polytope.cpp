#include "opflearn/polytope.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/QR>

#include "opflearn/error.hpp"
#include "opflearn/nlp.hpp"

namespace opflearn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void HalfspacePolytope::add_row(const VectorXd& a, double b, RowOrigin origin) {
  if (a.size() != dim()) {
    throw Error(ErrorKind::InvalidArgument, "halfspace normal has wrong dimension");
  }
  if (!a.allFinite() || !std::isfinite(b) || a.norm() == 0.0) {
    throw Error(ErrorKind::InvalidArgument, "halfspace normal must be finite and nonzero");
  }
  const Eigen::Index r = a_.rows();
  a_.conservativeResize(r + 1, Eigen::NoChange);
  b_.conservativeResize(r + 1);
  a_.row(r) = a.transpose();
  b_[r] = b;
  origins_.push_back(origin);
}

int HalfspacePolytope::num_certificates() const {
  return static_cast<int>(
      std::count(origins_.begin(), origins_.end(), RowOrigin::Certificate));
}

HalfspacePolytope init_input_space(const VectorXd& p_bar, double total_pg_max) {
  const int n = static_cast<int>(p_bar.size());
  HalfspacePolytope poly(2 * n);
  VectorXd a = VectorXd::Zero(2 * n);
  auto row = [&](auto&& fill, double b) {
    a.setZero();
    fill();
    poly.add_row(a, b);
  };
  for (int k = 0; k < n; ++k) {
    row([&] { a[k] = 1.0; }, p_bar[k]);
  }
  for (int k = 0; k < n; ++k) {
    row([&] { a[k] = -1.0; }, 0.0);
  }
  for (int k = 0; k < n; ++k) {
    row([&] { a[n + k] = -1.0; }, 0.0);
  }
  for (int k = 0; k < n; ++k) {
    row([&] { a[n + k] = 1.0; a[k] = -1.0; }, 0.0);
  }
  row([&] { a.head(n).setOnes(); }, total_pg_max);
  return poly;
}

namespace {

/// min -r  s.t.  a_i' x / |a_i| + r <= b_i / |a_i|,  r <= cap,
/// |x_j| <= 10 cap, where cap = 1e3 max(1, |b / |a||_inf). A radius at the
/// cap means the polytope is unbounded.
class ChebyshevLp final : public nlp::NlpProblem {
 public:

  explicit ChebyshevLp(const HalfspacePolytope& poly)
      : a_(poly.a()), b_(poly.b()) {
    for (Eigen::Index i = 0; i < a_.rows(); ++i) {
      const double norm = a_.row(i).norm();
      a_.row(i) /= norm;
      b_[i] /= norm;
    }
    cap_ = 1e3 * std::max(1.0, b_.size() > 0 ? b_.cwiseAbs().maxCoeff() : 0.0);
  }

  double radius_cap() const { return cap_; }

  int dim() const { return static_cast<int>(a_.cols()); }
  int num_variables() const override { return dim() + 1; }
  int num_equalities() const override { return 0; }
  int num_inequalities() const override { return static_cast<int>(a_.rows()); }

  void variable_bounds(Eigen::Ref<VectorXd> lower,
                       Eigen::Ref<VectorXd> upper) const override {
    lower.setConstant(-10.0 * cap_);
    upper.setConstant(10.0 * cap_);
    upper[dim()] = cap_;
  }
  void inequality_bounds(Eigen::Ref<VectorXd> lower,
                         Eigen::Ref<VectorXd> upper) const override {
    lower.setConstant(-nlp::kInf);
    upper = b_;
  }
  double objective(const VectorXd& x) const override { return -x[dim()]; }
  void objective_gradient(const VectorXd&, Eigen::Ref<VectorXd> grad) const override {
    grad.setZero();
    grad[dim()] = -1.0;
  }
  void constraints(const VectorXd& x, Eigen::Ref<VectorXd> values) const override {
    values = a_ * x.head(dim());
    values.array() += x[dim()];
  }
  std::vector<nlp::SparsityEntry> jacobian_structure() const override {
    std::vector<nlp::SparsityEntry> s;
    for (int i = 0; i < a_.rows(); ++i) {
      for (int j = 0; j < a_.cols(); ++j) {
        if (a_(i, j) != 0.0) {
          s.push_back({i, j});
        }
      }
      s.push_back({i, dim()});
    }
    return s;
  }
  void jacobian_values(const VectorXd&, std::span<double> values) const override {
    std::size_t k = 0;
    for (int i = 0; i < a_.rows(); ++i) {
      for (int j = 0; j < a_.cols(); ++j) {
        if (a_(i, j) != 0.0) {
          values[k++] = a_(i, j);
        }
      }
      values[k++] = 1.0;
    }
  }
  std::vector<nlp::SparsityEntry> hessian_structure() const override { return {}; }
  void hessian_values(const VectorXd&, double, const VectorXd&,
                      std::span<double>) const override {}
  bool is_convex() const override { return true; }

  VectorXd initial_point() const {
    VectorXd x = VectorXd::Zero(dim() + 1);
    x[dim()] = b_.size() > 0 ? b_.minCoeff() : 0.0;
    return x;
  }

 private:
  MatrixXd a_;
  VectorXd b_;
  double cap_ = 0.0;
};

bool has_full_rank(const HalfspacePolytope& polytope) {
  return polytope.num_rows() >= polytope.dim() + 1 &&
         Eigen::ColPivHouseholderQR<MatrixXd>(polytope.a()).rank() == polytope.dim();
}

}  // namespace

ChebyshevBall chebyshev_center(const HalfspacePolytope& polytope) {
  const int d = polytope.dim();
  if (!has_full_rank(polytope)) {
    throw Error(ErrorKind::Unbounded, "polytope is unbounded");
  }
  const ChebyshevLp lp(polytope);
  const nlp::NlpSolution sol = nlp::solve(lp, nlp::NlpConfig{}, lp.initial_point());
  if (!sol.ok()) {
    throw Error(ErrorKind::NumericalFailure,
                std::string("Chebyshev LP ended with ") +
                    std::string(nlp::to_string(sol.status)));
  }
  const double r = sol.x[d];
  if (r >= lp.radius_cap() * (1.0 - 1e-6)) {
    throw Error(ErrorKind::Unbounded, "polytope is unbounded");
  }
  if (r < -1e-6) {
    throw Error(ErrorKind::EmptyPolytope, "polytope is empty");
  }
  return {sol.x.head(d), std::max(r, 0.0)};
}

bool contains(const HalfspacePolytope& polytope, const VectorXd& x,
              double slack_tol) {
  return polytope.num_rows() == 0 ||
         polytope.slack(x).minCoeff() >= -slack_tol;
}

void add_halfspace(HalfspacePolytope& polytope, const VectorXd& x_hat,
                   const VectorXd& x_star, double proj_tol) {
  const VectorXd n = x_hat - x_star;
  if (!(n.norm() > proj_tol)) {
    throw Error(ErrorKind::InvalidArgument,
                "certificate needs |x_hat - x_star| > proj_tol");
  }
  polytope.add_row(n, n.dot(x_star), RowOrigin::Certificate);
}

std::pair<double, double> chord(const HalfspacePolytope& polytope,
                                const VectorXd& x, const VectorXd& u) {
  const VectorXd slack = polytope.slack(x);
  const VectorXd au = polytope.a() * u;
  double lo = -nlp::kInf;
  double hi = nlp::kInf;
  for (Eigen::Index i = 0; i < au.size(); ++i) {
    if (au[i] > 0.0) {
      hi = std::min(hi, slack[i] / au[i]);
    } else if (au[i] < 0.0) {
      lo = std::max(lo, slack[i] / au[i]);
    }
  }
  return {lo, hi};
}

void hit_and_run_step(const HalfspacePolytope& polytope, SamplerState& state) {
  constexpr int kMaxRetries = 100;
  std::normal_distribution<double> normal;
  const int d = polytope.dim();
  for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
    VectorXd u(d);
    for (int j = 0; j < d; ++j) {
      u[j] = normal(state.rng);
    }
    const double norm = u.norm();
    if (norm == 0.0) {
      continue;
    }
    u /= norm;
    const auto [lo, hi] = chord(polytope, state.x, u);
    if (!std::isfinite(lo) || !std::isfinite(hi)) {
      throw Error(ErrorKind::Unbounded, "hit-and-run chord is unbounded");
    }
    if (hi - lo <= 1e-12) {
      continue;
    }
    double t = std::uniform_real_distribution<double>(lo, hi)(state.rng);
    VectorXd next = state.x + t * u;
    // Pull back towards the current point until every row keeps its margin.
    for (int k = 0; k < 64 && polytope.slack(next).minCoeff() < kInteriorSlack; ++k) {
      t *= 0.5;
      next = state.x + t * u;
    }
    if (polytope.slack(next).minCoeff() >= kInteriorSlack) {
      state.x = std::move(next);
    }
    ++state.steps;
    return;
  }
  throw Error(ErrorKind::StuckSampler,
              "hit-and-run found no nondegenerate chord in 100 directions");
}

Sampler::Sampler(std::uint64_t seed, SamplerOptions options)
    : options_(options) {
  state_.rng.seed(seed);
}

int Sampler::thinning(int dim) const {
  return options_.thinning > 0 ? options_.thinning : std::max(10, dim);
}

int Sampler::burn_in(int dim) const {
  return options_.burn_in >= 0 ? options_.burn_in : 10 * dim;
}

void Sampler::restart(const HalfspacePolytope& polytope) {
  const ChebyshevBall ball = chebyshev_center(polytope);
  if (ball.radius <= kInteriorSlack) {
    throw Error(ErrorKind::EmptyPolytope, "polytope has no interior");
  }
  state_.x = ball.center;
  if (polytope.slack(state_.x).minCoeff() < kInteriorSlack) {
    throw Error(ErrorKind::NumericalFailure,
                "Chebyshev center is not strictly interior");
  }
  for (int k = 0; k < burn_in(polytope.dim()); ++k) {
    hit_and_run_step(polytope, state_);
  }
  started_ = true;
  ++restarts_;
}

VectorXd Sampler::sample(const HalfspacePolytope& polytope) {
  if (!started_ || state_.x.size() != polytope.dim() ||
      polytope.slack(state_.x).minCoeff() < kInteriorSlack) {
    restart(polytope);
  }
  for (int k = 0; k < thinning(polytope.dim()); ++k) {
    hit_and_run_step(polytope, state_);
  }
  return state_.x;
}

}  // namespace opflearn
