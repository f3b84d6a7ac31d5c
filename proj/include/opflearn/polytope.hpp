#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace opflearn {

enum class RowOrigin : std::uint8_t { Initial, Certificate };

/// {x : a_i' x <= b_i for every row i}.
class HalfspacePolytope {
 public:
  explicit HalfspacePolytope(int dim) : a_(0, dim) {}

  int dim() const { return static_cast<int>(a_.cols()); }
  int num_rows() const { return static_cast<int>(a_.rows()); }

  /// Throws Error{InvalidArgument} for a zero or mis-sized normal.
  void add_row(const Eigen::VectorXd& a, double b,
               RowOrigin origin = RowOrigin::Initial);

  const Eigen::MatrixXd& a() const { return a_; }
  const Eigen::VectorXd& b() const { return b_; }
  const std::vector<RowOrigin>& origins() const { return origins_; }
  int num_certificates() const;

  /// b - A x.
  Eigen::VectorXd slack(const Eigen::VectorXd& x) const {
    return b_ - a_ * x;
  }

 private:
  Eigen::MatrixXd a_;
  Eigen::VectorXd b_;
  std::vector<RowOrigin> origins_;
};

/// Initial load space over x = (p, q): p <= p_bar, -p <= 0, -q <= 0,
/// q - p <= 0, sum(p) <= total_pg_max, in that row order.
HalfspacePolytope init_input_space(const Eigen::VectorXd& p_bar,
                                   double total_pg_max);

struct ChebyshevBall {
  Eigen::VectorXd center;
  double radius = 0.0;
};

/// Largest inscribed ball, from the LP max r s.t. a_i'x + r |a_i| <= b_i.
/// A radius of 0 means the polytope has no interior. Throws
/// Error{EmptyPolytope}, Error{Unbounded} or Error{NumericalFailure}.
ChebyshevBall chebyshev_center(const HalfspacePolytope& polytope);

bool contains(const HalfspacePolytope& polytope, const Eigen::VectorXd& x,
              double slack_tol = 0.0);

/// Appends the certificate row n' x <= n' x_star with n = x_hat - x_star.
/// Throws Error{InvalidArgument} unless |x_hat - x_star| > proj_tol.
void add_halfspace(HalfspacePolytope& polytope, const Eigen::VectorXd& x_hat,
                   const Eigen::VectorXd& x_star, double proj_tol);

/// Interval (t_minus, t_plus) of the line x + t u inside the polytope.
std::pair<double, double> chord(const HalfspacePolytope& polytope,
                                const Eigen::VectorXd& x,
                                const Eigen::VectorXd& u);

/// Minimum slack the walk keeps on every row.
inline constexpr double kInteriorSlack = 1e-10;

struct SamplerState {
  Eigen::VectorXd x;
  std::mt19937_64 rng;
  std::int64_t steps = 0;
};

/// One hit-and-run move. Throws Error{StuckSampler} after 100 degenerate
/// chords and Error{Unbounded} for an unbounded chord.
void hit_and_run_step(const HalfspacePolytope& polytope, SamplerState& state);

struct SamplerOptions {
  /// Steps between emitted samples; 0 selects max(10, d).
  int thinning = 0;
  /// Steps after each (re)start; negative selects 10 d.
  int burn_in = -1;
};

/// Thinned hit-and-run walk that restarts from the Chebyshev center whenever
/// the polytope no longer contains its current point.
class Sampler {
 public:
  explicit Sampler(std::uint64_t seed, SamplerOptions options = {});

  /// Throws Error{EmptyPolytope} when the polytope has no interior.
  void restart(const HalfspacePolytope& polytope);
  Eigen::VectorXd sample(const HalfspacePolytope& polytope);

  const SamplerState& state() const { return state_; }
  int restarts() const { return restarts_; }

 private:
  int thinning(int dim) const;
  int burn_in(int dim) const;

  SamplerOptions options_;
  SamplerState state_;
  bool started_ = false;
  int restarts_ = 0;
};

}  // namespace opflearn
