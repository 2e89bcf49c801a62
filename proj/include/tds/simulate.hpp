#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "tds/types.hpp"

namespace tds {

/// Initial data on [-h_max, 0].
class HistoryFunction {
 public:
  static HistoryFunction constant(const Vector& v);
  static HistoryFunction callable(int dim, std::function<Vector(double)> f);

  Vector operator()(double t) const { return f_(t); }
  int dim() const { return dim_; }

 private:
  HistoryFunction(int dim, std::function<Vector(double)> f) : dim_(dim), f_(std::move(f)) {}
  int dim_;
  std::function<Vector(double)> f_;
};

/// Uniform-step trajectory with nodal derivatives for cubic Hermite dense output.
struct Trajectory {
  double dt = 0.0;
  std::vector<double> times;
  std::vector<Vector> states;
  std::vector<Vector> derivatives;

  int dim() const { return states.empty() ? 0 : static_cast<int>(states.front().size()); }
  double t_end() const { return times.empty() ? 0.0 : times.back(); }
  /// Cubic Hermite interpolation; exact at nodes. t must be in [0, t_end].
  Vector at(double t) const;
};

/// Classical 4-stage Runge-Kutta by the method of steps; delayed states read
/// from the history / past trajectory through the Hermite interpolant.
/// Requires dt <= (min positive delay) / 10. Throws NumericalError with the
/// blow-up time when the state leaves the finite range.
Trajectory integrate(const TimeDelaySystem& sys, double tau, const HistoryFunction& history,
                     double t_end, double dt);

/// Smallest time after which ||x(t') - ref||_inf stays within
/// band * ||x(0) - ref||_inf. nullopt when the trajectory never settles.
std::optional<double> settling_time(const Trajectory& traj, double band,
                                    std::optional<Vector> reference = std::nullopt);

}  // namespace tds
