#include "tds/simulate.hpp"

#include <cmath>
#include <string>

namespace tds {

HistoryFunction HistoryFunction::constant(const Vector& v) {
  Vector copy = v;
  return HistoryFunction(static_cast<int>(v.size()), [copy](double) { return copy; });
}

HistoryFunction HistoryFunction::callable(int dim, std::function<Vector(double)> f) {
  return HistoryFunction(dim, std::move(f));
}

Vector Trajectory::at(double t) const {
  const int last = static_cast<int>(times.size()) - 1;
  if (last < 0) throw ValidationError("Trajectory::at: empty trajectory");
  if (t <= times.front()) return states.front();
  if (t >= times.back()) return states.back();
  int k = static_cast<int>(std::floor(t / dt));
  k = std::min(std::max(k, 0), last - 1);
  const double t0 = times[k];
  if (std::abs(t - t0) <= 1e-12 * std::max(1.0, std::abs(t))) return states[k];
  if (std::abs(t - times[k + 1]) <= 1e-12 * std::max(1.0, std::abs(t))) return states[k + 1];
  const double u = (t - t0) / dt;
  const double h00 = (1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u);
  const double h10 = u * (1.0 - u) * (1.0 - u);
  const double h01 = u * u * (3.0 - 2.0 * u);
  const double h11 = u * u * (u - 1.0);
  return h00 * states[k] + dt * h10 * derivatives[k] + h01 * states[k + 1] +
         dt * h11 * derivatives[k + 1];
}

Trajectory integrate(const TimeDelaySystem& sys, double tau, const HistoryFunction& history,
                     double t_end, double dt) {
  sys.validate();
  if (tau < 0.0) throw ValidationError("integrate: tau must be nonnegative");
  if (!(t_end > 0.0) || !(dt > 0.0)) throw ValidationError("integrate: need t_end > 0 and dt > 0");
  const int n = sys.dim();
  if (history.dim() != n) throw ValidationError("integrate: history dimension mismatch");

  // Terms whose effective delay vanishes act on the current state.
  Matrix A0 = Matrix::Zero(n, n);
  std::vector<std::pair<double, const Matrix*>> delayed;
  double min_delay = std::numeric_limits<double>::infinity();
  for (const auto& term : sys.terms) {
    const double d = term.effective_delay(tau);
    if (d <= 1e-12) {
      A0 += term.A;
    } else {
      delayed.emplace_back(d, &term.A);
      min_delay = std::min(min_delay, d);
    }
  }
  if (!delayed.empty() && dt > min_delay / 10.0 + 1e-12) {
    throw ValidationError("integrate: dt must not exceed (min positive delay)/10 = " +
                          std::to_string(min_delay / 10.0));
  }

  const int steps = static_cast<int>(std::ceil(t_end / dt - 1e-12));
  Trajectory traj;
  traj.dt = dt;
  traj.times.reserve(steps + 1);
  traj.states.reserve(steps + 1);
  traj.derivatives.reserve(steps + 1);

  auto lookup = [&](double t) -> Vector {
    if (t <= 0.0) return history(t);
    return traj.at(t);
  };
  auto rhs = [&](double t, const Vector& x) -> Vector {
    Vector v = A0 * x;
    for (const auto& [d, A] : delayed) v += (*A) * lookup(t - d);
    return v;
  };

  traj.times.push_back(0.0);
  traj.states.push_back(history(0.0));
  traj.derivatives.push_back(rhs(0.0, traj.states[0]));
  for (int i = 0; i < steps; ++i) {
    const double t = i * dt;
    const Vector& x = traj.states[i];
    const Vector k1 = traj.derivatives[i];
    const Vector k2 = rhs(t + 0.5 * dt, x + (0.5 * dt) * k1);
    const Vector k3 = rhs(t + 0.5 * dt, x + (0.5 * dt) * k2);
    const Vector k4 = rhs(t + dt, x + dt * k3);
    Vector next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!next.allFinite()) {
      throw NumericalError("integrate: state diverged (non-finite) at t = " +
                           std::to_string(t + dt));
    }
    traj.times.push_back((i + 1) * dt);
    traj.states.push_back(std::move(next));
    traj.derivatives.push_back(rhs((i + 1) * dt, traj.states.back()));
  }
  return traj;
}

std::optional<double> settling_time(const Trajectory& traj, double band,
                                    std::optional<Vector> reference) {
  if (!(band > 0.0 && band < 1.0)) throw ValidationError("settling_time: band must be in (0, 1)");
  if (traj.states.empty()) throw ValidationError("settling_time: empty trajectory");
  const Vector ref = reference ? *reference : Vector::Zero(traj.dim());
  if (ref.size() != traj.dim()) throw ValidationError("settling_time: reference dimension mismatch");

  const double dev0 = (traj.states.front() - ref).cwiseAbs().maxCoeff();
  const double threshold = band * dev0;
  int last_violation = -1;
  for (int i = 0; i < static_cast<int>(traj.states.size()); ++i) {
    if ((traj.states[i] - ref).cwiseAbs().maxCoeff() > threshold) last_violation = i;
  }
  if (last_violation < 0) return 0.0;
  if (last_violation == static_cast<int>(traj.states.size()) - 1) return std::nullopt;
  return traj.times[last_violation + 1];
}

}  // namespace tds
