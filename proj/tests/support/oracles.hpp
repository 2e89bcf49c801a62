// Independent test oracles. These deliberately avoid the implementation paths
// they check: the crossing oracle scans |F| on a dense (omega, phase) grid via
// evaluate() only, and the tendency oracle tracks a root across perturbed
// delays by Newton iteration on F.
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "tds/quasipoly.hpp"
#include "tds/types.hpp"

namespace oracle {

using tds::CharacteristicFunction;
using tds::Complex;

// min over a phase grid of |F(j w, theta / w)| / scale
inline double axis_min_over_phase(const CharacteristicFunction& F, double w, int n_phase,
                                  double* best_theta = nullptr) {
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < n_phase; ++k) {
    const double theta = 2.0 * M_PI * k / n_phase;
    const double tau = theta / w;
    const Complex s(0.0, w);
    const double v = std::abs(F.evaluate(s, tau)) / F.scale(s, tau);
    if (v < best) {
      best = v;
      if (best_theta) *best_theta = theta;
    }
  }
  return best;
}

// Coordinate-descent polish of a candidate crossing (omega, theta).
inline double polish_axis_zero(const CharacteristicFunction& F, double& w, double& theta,
                               double dw) {
  auto val = [&](double ww, double th) {
    const Complex s(0.0, ww);
    return std::abs(F.evaluate(s, th / ww)) / F.scale(s, th / ww);
  };
  double step_w = dw, step_t = 2.0 * M_PI / 512;
  double cur = val(w, theta);
  for (int it = 0; it < 200; ++it) {
    bool moved = false;
    for (const double ww : {w - step_w, w + step_w}) {
      if (ww <= 0) continue;
      const double v = val(ww, theta);
      if (v < cur) {
        cur = v;
        w = ww;
        moved = true;
      }
    }
    for (const double th : {theta - step_t, theta + step_t}) {
      const double v = val(w, th);
      if (v < cur) {
        cur = v;
        theta = th;
        moved = true;
      }
    }
    if (!moved) {
      step_w *= 0.5;
      step_t *= 0.5;
      if (step_w < 1e-13 && step_t < 1e-13) break;
    }
  }
  return cur;
}

// All crossing frequencies found by the dense grid scan, polished. Seeds are
// the sub-threshold local minima plus every near-zero sample, so adjacent
// crossings that share one valley still get their own descent.
inline std::vector<double> grid_scan_crossings(const CharacteristicFunction& F, double omega_max,
                                               int n_omega = 16000, int n_phase = 512) {
  std::vector<double> ws, vals;
  for (int i = 1; i <= n_omega; ++i) {
    const double w = omega_max * i / n_omega;
    ws.push_back(w);
    vals.push_back(axis_min_over_phase(F, w, n_phase));
  }
  std::vector<size_t> seeds;
  for (size_t i = 1; i + 1 < vals.size(); ++i) {
    if (vals[i] <= vals[i - 1] && vals[i] <= vals[i + 1] && vals[i] < 5e-2) seeds.push_back(i);
  }
  for (size_t i = 0; i < vals.size(); ++i) {
    if (vals[i] < 2e-3) seeds.push_back(i);
  }
  std::vector<double> found;
  for (size_t i : seeds) {
    double w = ws[i], theta = 0.0;
    axis_min_over_phase(F, w, n_phase, &theta);
    const double residual = polish_axis_zero(F, w, theta, omega_max / n_omega);
    if (residual < 1e-8) {
      bool dup = false;
      for (double other : found)
        if (std::abs(other - w) < 1e-6 * std::max(1.0, w)) dup = true;
      if (!dup) found.push_back(w);
    }
  }
  std::sort(found.begin(), found.end());
  return found;
}

// Root-tracking tendency: Newton-track the root from j*omega_c at tau_c +- dtau
// and compare real parts. Returns 0 when the drift is numerically symmetric.
inline int tracked_tendency(const CharacteristicFunction& F, double omega_c, double tau_c,
                            double dtau = 1e-4) {
  auto track = [&](double tau) -> std::optional<Complex> {
    Complex s(0.0, omega_c);
    for (int it = 0; it < 60; ++it) {
      const Complex f = F.evaluate(s, tau);
      const Complex d = F.d_ds(s, tau);
      if (std::abs(d) < 1e-300) return std::nullopt;
      const Complex step = f / d;
      s -= step;
      if (std::abs(step) < 1e-14 * (1.0 + std::abs(s))) return s;
    }
    return std::nullopt;
  };
  const auto plus = track(tau_c + dtau);
  const auto minus = track(tau_c - dtau);
  if (!plus || !minus) return 0;
  const double drift = plus->real() - minus->real();
  if (std::abs(drift) < 1e-10) return 0;
  return drift > 0 ? 1 : -1;
}

// Random retarded system with one variable delay, scaled to keep spectra tame.
inline tds::TimeDelaySystem random_system(std::mt19937& rng, int n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  tds::Matrix A1(n, n), A2(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      A1(i, j) = u(rng);
      A2(i, j) = u(rng);
    }
  return tds::TimeDelaySystem::retarded(A1, A2);
}

}  // namespace oracle
