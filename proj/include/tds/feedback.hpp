#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "tds/quasipoly.hpp"
#include "tds/types.hpp"

namespace tds {

/// Open-loop plant x'(t) = A0 x(t) + A1 x(t - h) + B u(t) with a fixed delay h
/// and a single input column. Pyragas feedback u = -K (x(t) - x(t - tau))
/// closes the loop without shifting equilibria.
struct Plant {
  Matrix A0;
  Matrix A1;
  double h = 0.0;
  Vector B;

  int dim() const { return static_cast<int>(A0.rows()); }
  void validate() const;

  TimeDelaySystem open_loop() const;
  /// Closed loop as a delay system; the feedback delay stays the variable tau.
  TimeDelaySystem closed_loop(const RowVector& K) const;
};

/// det(sI - A0 + BK g(s) - A1 e^{-hs}) with g(s) = 1 - e^{-tau s}, affine in K.
CharacteristicFunction closed_loop_char(const Plant& plant, const RowVector& K);

/// Necessary condition printed for system (11): a crossing with |omega| <= beta
/// forces k2 - |k2| - beta(1 - beta) <= 1 - k1 + |k1|(3 + beta).
bool lemma2_screen(double k1, double k2, double beta);

/// True when the plant matches the 2x2 structure the screen was derived for.
bool lemma2_applicable(const Plant& plant);

struct GainDesign {
  RowVector K;
  double tau = 0.0;  // midpoint of the widest certified interval, or the placement delay
  std::vector<std::pair<double, double>> stable_intervals;
  std::vector<Complex> placed_poles;

  double widest_interval() const {
    double w = 0.0;
    for (const auto& [lo, hi] : stable_intervals) w = std::max(w, hi - lo);
    return w;
  }
};

/// Certified tau-intervals with NU = 0 for the closed loop under gain K.
GainDesign stabilizing_intervals(const Plant& plant, const RowVector& K, double tau_max,
                                 const ToleranceConfig& cfg = {},
                                 TendencyPolicy policy = TendencyPolicy::kAnalytic,
                                 int collocation_nodes = 64);

/// Grid search: screen (when applicable), require at least two crossing
/// frequencies, certify intervals; sorted widest interval first.
std::vector<GainDesign> gain_search(const Plant& plant, const std::vector<RowVector>& gains,
                                    double tau_max, double beta, const ToleranceConfig& cfg = {},
                                    int collocation_nodes = 64);

/// Places the conjugate pole pair s*, conj(s*) by solving the two real
/// equations F(s*; K) = 0, affine in K; minimum-norm solution when n > 2.
RowVector place_pole_pair(const Plant& plant, double tau, Complex s_star,
                          const ToleranceConfig& cfg = {});

/// Kalman rank test on (A0 + A1, B).
bool is_controllable(const Matrix& A0, const Matrix& A1, const Matrix& B,
                     const ToleranceConfig& cfg = {});

}  // namespace tds
