#pragma once

#include <optional>
#include <vector>

#include "tds/types.hpp"

namespace tds {

/// One term q(s) * exp(-s (offset + tau_mult * tau)) of a quasi-polynomial.
/// Coefficients ascending: q(s) = coeffs[0] + coeffs[1] s + ...
struct QuasiTerm {
  Vector coeffs;
  double offset = 0.0;
  int tau_mult = 0;

  int degree() const { return static_cast<int>(coeffs.size()) - 1; }
};

/// F(s, tau) = sum_j q_j(s) exp(-s (a_j + m_j tau)) with real coefficients,
/// so F(conj s, tau) = conj F(s, tau).
class CharacteristicFunction {
 public:
  explicit CharacteristicFunction(std::vector<QuasiTerm> terms);

  const std::vector<QuasiTerm>& terms() const { return terms_; }
  int degree() const { return degree_; }  // degree of the zero-delay term
  int max_tau_multiplicity() const;
  bool has_fixed_offsets() const;

  Complex evaluate(Complex s, double tau) const;
  Complex d_ds(Complex s, double tau) const;
  Complex d_dtau(Complex s, double tau) const;

  /// Sum of term magnitudes; conditioning scale for |F| residual checks.
  double scale(Complex s, double tau) const;
  double d_ds_scale(Complex s, double tau) const;

  /// Coefficients of F(j omega, .) as a polynomial in u = exp(-j omega tau):
  /// C_m(omega) = sum_{m_j = m} q_j(j omega) exp(-j omega a_j).
  std::vector<Complex> u_coefficients(double omega) const;

 private:
  std::vector<QuasiTerm> terms_;
  int degree_ = 0;
};

/// Characteristic quasi-polynomial det(sI - sum A_k exp(-s d_k)) by multipoint
/// determinant evaluation and inverse-DFT interpolation.
CharacteristicFunction char_function(const TimeDelaySystem& sys);

enum class CrossingKind {
  kTransversal,  // simple root, Re(ds/dtau) != 0
  kTangential,   // simple root grazing the axis, Re(ds/dtau) ~ 0
  kDegenerate,   // repeated root on the axis (dF/ds ~ 0)
};

/// An imaginary-axis crossing at s = j omega, recurring at
/// tau_l = (theta + 2 pi l) / omega.
struct CrossingPoint {
  double omega = 0.0;
  double theta = 0.0;   // in [0, 2 pi); exp(-j theta) is the unit-circle factor
  Complex u;            // exp(-j theta)
  int tendency = 0;     // +1, -1, or 0 when indeterminate
  CrossingKind kind = CrossingKind::kTransversal;

  std::vector<double> delays(double tau_max) const;
};

/// Default frequency ceiling: 2 (1 + max |eigenvalue of sum A_k|).
double default_omega_max(const TimeDelaySystem& sys);

/// Locates all |u| = 1 hits of the root branches of F(j omega, u) over
/// omega in (0, omega_max], including tangential touches.
std::vector<CrossingPoint> crossing_sweep(const CharacteristicFunction& F, double omega_max,
                                          int grid_points = 2000);

struct Tendency {
  int sign = 0;
  CrossingKind kind = CrossingKind::kTransversal;
  Complex ds_dtau;
};

/// Sign of Re(ds/dtau) at a crossing, computed analytically from the term
/// list. Indeterminate when dF/ds vanishes (repeated root) or the real part
/// is numerically zero (grazing root).
Tendency root_tendency(const CharacteristicFunction& F, double omega_c, double tau_c);

/// Real polynomial in u = omega^2 from iterated conjugate elimination whose
/// nonnegative roots contain the squared crossing frequencies.
struct WPolynomial {
  Vector coeffs;  // ascending in u
  bool inconclusive = false;

  double value(double u) const;
  double derivative(double u) const;
};

WPolynomial w_polynomial(const CharacteristicFunction& F);

enum class TendencyPolicy {
  kAnalytic,      // Re(ds/dtau) per crossing (cluster-treatment style)
  kDirectMethod,  // alternate +1/-1 by descending frequency (direct-method endgame)
};

struct StabilityMap {
  int nu0 = 0;  // unstable-root count at tau = 0
  struct Event {
    double tau;
    int delta_nu;  // +2 or -2
    double omega;
  };
  struct Interval {
    double lo, hi;
    int nu;
  };
  std::vector<Event> events;        // ascending in tau
  std::vector<Interval> intervals;  // covers [0, tau_max]
  bool degenerate = false;          // grazing crossings were present
  std::vector<double> degenerate_frequencies;

  std::vector<Interval> stable_intervals() const;
  int nu_at(double tau) const;
  int min_nu() const;
};

/// Unstable-pole count NU(tau) over [0, tau_max]. Throws DegenerateCrossing
/// when a repeated root sits on the axis (decompose first). nu0_override
/// supplies the tau = 0 count when the caller has better information;
/// otherwise it is spectral for pure variable-delay systems and comes from
/// rightmost_roots when fixed offsets are present.
StabilityMap stability_map(const CharacteristicFunction& F, const TimeDelaySystem& sys,
                           double tau_max, const ToleranceConfig& cfg = {},
                           TendencyPolicy policy = TendencyPolicy::kAnalytic,
                           std::optional<int> nu0_override = std::nullopt,
                           double omega_max = 0.0, int grid_points = 2000,
                           int collocation_nodes = 64);

/// Rightmost characteristic roots by Chebyshev collocation of the solution
/// operator generator, Newton-refined on F. Sorted by real part descending.
/// dropped (optional) counts collocation eigenvalues that failed refinement.
std::vector<Complex> rightmost_roots(const TimeDelaySystem& sys, double tau, int nodes,
                                     int* dropped = nullptr);

}  // namespace tds
