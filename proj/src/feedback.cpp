#include "tds/feedback.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/LU>
#include <Eigen/SVD>

namespace tds {
namespace {

int svd_rank(const Matrix& M, double rtol) {
  Eigen::JacobiSVD<Matrix> svd(M);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  int r = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > rtol * sv(0)) ++r;
  return r;
}

// Adjugate by cofactor expansion; adj(M) * M = det(M) I even when M is singular.
CMatrix adjugate(const CMatrix& M) {
  const int n = static_cast<int>(M.rows());
  if (n == 1) return CMatrix::Identity(1, 1);
  CMatrix adj(n, n);
  CMatrix minor(n - 1, n - 1);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      int mr = 0;
      for (int r = 0; r < n; ++r) {
        if (r == j) continue;  // adj_{ij} = (-1)^{i+j} det(M with row j, col i removed)
        int mc = 0;
        for (int c = 0; c < n; ++c) {
          if (c == i) continue;
          minor(mr, mc++) = M(r, c);
        }
        ++mr;
      }
      const Complex d = Eigen::PartialPivLU<CMatrix>(minor).determinant();
      adj(i, j) = ((i + j) % 2 == 0 ? 1.0 : -1.0) * d;
    }
  }
  return adj;
}

}  // namespace

void Plant::validate() const {
  const int n = dim();
  if (n <= 0 || A0.cols() != n || A1.rows() != n || A1.cols() != n) {
    throw ValidationError("Plant: A0 and A1 must be square with equal size");
  }
  if (B.size() != n) throw ValidationError("Plant: B must be an n-vector");
  if (!(h > 0.0)) throw ValidationError("Plant: fixed delay h must be positive");
  if (!A0.allFinite() || !A1.allFinite() || !B.allFinite() || !std::isfinite(h)) {
    throw ValidationError("Plant: non-finite entry");
  }
}

TimeDelaySystem Plant::open_loop() const {
  validate();
  TimeDelaySystem sys;
  sys.terms.push_back({0.0, 0, A0});
  sys.terms.push_back({h, 0, A1});
  sys.B = B;
  return sys;
}

TimeDelaySystem Plant::closed_loop(const RowVector& K) const {
  validate();
  if (K.size() != dim()) throw ValidationError("Plant::closed_loop: gain size mismatch");
  const Matrix BK = B * K;
  TimeDelaySystem sys;
  sys.terms.push_back({0.0, 0, A0 - BK});
  sys.terms.push_back({h, 0, A1});
  sys.terms.push_back({0.0, 1, BK});
  sys.B = B;
  return sys;
}

CharacteristicFunction closed_loop_char(const Plant& plant, const RowVector& K) {
  return char_function(plant.closed_loop(K));
}

bool lemma2_screen(double k1, double k2, double beta) {
  if (!(beta > 0.0)) throw ValidationError("lemma2_screen: beta must be positive");
  const double lhs = k2 - std::abs(k2) - beta * (1.0 - beta);
  const double rhs = 1.0 - k1 + std::abs(k1) * (3.0 + beta);
  return lhs <= rhs;
}

bool lemma2_applicable(const Plant& plant) {
  if (plant.dim() != 2) return false;
  Matrix a0(2, 2), a1(2, 2);
  a0 << 0, 1, -1, 1;
  a1 << 0, 0, 0, 1;
  Vector b(2);
  b << 1, 0;
  return (plant.A0 - a0).norm() < 1e-9 && (plant.A1 - a1).norm() < 1e-9 &&
         (plant.B - b).norm() < 1e-9 && std::abs(plant.h - 3.2) < 1e-9;
}

GainDesign stabilizing_intervals(const Plant& plant, const RowVector& K, double tau_max,
                                 const ToleranceConfig& cfg, TendencyPolicy policy,
                                 int collocation_nodes) {
  plant.validate();
  const TimeDelaySystem closed = plant.closed_loop(K);
  const CharacteristicFunction F = char_function(closed);

  // The fixed plant delay stays active at tau = 0, so NU0 comes from the
  // rightmost roots of the tau = 0 closed loop, not a matrix eigenproblem.
  int nu0 = 0;
  for (const Complex& r : rightmost_roots(closed, 0.0, collocation_nodes))
    if (r.real() > 1e-7) ++nu0;

  // Crossing magnitudes grow with the gain, so widen the sweep ceiling.
  const double wmax =
      std::max(default_omega_max(closed), 2.0 * (1.0 + plant.B.norm() * K.norm()));
  const StabilityMap map =
      stability_map(F, closed, tau_max, cfg, policy, nu0, wmax, 2000, collocation_nodes);

  GainDesign design;
  design.K = K;
  for (const auto& iv : map.stable_intervals()) design.stable_intervals.emplace_back(iv.lo, iv.hi);
  double widest = 0.0;
  for (const auto& [lo, hi] : design.stable_intervals) {
    if (hi - lo > widest) {
      widest = hi - lo;
      design.tau = 0.5 * (lo + hi);
    }
  }
  return design;
}

std::vector<GainDesign> gain_search(const Plant& plant, const std::vector<RowVector>& gains,
                                    double tau_max, double beta, const ToleranceConfig& cfg,
                                    int collocation_nodes) {
  plant.validate();
  const bool screen = lemma2_applicable(plant);
  std::vector<GainDesign> out;
  for (const auto& K : gains) {
    if (K.size() != plant.dim()) throw ValidationError("gain_search: gain size mismatch");
    if (screen && !lemma2_screen(K(0), K(1), beta)) continue;
    const TimeDelaySystem closed = plant.closed_loop(K);
    const CharacteristicFunction F = char_function(closed);
    const double wmax =
        std::max(default_omega_max(closed), 2.0 * (1.0 + plant.B.norm() * K.norm()));
    std::vector<CrossingPoint> crossings;
    try {
      crossings = crossing_sweep(F, wmax);
    } catch (const NumericalError&) {
      continue;
    }
    if (crossings.size() < 2) continue;  // stabilization needs two crossing frequencies
    try {
      GainDesign d = stabilizing_intervals(plant, K, tau_max, cfg, TendencyPolicy::kAnalytic,
                                           collocation_nodes);
      if (!d.stable_intervals.empty()) out.push_back(std::move(d));
    } catch (const DegenerateCrossing&) {
      continue;
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const GainDesign& a, const GainDesign& b) {
    return a.widest_interval() > b.widest_interval();
  });
  return out;
}

RowVector place_pole_pair(const Plant& plant, double tau, Complex s_star,
                          const ToleranceConfig& cfg) {
  plant.validate();
  cfg.validate();
  if (!(tau > 0.0)) throw ValidationError("place_pole_pair: tau must be positive");
  if (s_star.imag() == 0.0) {
    throw ValidationError("place_pole_pair: target pole must have nonzero imaginary part");
  }
  const int n = plant.dim();
  const Complex g = 1.0 - std::exp(-s_star * tau);
  if (std::abs(g) <= 1e-10) {
    throw SingularPlacement("place_pole_pair: g(s*) = 1 - exp(-s* tau) vanishes");
  }

  // F(s; K) = F(s; 0) + g(s) K adj(sI - A0 - A1 e^{-hs}) B
  const CMatrix M0 = s_star * CMatrix::Identity(n, n) - plant.A0.cast<Complex>() -
                     std::exp(-s_star * plant.h) * plant.A1.cast<Complex>();
  const Complex F0 = Eigen::PartialPivLU<CMatrix>(M0).determinant();
  const CVector v = g * (adjugate(M0) * plant.B.cast<Complex>());

  Matrix A(2, n);
  Vector rhs(2);
  for (int i = 0; i < n; ++i) {
    A(0, i) = v(i).real();
    A(1, i) = v(i).imag();
  }
  rhs << -F0.real(), -F0.imag();

  Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv.size() < 2 || sv(1) <= cfg.rank_tol * sv(0) || sv(0) == 0.0) {
    throw SingularPlacement("place_pole_pair: gain equations are rank-deficient");
  }
  const Vector k = svd.solve(rhs);  // minimum-norm for n > 2
  RowVector K = k.transpose();

  const CharacteristicFunction F = closed_loop_char(plant, K);
  if (std::abs(F.evaluate(s_star, tau)) > 1e-9 * F.scale(s_star, tau)) {
    throw NumericalError("place_pole_pair: placement residual exceeds 1e-9");
  }
  return K;
}

bool is_controllable(const Matrix& A0, const Matrix& A1, const Matrix& B,
                     const ToleranceConfig& cfg) {
  cfg.validate();
  const int n = static_cast<int>(A0.rows());
  if (A0.cols() != n || A1.rows() != n || A1.cols() != n || B.rows() != n || B.cols() < 1) {
    throw ValidationError("is_controllable: inconsistent shapes");
  }
  const Matrix M = A0 + A1;
  const int p = static_cast<int>(B.cols());
  Matrix ctrl(n, n * p);
  Matrix blk = B;
  for (int i = 0; i < n; ++i) {
    ctrl.middleCols(i * p, p) = blk;
    blk = M * blk;
  }
  return svd_rank(ctrl, cfg.rank_tol) == n;
}

}  // namespace tds
