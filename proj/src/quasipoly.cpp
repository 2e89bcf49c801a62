#include "tds/quasipoly.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

namespace tds {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

Complex horner(const Vector& coeffs, Complex s) {
  Complex v = 0.0;
  for (int i = static_cast<int>(coeffs.size()) - 1; i >= 0; --i) v = v * s + coeffs(i);
  return v;
}

double horner_abs(const Vector& coeffs, double r) {
  double v = 0.0;
  for (int i = static_cast<int>(coeffs.size()) - 1; i >= 0; --i) v = v * r + std::abs(coeffs(i));
  return v;
}

Vector poly_derivative(const Vector& coeffs) {
  if (coeffs.size() <= 1) return Vector::Zero(1);
  Vector d(coeffs.size() - 1);
  for (int i = 1; i < coeffs.size(); ++i) d(i - 1) = i * coeffs(i);
  return d;
}

Vector poly_mul(const Vector& a, const Vector& b) {
  Vector c = Vector::Zero(a.size() + b.size() - 1);
  for (int i = 0; i < a.size(); ++i)
    for (int j = 0; j < b.size(); ++j) c(i + j) += a(i) * b(j);
  return c;
}

Vector poly_add(const Vector& a, const Vector& b) {
  Vector c = Vector::Zero(std::max(a.size(), b.size()));
  c.head(a.size()) = a;
  c.head(b.size()) += b;
  return c;
}

Vector poly_reflect(const Vector& a) {  // p(s) -> p(-s)
  Vector c = a;
  for (int i = 1; i < c.size(); i += 2) c(i) = -c(i);
  return c;
}

Vector poly_trim(const Vector& a, double rel = 1e-12) {
  const double m = a.size() ? a.cwiseAbs().maxCoeff() : 0.0;
  if (m == 0.0) return Vector::Zero(1);
  int k = static_cast<int>(a.size());
  while (k > 1 && std::abs(a(k - 1)) <= rel * m) --k;
  return a.head(k);
}

// Roots of a complex polynomial (ascending coeffs) via companion eigenvalues.
std::vector<Complex> poly_roots(const std::vector<Complex>& c_in) {
  double m = 0.0;
  for (const auto& c : c_in) m = std::max(m, std::abs(c));
  int deg = static_cast<int>(c_in.size()) - 1;
  while (deg > 0 && std::abs(c_in[deg]) <= 1e-12 * m) --deg;
  if (deg <= 0) return {};
  CMatrix comp = CMatrix::Zero(deg, deg);
  for (int i = 0; i < deg; ++i) comp(i, deg - 1) = -c_in[i] / c_in[deg];
  for (int i = 1; i < deg; ++i) comp(i, i - 1) = 1.0;
  Eigen::ComplexEigenSolver<CMatrix> es(comp, false);
  std::vector<Complex> roots(es.eigenvalues().data(), es.eigenvalues().data() + deg);
  return roots;
}

}  // namespace

CharacteristicFunction::CharacteristicFunction(std::vector<QuasiTerm> terms)
    : terms_(std::move(terms)) {
  if (terms_.empty()) throw ValidationError("CharacteristicFunction: no terms");
  std::stable_sort(terms_.begin(), terms_.end(), [](const QuasiTerm& a, const QuasiTerm& b) {
    if (a.tau_mult != b.tau_mult) return a.tau_mult < b.tau_mult;
    return a.offset < b.offset;
  });
  const QuasiTerm* zero = nullptr;
  for (const auto& t : terms_) {
    if (t.offset < 0.0 || t.tau_mult < 0)
      throw ValidationError("CharacteristicFunction: negative delay");
    if (!t.coeffs.allFinite()) throw ValidationError("CharacteristicFunction: non-finite coefficient");
    if (t.offset == 0.0 && t.tau_mult == 0) zero = &t;
  }
  if (!zero) throw ValidationError("CharacteristicFunction: missing zero-delay term");
  degree_ = zero->degree();
}

int CharacteristicFunction::max_tau_multiplicity() const {
  int m = 0;
  for (const auto& t : terms_) m = std::max(m, t.tau_mult);
  return m;
}

bool CharacteristicFunction::has_fixed_offsets() const {
  for (const auto& t : terms_)
    if (t.offset > 0.0) return true;
  return false;
}

Complex CharacteristicFunction::evaluate(Complex s, double tau) const {
  Complex v = 0.0;
  for (const auto& t : terms_)
    v += horner(t.coeffs, s) * std::exp(-s * (t.offset + t.tau_mult * tau));
  return v;
}

Complex CharacteristicFunction::d_ds(Complex s, double tau) const {
  Complex v = 0.0;
  for (const auto& t : terms_) {
    const double d = t.offset + t.tau_mult * tau;
    v += (horner(poly_derivative(t.coeffs), s) - d * horner(t.coeffs, s)) * std::exp(-s * d);
  }
  return v;
}

Complex CharacteristicFunction::d_dtau(Complex s, double tau) const {
  Complex v = 0.0;
  for (const auto& t : terms_) {
    if (t.tau_mult == 0) continue;
    const double d = t.offset + t.tau_mult * tau;
    v += horner(t.coeffs, s) * (-s * static_cast<double>(t.tau_mult)) * std::exp(-s * d);
  }
  return v;
}

double CharacteristicFunction::scale(Complex s, double tau) const {
  double v = 0.0;
  const double r = std::abs(s);
  for (const auto& t : terms_) {
    const double d = t.offset + t.tau_mult * tau;
    v += horner_abs(t.coeffs, r) * std::exp(-s.real() * d);
  }
  return std::max(v, 1e-300);
}

double CharacteristicFunction::d_ds_scale(Complex s, double tau) const {
  double v = 0.0;
  const double r = std::abs(s);
  for (const auto& t : terms_) {
    const double d = t.offset + t.tau_mult * tau;
    v += (horner_abs(poly_derivative(t.coeffs), r) + std::abs(d) * horner_abs(t.coeffs, r)) *
         std::exp(-s.real() * d);
  }
  return std::max(v, 1e-300);
}

std::vector<Complex> CharacteristicFunction::u_coefficients(double omega) const {
  std::vector<Complex> c(max_tau_multiplicity() + 1, Complex(0.0));
  const Complex s(0.0, omega);
  for (const auto& t : terms_)
    c[t.tau_mult] += horner(t.coeffs, s) * std::exp(-s * t.offset);
  return c;
}

CharacteristicFunction char_function(const TimeDelaySystem& sys) {
  sys.validate();
  const int n = sys.dim();

  // One exponential symbol per distinct nonzero delay expression.
  struct Symbol {
    double offset;
    int mult;
    Matrix A;
  };
  Matrix A0 = Matrix::Zero(n, n);
  std::vector<Symbol> syms;
  for (const auto& t : sys.terms) {
    if (t.offset == 0.0 && t.tau_multiplicity == 0) {
      A0 = t.A;
    } else {
      syms.push_back({t.offset, t.tau_multiplicity, t.A});
    }
  }
  std::stable_sort(syms.begin(), syms.end(), [](const Symbol& a, const Symbol& b) {
    if (a.mult != b.mult) return a.mult < b.mult;
    return a.offset < b.offset;
  });
  const int D = static_cast<int>(syms.size());
  const int N = n + 1;

  // Sample det(sI - A0 - sum z_d A_d) on the product of unit-circle grids.
  std::vector<int> shape(D + 1, N);
  long total = 1;
  for (int i = 0; i <= D; ++i) total *= N;
  std::vector<Complex> vals(total);
  std::vector<Complex> unity(N);
  for (int i = 0; i < N; ++i) unity[i] = std::exp(Complex(0.0, kTwoPi * i / N));

  std::vector<int> idx(D + 1, 0);
  double max_abs = 0.0;
  for (long flat = 0; flat < total; ++flat) {
    CMatrix M = unity[idx[0]] * CMatrix::Identity(n, n) - A0.cast<Complex>();
    for (int d = 0; d < D; ++d) M -= unity[idx[d + 1]] * syms[d].A.cast<Complex>();
    vals[flat] = Eigen::PartialPivLU<CMatrix>(M).determinant();
    max_abs = std::max(max_abs, std::abs(vals[flat]));
    for (int p = 0; p <= D; ++p) {
      if (++idx[p] < N) break;
      idx[p] = 0;
    }
  }
  if (max_abs <= 1e-12) throw NumericalError("char_function: identically zero determinant (degenerate pencil)");

  // Inverse DFT: coefficient of s^a prod z_d^{b_d}.
  std::vector<Complex> coef(total, Complex(0.0));
  std::vector<int> alpha(D + 1, 0);
  for (long ci = 0; ci < total; ++ci) {
    Complex acc = 0.0;
    std::fill(idx.begin(), idx.end(), 0);
    for (long flat = 0; flat < total; ++flat) {
      long phase = 0;
      for (int p = 0; p <= D; ++p) phase += static_cast<long>(alpha[p]) * idx[p];
      acc += vals[flat] * std::exp(Complex(0.0, -kTwoPi * (phase % N) / N));
      for (int p = 0; p <= D; ++p) {
        if (++idx[p] < N) break;
        idx[p] = 0;
      }
    }
    coef[ci] = acc / static_cast<double>(total);
    for (int p = 0; p <= D; ++p) {
      if (++alpha[p] < N) break;
      alpha[p] = 0;
    }
  }

  double cmax = 0.0;
  for (const auto& c : coef) cmax = std::max(cmax, std::abs(c));
  for (const auto& c : coef) {
    if (std::abs(c.imag()) > 1e-7 * cmax)
      throw NumericalError("char_function: interpolated coefficients are not real");
  }

  // Group monomials into terms keyed by (total offset, total multiplicity).
  struct Key {
    double offset;
    int mult;
  };
  std::vector<Key> keys;
  std::vector<Vector> polys;
  auto accumulate = [&](double off, int mult, int spow, double c) {
    for (size_t i = 0; i < keys.size(); ++i) {
      if (keys[i].mult == mult && std::abs(keys[i].offset - off) <= 1e-9 * (1.0 + std::abs(off))) {
        if (static_cast<int>(polys[i].size()) <= spow) {
          Vector grown = Vector::Zero(spow + 1);
          grown.head(polys[i].size()) = polys[i];
          polys[i] = grown;
        }
        polys[i](spow) += c;
        return;
      }
    }
    keys.push_back({off, mult});
    Vector p = Vector::Zero(spow + 1);
    p(spow) = c;
    polys.push_back(p);
  };

  std::fill(alpha.begin(), alpha.end(), 0);
  for (long ci = 0; ci < total; ++ci) {
    const double c = coef[ci].real();
    if (std::abs(c) > 1e-11 * cmax) {
      double off = 0.0;
      int mult = 0;
      for (int d = 0; d < D; ++d) {
        off += alpha[d + 1] * syms[d].offset;
        mult += alpha[d + 1] * syms[d].mult;
      }
      accumulate(off, mult, alpha[0], c);
    }
    for (int p = 0; p <= D; ++p) {
      if (++alpha[p] < N) break;
      alpha[p] = 0;
    }
  }

  // Normalize so the zero-delay term is exactly monic of degree n.
  double lead = 0.0;
  for (size_t i = 0; i < keys.size(); ++i) {
    if (keys[i].mult == 0 && keys[i].offset == 0.0 && static_cast<int>(polys[i].size()) == n + 1) {
      lead = polys[i](n);
    }
  }
  if (std::abs(lead - 1.0) > 1e-6) {
    throw NumericalError("char_function: zero-delay term is not monic of full degree");
  }
  std::vector<QuasiTerm> terms;
  for (size_t i = 0; i < keys.size(); ++i) {
    terms.push_back({poly_trim(polys[i] / lead, 1e-14), keys[i].offset, keys[i].mult});
  }
  CharacteristicFunction F(std::move(terms));

  // Fit residual check at pseudo-random points off the sample grid.
  unsigned long long state = 0x9e3779b97f4a7c15ull;
  auto rnd = [&]() {
    state = state * 6364136223846793005ull + 1442695040888963407ull;
    return static_cast<double>((state >> 11) & 0xfffffffffffull) / double(1ull << 44) * 2.0 - 1.0;
  };
  for (int trial = 0; trial < 20; ++trial) {
    const Complex s(rnd(), rnd());
    std::vector<Complex> zv(D);
    for (int d = 0; d < D; ++d) zv[d] = Complex(rnd(), rnd());
    CMatrix M = s * CMatrix::Identity(n, n) - A0.cast<Complex>();
    for (int d = 0; d < D; ++d) M -= zv[d] * syms[d].A.cast<Complex>();
    const Complex det = Eigen::PartialPivLU<CMatrix>(M).determinant() / lead;
    Complex fit = 0.0;
    double sc = 0.0;
    for (const auto& t : F.terms()) sc += horner_abs(t.coeffs, std::abs(s));
    // Re-expand over monomial coefficients; the fit must reproduce the pencil
    // determinant at points off the sampling grid.
    std::fill(alpha.begin(), alpha.end(), 0);
    for (long ci = 0; ci < total; ++ci) {
      const double c = coef[ci].real() / lead;
      if (std::abs(c) > 1e-13 * cmax) {
        Complex term = c;
        for (int a = 0; a < alpha[0]; ++a) term *= s;
        for (int d = 0; d < D; ++d)
          for (int b = 0; b < alpha[d + 1]; ++b) term *= zv[d];
        fit += term;
      }
      for (int p = 0; p <= D; ++p) {
        if (++alpha[p] < N) break;
        alpha[p] = 0;
      }
    }
    if (std::abs(fit - det) > 1e-10 * std::max(1.0, sc)) {
      throw NumericalError("char_function: interpolation residual exceeds 1e-10");
    }
  }
  return F;
}

std::vector<double> CrossingPoint::delays(double tau_max) const {
  std::vector<double> out;
  if (omega <= 0.0) return out;
  for (int l = 0;; ++l) {
    const double t = (theta + kTwoPi * l) / omega;
    if (t > tau_max) break;
    out.push_back(t);
  }
  return out;
}

double default_omega_max(const TimeDelaySystem& sys) {
  const Matrix S = sys.delay_free_sum();
  const Eigen::VectorXcd ev = S.eigenvalues();
  double m = 0.0;
  for (int i = 0; i < ev.size(); ++i) m = std::max(m, std::abs(ev(i)));
  return 2.0 * (1.0 + m);
}

namespace {

constexpr double kBigRoot = 1e8;

std::vector<Complex> unit_candidates(const CharacteristicFunction& F, double omega) {
  std::vector<Complex> out;
  for (const auto& u : poly_roots(F.u_coefficients(omega)))
    if (std::abs(u) < kBigRoot) out.push_back(u);
  return out;
}

// Distance of the root set to the unit circle, and the nearest root.
double circle_distance(const CharacteristicFunction& F, double omega, Complex* nearest = nullptr) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& u : unit_candidates(F, omega)) {
    const double d = std::abs(std::abs(u) - 1.0);
    if (d < best) {
      best = d;
      if (nearest) *nearest = u;
    }
  }
  return best;
}

// Damped Gauss-Newton on (Re F, Im F)(omega, tau) = 0. Converges linearly at
// repeated roots and folds, quadratically at simple transversal crossings.
void gauss_newton_polish(const CharacteristicFunction& F, double& omega, double& tau) {
  double w = omega, t = tau;
  auto residual = [&](double ww, double tt) {
    return std::abs(F.evaluate(Complex(0.0, ww), tt)) / F.scale(Complex(0.0, ww), tt);
  };
  double cur = residual(w, t);
  for (int it = 0; it < 120 && cur > 1e-15; ++it) {
    const Complex s(0.0, w);
    const Complex f = F.evaluate(s, t);
    const Complex fw = Complex(0.0, 1.0) * F.d_ds(s, t);
    const Complex ft = F.d_dtau(s, t);
    Eigen::Matrix2d J;
    J << fw.real(), ft.real(), fw.imag(), ft.imag();
    Eigen::Vector2d r(f.real(), f.imag());
    const Eigen::Vector2d step =
        J.jacobiSvd(Eigen::ComputeFullU | Eigen::ComputeFullV)
            .setThreshold(1e-13)
            .solve(r);
    if (!step.allFinite()) break;
    double lambda = 1.0;
    bool moved = false;
    for (int bt = 0; bt < 30; ++bt) {
      const double wn = w - lambda * step(0);
      const double tn = t - lambda * step(1);
      if (wn > 0.0) {
        const double rn = residual(wn, tn);
        if (rn < cur) {
          w = wn;
          t = tn;
          cur = rn;
          moved = true;
          break;
        }
      }
      lambda *= 0.5;
    }
    if (!moved) break;
  }
  if (cur <= residual(omega, tau)) {
    omega = w;
    tau = t;
  }
}

double wrap_theta(double theta) {
  double t = std::fmod(theta, kTwoPi);
  if (t < 0.0) t += kTwoPi;
  // Snap to 0 when the phase is a hair below 2 pi (a crossing active at tau = 0).
  if (t > kTwoPi - 1e-8) t = 0.0;
  if (t < 1e-12) t = 0.0;
  return t;
}

}  // namespace

std::vector<CrossingPoint> crossing_sweep(const CharacteristicFunction& F, double omega_max,
                                          int grid_points) {
  if (!(omega_max > 0.0)) throw ValidationError("crossing_sweep: omega_max must be positive");
  if (grid_points < 16) throw ValidationError("crossing_sweep: need at least 16 grid points");
  if (F.max_tau_multiplicity() == 0) return {};  // no tau dependence, no crossings

  // Crossings are the zeros of m(omega) = min_i ||u_i(omega)| - 1|. Scanning m
  // instead of per-branch sign changes stays well-posed where root branches
  // collide, which is exactly the repeated-root case that matters here.
  const double dw = omega_max / grid_points;
  std::vector<double> m(grid_points + 1, std::numeric_limits<double>::infinity());
  for (int i = 1; i <= grid_points; ++i) m[i] = circle_distance(F, dw * i);

  std::vector<double> candidates;
  for (int i = 1; i <= grid_points; ++i) {
    const double left = m[i - 1];
    const double right = i + 1 <= grid_points ? m[i + 1] : std::numeric_limits<double>::infinity();
    if (m[i] < 0.25 && m[i] <= left && m[i] <= right) candidates.push_back(dw * i);
  }

  std::vector<CrossingPoint> out;
  for (double w0 : candidates) {
    // golden-section on the valley
    double a = std::max(dw * 0.5, w0 - dw);
    double b = std::min(omega_max, w0 + dw);
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = circle_distance(F, x1), f2 = circle_distance(F, x2);
    for (int it = 0; it < 80 && (b - a) > 1e-13 * std::max(1.0, w0); ++it) {
      if (f1 < f2) {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - gr * (b - a);
        f1 = circle_distance(F, x1);
      } else {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + gr * (b - a);
        f2 = circle_distance(F, x2);
      }
    }
    double wstar = 0.5 * (a + b);

    // Vertex refinement for smooth touches: Newton on d/dw (|u|^2 - 1) = 0,
    // tracking the nearest root. Harmless for V-shaped zeros (guarded).
    {
      Complex uref;
      circle_distance(F, wstar, &uref);
      auto v = [&](double w) -> double {
        double best = std::numeric_limits<double>::infinity();
        Complex sel = uref;
        for (const auto& u : unit_candidates(F, w)) {
          const double d = std::abs(u - uref);
          if (d < best) {
            best = d;
            sel = u;
          }
        }
        uref = sel;
        return std::norm(sel) - 1.0;
      };
      const double h = 1e-6 * std::max(1.0, wstar);
      double wv = wstar;
      bool ok = true;
      for (int it = 0; it < 8 && ok; ++it) {
        const double d1 = (v(wv + h) - v(wv - h)) / (2.0 * h);
        const double d2 = (v(wv + h) - 2.0 * v(wv) + v(wv - h)) / (h * h);
        if (std::abs(d2) < 1e-300) break;
        const double step = d1 / d2;
        if (!std::isfinite(step) || std::abs(step) > dw) {
          ok = false;
          break;
        }
        wv -= step;
        if (std::abs(step) < 1e-14 * std::max(1.0, wv)) break;
      }
      if (ok && wv > 0.0 && circle_distance(F, wv) <= circle_distance(F, wstar)) wstar = wv;
    }

    // Cluster the roots sitting near the circle: a cluster of two or more
    // coinciding roots is a repeated characteristic root on the axis.
    std::vector<std::vector<Complex>> clusters;
    for (const auto& u : unit_candidates(F, wstar)) {
      if (std::abs(std::abs(u) - 1.0) > 1e-3) continue;
      bool joined = false;
      for (auto& cl : clusters) {
        if (std::abs(u - cl.front()) < 1e-3) {
          cl.push_back(u);
          joined = true;
          break;
        }
      }
      if (!joined) clusters.push_back({u});
    }

    for (const auto& cl : clusters) {
      CrossingPoint cp;
      if (cl.size() >= 2) {
        Complex mean = 0.0;
        for (const auto& u : cl) mean += u;
        mean /= static_cast<double>(cl.size());
        double w = wstar;
        double tau0 = wrap_theta(-std::arg(mean)) / w;
        gauss_newton_polish(F, w, tau0);  // descends to the repeated root
        cp.omega = w;
        cp.theta = wrap_theta(tau0 * w);
        cp.u = std::exp(Complex(0.0, -cp.theta));
        cp.tendency = 0;
        cp.kind = CrossingKind::kDegenerate;
      } else {
        const Complex u = cl.front();
        const double pre_dist = std::abs(std::abs(u) - 1.0);
        double w = wstar;
        double tau0 = wrap_theta(-std::arg(u)) / w;
        gauss_newton_polish(F, w, tau0);
        if (!(w > 0.0) || w > omega_max * (1.0 + 1e-9)) continue;
        const Complex s(0.0, w);
        const bool exact = std::abs(F.evaluate(s, tau0)) <= 1e-9 * F.scale(s, tau0);
        if (!exact && pre_dist > 1e-9) continue;  // near-miss valley, not a crossing
        cp.omega = w;
        cp.theta = wrap_theta(tau0 * w);
        cp.u = std::exp(Complex(0.0, -cp.theta));
        const Tendency td = root_tendency(F, cp.omega, cp.theta / cp.omega);
        cp.tendency = td.sign;
        cp.kind = td.kind;
      }
      bool dup = false;
      for (const auto& e : out) {
        const double dth = std::abs(std::remainder(e.theta - cp.theta, kTwoPi));
        if (std::abs(e.omega - cp.omega) < 1e-6 * std::max(1.0, cp.omega) && dth < 1e-6) {
          dup = true;
          break;
        }
      }
      if (!dup) out.push_back(cp);
    }
  }

  // Absorb the numerical halo of repeated roots: |F| stays tiny in a
  // sqrt-sized neighborhood of a double root, so sub-converged satellites
  // within that radius belong to the degenerate point itself.
  std::vector<CrossingPoint> kept;
  for (const auto& c : out) {
    if (c.kind != CrossingKind::kDegenerate) continue;
    kept.push_back(c);
  }
  for (const auto& c : out) {
    if (c.kind == CrossingKind::kDegenerate) continue;
    bool halo = false;
    for (const auto& d : kept) {
      if (d.kind != CrossingKind::kDegenerate) continue;
      const double dth = std::abs(std::remainder(d.theta - c.theta, kTwoPi));
      if (std::abs(d.omega - c.omega) < 1e-4 * std::max(1.0, c.omega) && dth < 1e-3) {
        halo = true;
        break;
      }
    }
    if (!halo) kept.push_back(c);
  }
  std::sort(kept.begin(), kept.end(),
            [](const CrossingPoint& a, const CrossingPoint& b) { return a.omega < b.omega; });
  return kept;
}

Tendency root_tendency(const CharacteristicFunction& F, double omega_c, double tau_c) {
  const Complex s(0.0, omega_c);
  const double fscale = F.scale(s, tau_c);
  if (std::abs(F.evaluate(s, tau_c)) > 1e-8 * fscale) {
    throw ValidationError("root_tendency: (omega_c, tau_c) is not a characteristic root");
  }
  Tendency out;
  const Complex fs = F.d_ds(s, tau_c);
  if (std::abs(fs) <= 1e-8 * F.d_ds_scale(s, tau_c)) {
    out.sign = 0;
    out.kind = CrossingKind::kDegenerate;
    return out;
  }
  out.ds_dtau = -F.d_dtau(s, tau_c) / fs;
  const double re = out.ds_dtau.real();
  // Grazing cutoff: a tangential contact of the exact function splits by
  // sqrt(coefficient noise) once the term list carries rounding from a
  // decomposition, so the drift threshold sits well above machine epsilon.
  if (std::abs(re) <= 1e-5 * std::max(1.0, std::abs(out.ds_dtau))) {
    out.sign = 0;
    out.kind = CrossingKind::kTangential;
  } else {
    out.sign = re > 0.0 ? 1 : -1;
    out.kind = CrossingKind::kTransversal;
  }
  return out;
}

double WPolynomial::value(double u) const {
  double v = 0.0;
  for (int i = static_cast<int>(coeffs.size()) - 1; i >= 0; --i) v = v * u + coeffs(i);
  return v;
}

double WPolynomial::derivative(double u) const {
  double v = 0.0;
  for (int i = static_cast<int>(coeffs.size()) - 1; i >= 1; --i) v = v * u + i * coeffs(i);
  return v;
}

WPolynomial w_polynomial(const CharacteristicFunction& F) {
  for (const auto& t : F.terms()) {
    if (t.offset > 0.0) {
      throw ValidationError(
          "w_polynomial: fixed offsets present; conjugate elimination needs a purely "
          "commensurate function");
    }
  }
  const int M = F.max_tau_multiplicity();
  std::vector<Vector> ps(M + 1, Vector::Zero(1));
  for (const auto& t : F.terms()) ps[t.tau_mult] = t.coeffs;

  auto zdeg = [&](const std::vector<Vector>& v) {
    int m = static_cast<int>(v.size()) - 1;
    while (m > 0 && v[m].cwiseAbs().maxCoeff() == 0.0) --m;
    return m;
  };
  auto is_zero = [](const std::vector<Vector>& v) {
    for (const auto& p : v)
      if (p.cwiseAbs().maxCoeff() != 0.0) return false;
    return true;
  };

  Vector result;
  int m = zdeg(ps);
  if (m == 0) {
    result = poly_mul(ps[0], poly_reflect(ps[0]));
  } else {
    std::vector<Vector> cur(ps.begin(), ps.begin() + m + 1);
    while (true) {
      m = zdeg(cur);
      if (m == 0) {
        result = cur[0];
        break;
      }
      const Vector p0r = poly_reflect(cur[0]);
      const Vector pm = cur[m];
      std::vector<Vector> next(m);
      double scale_max = 0.0;
      for (int k = 0; k < m; ++k) {
        next[k] = poly_add(poly_mul(p0r, cur[k]), -poly_mul(pm, poly_reflect(cur[m - k])));
        scale_max = std::max(scale_max, next[k].cwiseAbs().maxCoeff());
      }
      for (auto& p : next) p = poly_trim(p, 1e-12);
      cur = next;
      if (is_zero(cur) || scale_max == 0.0) {
        WPolynomial w;
        w.coeffs = Vector::Zero(1);
        w.inconclusive = true;
        return w;
      }
    }
  }

  result = poly_trim(result, 1e-12);
  const double mx = result.cwiseAbs().maxCoeff();
  for (int i = 1; i < result.size(); i += 2) {
    if (std::abs(result(i)) > 1e-8 * mx)
      throw NumericalError("w_polynomial: elimination did not produce an even polynomial");
  }
  WPolynomial w;
  w.coeffs = Vector::Zero((result.size() + 1) / 2);
  for (int k = 0; 2 * k < result.size(); ++k) {
    w.coeffs(k) = result(2 * k) * ((k % 2 == 0) ? 1.0 : -1.0);  // s^{2k} = (-u)^k at s = j omega
  }
  return w;
}

std::vector<StabilityMap::Interval> StabilityMap::stable_intervals() const {
  std::vector<Interval> out;
  for (const auto& iv : intervals)
    if (iv.nu == 0) out.push_back(iv);
  return out;
}

int StabilityMap::nu_at(double tau) const {
  for (const auto& iv : intervals)
    if (tau >= iv.lo && tau <= iv.hi) return iv.nu;
  return intervals.empty() ? nu0 : intervals.back().nu;
}

int StabilityMap::min_nu() const {
  int m = std::numeric_limits<int>::max();
  for (const auto& iv : intervals) m = std::min(m, iv.nu);
  return m == std::numeric_limits<int>::max() ? nu0 : m;
}

StabilityMap stability_map(const CharacteristicFunction& F, const TimeDelaySystem& sys,
                           double tau_max, const ToleranceConfig& cfg, TendencyPolicy policy,
                           std::optional<int> nu0_override, double omega_max, int grid_points,
                           int collocation_nodes) {
  cfg.validate();
  if (!(tau_max > 0.0)) throw ValidationError("stability_map: tau_max must be positive");
  const double wmax = omega_max > 0.0 ? omega_max : default_omega_max(sys);

  std::vector<CrossingPoint> crossings = crossing_sweep(F, wmax, grid_points);
  for (const auto& c : crossings) {
    if (c.kind == CrossingKind::kDegenerate) {
      throw DegenerateCrossing(c.omega,
                               "stability_map: repeated characteristic root on the imaginary "
                               "axis at omega = " +
                                   std::to_string(c.omega) +
                                   "; root tendency cannot be determined (decompose first)");
    }
  }
  if (policy == TendencyPolicy::kDirectMethod) {
    // Direct-method endgame: the largest crossing frequency destabilizes and
    // signs alternate downward; grazing roots keep tendency 0.
    std::vector<CrossingPoint*> trans;
    for (auto& c : crossings)
      if (c.kind == CrossingKind::kTransversal) trans.push_back(&c);
    std::sort(trans.begin(), trans.end(),
              [](const CrossingPoint* a, const CrossingPoint* b) { return a->omega > b->omega; });
    int sign = 1;
    for (auto* c : trans) {
      c->tendency = sign;
      sign = -sign;
    }
  }

  StabilityMap map;
  if (nu0_override) {
    map.nu0 = *nu0_override;
  } else if (F.has_fixed_offsets()) {
    int nu = 0;
    for (const Complex& r : rightmost_roots(sys, 0.0, collocation_nodes))
      if (r.real() > 1e-7) ++nu;
    map.nu0 = nu;
  } else {
    const Matrix S = sys.delay_free_sum();
    const Eigen::VectorXcd ev = S.eigenvalues();
    int nu = 0;
    for (int i = 0; i < ev.size(); ++i)
      if (ev(i).real() > 1e-9 * (1.0 + std::abs(ev(i)))) ++nu;
    map.nu0 = nu;
  }

  for (const auto& c : crossings) {
    if (c.kind == CrossingKind::kTangential || c.tendency == 0) {
      map.degenerate = true;
      map.degenerate_frequencies.push_back(c.omega);
      continue;
    }
    for (double t : c.delays(tau_max)) map.events.push_back({t, 2 * c.tendency, c.omega});
  }
  std::sort(map.events.begin(), map.events.end(), [](const auto& a, const auto& b) {
    if (a.tau != b.tau) return a.tau < b.tau;
    return a.omega < b.omega;
  });
  // merge events at numerically identical delays
  std::vector<StabilityMap::Event> merged;
  for (const auto& e : map.events) {
    if (!merged.empty() && std::abs(merged.back().tau - e.tau) <= 1e-9 * (1.0 + e.tau) &&
        merged.back().omega == e.omega) {
      merged.back().delta_nu += e.delta_nu;
    } else {
      merged.push_back(e);
    }
  }
  map.events = merged;

  int nu = map.nu0;
  double lo = 0.0;
  for (const auto& e : map.events) {
    if (e.tau > tau_max) break;
    if (e.tau > lo + 1e-12) {
      map.intervals.push_back({lo, e.tau, nu});
      lo = e.tau;
    }
    nu += e.delta_nu;
    if (nu < 0) {
      throw NumericalError("stability_map: unstable-pole count went negative at tau = " +
                           std::to_string(e.tau) + "; crossing analysis is inconsistent");
    }
  }
  if (lo < tau_max) map.intervals.push_back({lo, tau_max, nu});
  return map;
}

namespace {

// Chebyshev extreme points and differentiation matrix on [-1, 1].
void chebyshev(int N, Vector& x, Matrix& D) {
  x.resize(N + 1);
  for (int j = 0; j <= N; ++j) x(j) = std::cos(kPi * j / N);
  Vector c = Vector::Ones(N + 1);
  c(0) = 2.0;
  c(N) = 2.0;
  for (int j = 0; j <= N; ++j)
    if (j % 2 == 1) c(j) = -c(j);
  D.resize(N + 1, N + 1);
  for (int i = 0; i <= N; ++i) {
    for (int j = 0; j <= N; ++j) {
      if (i != j) D(i, j) = (c(i) / c(j)) / (x(i) - x(j));
    }
  }
  for (int i = 0; i <= N; ++i) {
    double s = 0.0;
    for (int j = 0; j <= N; ++j)
      if (i != j) s += D(i, j);
    D(i, i) = -s;
  }
}

// Barycentric interpolation row evaluating the Chebyshev interpolant at xx.
Vector interp_row(const Vector& x, double xx) {
  const int N = static_cast<int>(x.size()) - 1;
  Vector r = Vector::Zero(N + 1);
  for (int j = 0; j <= N; ++j) {
    if (std::abs(xx - x(j)) < 1e-14) {
      r(j) = 1.0;
      return r;
    }
  }
  double sum = 0.0;
  for (int j = 0; j <= N; ++j) {
    double w = (j == 0 || j == N) ? 0.5 : 1.0;
    if (j % 2 == 1) w = -w;
    r(j) = w / (xx - x(j));
    sum += r(j);
  }
  return r / sum;
}

}  // namespace

std::vector<Complex> rightmost_roots(const TimeDelaySystem& sys, double tau, int nodes,
                                     int* dropped) {
  sys.validate();
  if (nodes < 10) throw ValidationError("rightmost_roots: need at least 10 collocation nodes");
  if (tau < 0.0) throw ValidationError("rightmost_roots: tau must be nonnegative");
  const int n = sys.dim();
  const double hmax = sys.max_delay(tau);

  if (hmax <= 0.0) {
    // no active delays; plain eigenvalue problem
    const Eigen::VectorXcd ev = sys.delay_free_sum().eigenvalues();
    std::vector<Complex> out(ev.data(), ev.data() + ev.size());
    std::sort(out.begin(), out.end(), [](Complex a, Complex b) { return a.real() > b.real(); });
    if (dropped) *dropped = 0;
    return out;
  }

  const int N = nodes;
  Vector x;
  Matrix D;
  chebyshev(N, x, D);
  // theta_j = (x_j - 1) hmax / 2 in [-hmax, 0], theta_0 = 0
  Matrix Ds = D * (2.0 / hmax);
  Matrix M = Matrix::Zero(n * (N + 1), n * (N + 1));
  for (int i = 1; i <= N; ++i)
    for (int j = 0; j <= N; ++j)
      M.block(i * n, j * n, n, n) = Ds(i, j) * Matrix::Identity(n, n);
  for (const auto& t : sys.terms) {
    const double d = t.effective_delay(tau);
    const double xx = 1.0 - 2.0 * d / hmax;  // map -d to [-1, 1]
    const Vector row = interp_row(x, xx);
    for (int j = 0; j <= N; ++j) M.block(0, j * n, n, n) += row(j) * t.A;
  }

  Eigen::EigenSolver<Matrix> es(M, false);
  if (es.info() != Eigen::Success) {
    throw NumericalError("rightmost_roots: collocation eigenvalue iteration failed");
  }

  const CharacteristicFunction F = char_function(sys);
  auto dF = [&](Complex s) { return F.d_ds(s, tau); };
  std::vector<Complex> roots;
  int n_dropped = 0;
  for (int i = 0; i < es.eigenvalues().size(); ++i) {
    Complex s = es.eigenvalues()(i);
    if (!std::isfinite(s.real()) || std::abs(s) > 1e8) {
      ++n_dropped;
      continue;
    }
    bool ok = false;
    for (int it = 0; it < 60; ++it) {
      const Complex f = F.evaluate(s, tau);
      const Complex d = dF(s);
      if (std::abs(d) < 1e-300) break;
      const Complex step = f / d;
      s -= step;
      if (!std::isfinite(s.real()) || !std::isfinite(s.imag())) break;
      if (std::abs(step) < 1e-13 * (1.0 + std::abs(s))) {
        ok = true;
        break;
      }
    }
    if (!ok || std::abs(F.evaluate(s, tau)) > 1e-10 * F.scale(s, tau)) {
      ++n_dropped;
      continue;
    }
    bool dup = false;
    for (const auto& r : roots) {
      if (std::abs(r - s) < 1e-7 * (1.0 + std::abs(s))) {
        dup = true;
        break;
      }
    }
    if (!dup) roots.push_back(s);
  }
  std::sort(roots.begin(), roots.end(), [](Complex a, Complex b) {
    if (a.real() != b.real()) return a.real() > b.real();
    return a.imag() > b.imag();
  });
  if (dropped) *dropped = n_dropped;
  return roots;
}

}  // namespace tds
