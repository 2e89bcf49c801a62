#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "support/oracles.hpp"
#include "support/paper_systems.hpp"
#include "tds/quasipoly.hpp"

using namespace tds;

namespace {
constexpr double kPi = std::numbers::pi;
const double kSqrt3 = std::sqrt(3.0);

const CrossingPoint* find_crossing(const std::vector<CrossingPoint>& cs, double omega,
                                   double tol = 1e-6) {
  for (const auto& c : cs) {
    if (std::abs(c.omega - omega) < tol) return &c;
  }
  return nullptr;
}
}  // namespace

TEST_CASE("char_function: subsystem (5) term list") {
  const auto F = char_function(paper::subsystem5());
  REQUIRE(F.terms().size() == 2);
  Vector p0(3), p1(2);
  p0 << 1, -1, 1;  // s^2 - s + 1
  p1 << 0, -1;     // -s
  CHECK((F.terms()[0].coeffs - p0).norm() < 1e-12);
  CHECK(F.terms()[0].tau_mult == 0);
  CHECK((F.terms()[1].coeffs - p1).norm() < 1e-12);
  CHECK(F.terms()[1].tau_mult == 1);
  CHECK(F.terms()[1].offset == 0.0);
}

TEST_CASE("char_function: subsystem (6) term list") {
  const auto F = char_function(paper::subsystem6());
  REQUIRE(F.terms().size() == 2);
  Vector p0(3), p1(1);
  p0 << 2, 0, 1;  // s^2 + 2
  p1 << 1;        // +1
  CHECK((F.terms()[0].coeffs - p0).norm() < 1e-12);
  CHECK((F.terms()[1].coeffs - p1).norm() < 1e-12);
}

TEST_CASE("char_function: zero delayed matrix collapses to det(sI - A1)") {
  Matrix A(3, 3);
  A << -1, 2, 0, 0, -3, 1, 0.5, 0, -2;
  const auto F = char_function(TimeDelaySystem::retarded(A, Matrix::Zero(3, 3)));
  REQUIRE(F.terms().size() == 1);
  CHECK(F.terms()[0].tau_mult == 0);
  std::mt19937 rng(5);
  std::normal_distribution<double> g;
  for (int i = 0; i < 20; ++i) {
    const Complex s(g(rng), g(rng));
    const CMatrix M = s * CMatrix::Identity(3, 3) - A.cast<Complex>();
    const Complex det = Eigen::PartialPivLU<CMatrix>(M).determinant();
    CHECK(std::abs(F.evaluate(s, 0.7) - det) < 1e-9 * (1.0 + std::abs(det)));
  }
}

TEST_CASE("char_function: degenerate pencil is reported") {
  // identically singular pencil: duplicated row
  Matrix A1(2, 2), A2(2, 2);
  A1 << 1, 1, 1, 1;
  A2 << 0, 0, 0, 0;
  TimeDelaySystem sys;
  // make sI - A1 never singular? use a pencil with zero determinant instead:
  // x' = A x with A acting on a single coordinate twice is still regular, so
  // construct the truly degenerate case by repeating the state equation.
  // det(sI - A1 - z A2) for A1 with equal rows is a valid polynomial, so this
  // case is regular; the degenerate error path needs det == 0 for all (s, z),
  // which cannot happen for sI - ... with finite matrices. Check instead that
  // well-posed systems never trip the error.
  sys = TimeDelaySystem::retarded(A1, A2);
  CHECK_NOTHROW(char_function(sys));
}

TEST_CASE("evaluate_cf: pinned axis zeros of the subsystems") {
  const auto F6 = char_function(paper::subsystem6());
  const Complex s6(0.0, kSqrt3);
  const double tau6 = 2.0 * kPi / kSqrt3;
  CHECK(std::abs(F6.evaluate(s6, tau6)) <= 1e-12 * F6.scale(s6, tau6));

  const auto F5 = char_function(paper::subsystem5());
  const Complex s5(0.0, 1.0);
  CHECK(std::abs(F5.evaluate(s5, kPi)) <= 1e-12 * F5.scale(s5, kPi));
}

TEST_CASE("evaluate_cf: conjugate symmetry and tau = 0 collapse") {
  std::mt19937 rng(19);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const auto sys = oracle::random_system(rng, 3);
  const auto F = char_function(sys);
  for (int i = 0; i < 100; ++i) {
    const Complex s(u(rng), u(rng));
    const double tau = std::abs(u(rng));
    const Complex a = F.evaluate(std::conj(s), tau);
    const Complex b = std::conj(F.evaluate(s, tau));
    CHECK(std::abs(a - b) <= 1e-12 * F.scale(s, tau));
  }
  const Matrix S = sys.delay_free_sum();
  for (int i = 0; i < 50; ++i) {
    const Complex s(u(rng), u(rng));
    const CMatrix M = s * CMatrix::Identity(3, 3) - S.cast<Complex>();
    const Complex det = Eigen::PartialPivLU<CMatrix>(M).determinant();
    CHECK(std::abs(F.evaluate(s, 0.0) - det) <= 1e-9 * std::max(1.0, std::abs(det)));
  }
}

TEST_CASE("w_polynomial: subsystem (5) gives (1 - u)^2") {
  const auto W = w_polynomial(char_function(paper::subsystem5()));
  REQUIRE(!W.inconclusive);
  REQUIRE(W.coeffs.size() == 3);
  CHECK(std::abs(W.coeffs(0) - 1.0) < 1e-12);
  CHECK(std::abs(W.coeffs(1) + 2.0) < 1e-12);
  CHECK(std::abs(W.coeffs(2) - 1.0) < 1e-12);
  CHECK(std::abs(W.derivative(1.0)) < 1e-12);
}

TEST_CASE("w_polynomial: subsystem (6) gives (2 - u)^2 - 1") {
  const auto W = w_polynomial(char_function(paper::subsystem6()));
  REQUIRE(!W.inconclusive);
  REQUIRE(W.coeffs.size() == 3);
  CHECK(std::abs(W.coeffs(0) - 3.0) < 1e-12);
  CHECK(std::abs(W.coeffs(1) + 4.0) < 1e-12);
  CHECK(std::abs(W.coeffs(2) - 1.0) < 1e-12);
  CHECK(W.derivative(1.0) == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(W.derivative(3.0) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("w_polynomial: no delayed term gives |P(j omega)|^2") {
  Matrix A(2, 2);
  A << -1, 1, 0, -2;
  const auto F = char_function(TimeDelaySystem::retarded(A, Matrix::Zero(2, 2)));
  const auto W = w_polynomial(F);
  for (double w : {0.3, 1.1, 2.7}) {
    const double expect = std::norm(F.evaluate(Complex(0.0, w), 0.0));
    CHECK(W.value(w * w) == doctest::Approx(expect).epsilon(1e-10));
  }
}

TEST_CASE("w_polynomial: full Example 2 signs match the source") {
  Matrix A1, A2;
  paper::example2_matrices(A1, A2);
  const auto F = char_function(TimeDelaySystem::retarded(A1, A2));
  const auto W = w_polynomial(F);
  REQUIRE(!W.inconclusive);
  const double scale = W.coeffs.cwiseAbs().maxCoeff();
  // u = 1 is a repeated root (both blocks cross there): W and W' vanish
  CHECK(std::abs(W.value(1.0)) < 1e-6 * scale);
  CHECK(std::abs(W.derivative(1.0)) < 1e-6 * scale);
  // u = 3 is simple and destabilizing: positive slope
  CHECK(W.derivative(3.0) > 1e-8 * scale);
}

TEST_CASE("w_polynomial: fixed offsets are rejected") {
  const auto F = char_function(paper::plant10().open_loop());
  CHECK_THROWS_AS(w_polynomial(F), ValidationError);
}

TEST_CASE("crossing_sweep: full Example 2 finds {1, sqrt 3} with the paper's delays") {
  Matrix A1, A2;
  paper::example2_matrices(A1, A2);
  const auto sys = TimeDelaySystem::retarded(A1, A2);
  const auto crossings = crossing_sweep(char_function(sys), default_omega_max(sys));
  REQUIRE(crossings.size() == 2);

  const auto* c1 = find_crossing(crossings, 1.0, 1e-4);
  REQUIRE(c1 != nullptr);
  CHECK(c1->kind == CrossingKind::kDegenerate);  // repeated root: tendency undetermined
  CHECK(std::abs(c1->theta - kPi) < 1e-4);
  const auto d1 = c1->delays(14.0);
  REQUIRE(d1.size() >= 2);  // pi + 2 pi k
  CHECK(d1[0] == doctest::Approx(kPi).epsilon(1e-6));
  CHECK(d1[1] == doctest::Approx(3.0 * kPi).epsilon(1e-6));

  const auto* c2 = find_crossing(crossings, kSqrt3, 1e-6);
  REQUIRE(c2 != nullptr);
  CHECK(c2->kind == CrossingKind::kTransversal);
  CHECK(c2->tendency == 1);
  const auto d2 = c2->delays(8.0);
  REQUIRE(d2.size() >= 3);  // 2 pi k / sqrt 3, including tau = 0
  CHECK(d2[0] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(d2[1] == doctest::Approx(2.0 * kPi / kSqrt3).epsilon(1e-9));
  CHECK(d2[2] == doctest::Approx(4.0 * kPi / kSqrt3).epsilon(1e-9));
}

TEST_CASE("crossing_sweep: Hurwitz system with zero delayed matrix has none") {
  Matrix A(2, 2);
  A << -1, 0, 0, -2;
  const auto F = char_function(TimeDelaySystem::retarded(A, Matrix::Zero(2, 2)));
  CHECK(crossing_sweep(F, 5.0).empty());
}

TEST_CASE("root_tendency: degenerate at the Example 2 double root") {
  Matrix A1, A2;
  paper::example2_matrices(A1, A2);
  const auto F = char_function(TimeDelaySystem::retarded(A1, A2));
  const auto t = root_tendency(F, 1.0, kPi);
  CHECK(t.kind == CrossingKind::kDegenerate);
  CHECK(t.sign == 0);
}

TEST_CASE("root_tendency: subsystem (6) crossing directions") {
  const auto F = char_function(paper::subsystem6());
  // destabilizing at omega = sqrt 3 (first positive delay 2 pi / sqrt 3)
  const auto t_hi = root_tendency(F, kSqrt3, 2.0 * kPi / kSqrt3);
  CHECK(t_hi.kind == CrossingKind::kTransversal);
  CHECK(t_hi.sign == 1);
  CHECK(t_hi.sign == oracle::tracked_tendency(F, kSqrt3, 2.0 * kPi / kSqrt3));
  // stabilizing at omega = 1 (delay pi)
  const auto t_lo = root_tendency(F, 1.0, kPi);
  CHECK(t_lo.kind == CrossingKind::kTransversal);
  CHECK(t_lo.sign == -1);
  CHECK(t_lo.sign == oracle::tracked_tendency(F, 1.0, kPi));
}

TEST_CASE("root_tendency: subsystem (5) grazes the axis") {
  const auto F = char_function(paper::subsystem5());
  const auto t = root_tendency(F, 1.0, kPi);
  CHECK(t.kind == CrossingKind::kTangential);
  CHECK(t.sign == 0);
}

TEST_CASE("root_tendency: rejects a non-root") {
  const auto F = char_function(paper::subsystem6());
  CHECK_THROWS_AS(root_tendency(F, 0.5, 0.3), ValidationError);
}

TEST_CASE("stability_map: subsystem (6) window (pi, 2 pi / sqrt 3)") {
  const auto sys = paper::subsystem6();
  const auto map = stability_map(char_function(sys), sys, 4.0);
  CHECK(map.nu0 == 0);  // poles on the axis at tau = 0, none strictly unstable
  const auto stable = map.stable_intervals();
  REQUIRE(stable.size() == 1);
  CHECK(stable[0].lo == doctest::Approx(kPi).epsilon(1e-9));
  CHECK(stable[0].hi == doctest::Approx(2.0 * kPi / kSqrt3).epsilon(1e-9));
  CHECK(map.nu_at(1.0) == 2);
  CHECK(map.nu_at(3.8) == 2);
}

TEST_CASE("stability_map: subsystem (9) two poles stabilize on (pi, 3.3077)") {
  const auto sys = paper::subsystem9();
  const auto map = stability_map(char_function(sys), sys, 4.0);
  // All three roots of s^3 - s^2 + 3s - 1 lie in the right half plane, so the
  // crossing pair leaves NU = 1 on the window; the source counts the same
  // event as "two stable poles".
  CHECK(map.nu0 == 3);
  CHECK(map.min_nu() == 1);
  REQUIRE(map.events.size() >= 2);
  CHECK(map.events[0].tau == doctest::Approx(kPi).epsilon(1e-6));
  CHECK(map.events[0].delta_nu == -2);
  CHECK(map.events[1].tau == doctest::Approx(3.3077).epsilon(1e-3));
  CHECK(map.events[1].delta_nu == 2);
  CHECK(map.nu_at(3.2) == 1);
}

TEST_CASE("stability_map: grazing roots leave NU unchanged") {
  const auto sys = paper::subsystem5();
  const auto map = stability_map(char_function(sys), sys, 13.0);
  CHECK(map.nu0 == 2);
  CHECK(map.degenerate);
  REQUIRE(!map.degenerate_frequencies.empty());
  CHECK(std::abs(map.degenerate_frequencies.front() - 1.0) < 1e-6);
  for (const auto& iv : map.intervals) CHECK(iv.nu == 2);
}

TEST_CASE("stability_map: Hurwitz system is stable over the whole horizon") {
  Matrix A(2, 2);
  A << -1, 0.3, 0, -2;
  const auto sys = TimeDelaySystem::retarded(A, Matrix::Zero(2, 2));
  const auto map = stability_map(char_function(sys), sys, 7.0);
  REQUIRE(map.intervals.size() == 1);
  CHECK(map.intervals[0].nu == 0);
  CHECK(map.intervals[0].lo == 0.0);
  CHECK(map.intervals[0].hi == 7.0);
}

TEST_CASE("stability_map: repeated axis root raises DegenerateCrossing") {
  Matrix A1, A2;
  paper::example2_matrices(A1, A2);
  const auto sys = TimeDelaySystem::retarded(A1, A2);
  CHECK_THROWS_AS(stability_map(char_function(sys), sys, 4.0), DegenerateCrossing);
  try {
    stability_map(char_function(sys), sys, 4.0);
  } catch (const DegenerateCrossing& e) {
    CHECK(std::abs(e.omega - 1.0) < 1e-4);
  }
}

TEST_CASE("rightmost_roots: plain exponential decay") {
  Matrix A(1, 1);
  A << -1;
  const auto sys = TimeDelaySystem::retarded(A, Matrix::Zero(1, 1));
  const auto roots = rightmost_roots(sys, 1.0, 16);
  REQUIRE(!roots.empty());
  CHECK(std::abs(roots.front() - Complex(-1.0)) < 1e-10);
}

TEST_CASE("rightmost_roots: subsystem (5) at tau = 3.2 has two unstable poles") {
  const auto roots = rightmost_roots(paper::subsystem5(), 3.2, 64);
  int unstable = 0;
  for (const auto& r : roots)
    if (r.real() > 1e-9) ++unstable;
  CHECK(unstable == 2);
  // frozen from an independent collocation run
  REQUIRE(roots.size() >= 2);
  CHECK(roots[0].real() == doctest::Approx(0.296893).epsilon(1e-4));
  CHECK(std::abs(roots[0].imag()) == doctest::Approx(0.902948).epsilon(1e-4));
}

TEST_CASE("rightmost_roots: subsystem (9) agrees with the stability map") {
  const auto sys = paper::subsystem9();
  const auto map = stability_map(char_function(sys), sys, 4.0);
  const auto roots = rightmost_roots(sys, 3.2, 64);
  int unstable = 0;
  for (const auto& r : roots)
    if (r.real() > 1e-9) ++unstable;
  CHECK(unstable == map.nu_at(3.2));
}

TEST_CASE("crossing_sweep matches the dense grid-scan oracle on random systems") {
  std::mt19937 rng(2024);
  int verified = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = trial % 2 == 0 ? 2 : 3;
    const auto sys = oracle::random_system(rng, n);
    const auto F = char_function(sys);
    const double wmax = default_omega_max(sys);
    std::vector<CrossingPoint> sweep;
    try {
      sweep = crossing_sweep(F, wmax, 8000);
    } catch (const NumericalError&) {
      continue;
    }
    const auto scan = oracle::grid_scan_crossings(F, wmax);
    // every oracle hit has a sweep partner and vice versa, within 1e-4
    for (double w : scan) {
      bool matched = false;
      for (const auto& c : sweep)
        if (std::abs(c.omega - w) < 1e-4) matched = true;
      CHECK_MESSAGE(matched, "oracle crossing missed by sweep at omega=", w);
    }
    for (const auto& c : sweep) {
      bool matched = false;
      for (double w : scan)
        if (std::abs(c.omega - w) < 1e-4) matched = true;
      CHECK_MESSAGE(matched, "sweep crossing not found by oracle at omega=", c.omega);
    }
    ++verified;
  }
  CHECK(verified >= 15);  // sanity: the loop actually exercised systems
}

TEST_CASE("NU from the stability map equals the right-half-plane root count") {
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> pick(0.2, 3.5);
  int verified = 0;
  for (int trial = 0; trial < 40 && verified < 20; ++trial) {
    const int n = trial % 2 == 0 ? 2 : 3;
    const auto sys = oracle::random_system(rng, n);
    double tau = pick(rng);
    try {
      const auto F = char_function(sys);
      const auto map = stability_map(F, sys, 4.0);
      // stay away from the map's own breakpoints
      bool near_event = false;
      for (const auto& e : map.events)
        if (std::abs(e.tau - tau) < 1e-2) near_event = true;
      if (near_event) continue;
      const auto roots = rightmost_roots(sys, tau, 64);
      int unstable = 0;
      for (const auto& r : roots)
        if (r.real() > 1e-9) ++unstable;
      CHECK(unstable == map.nu_at(tau));
      ++verified;
    } catch (const DegenerateCrossing&) {
      continue;  // random draws can graze; they are not this test's subject
    }
  }
  CHECK(verified == 20);
}

TEST_CASE("squared crossing frequencies are roots of the W polynomial") {
  std::mt19937 rng(501);
  int verified = 0;
  for (int trial = 0; trial < 12; ++trial) {
    const auto sys = oracle::random_system(rng, 2);
    const auto F = char_function(sys);
    const auto W = w_polynomial(F);
    if (W.inconclusive) continue;
    const double scale = W.coeffs.cwiseAbs().maxCoeff();
    std::vector<CrossingPoint> sweep;
    try {
      sweep = crossing_sweep(F, default_omega_max(sys));
    } catch (const NumericalError&) {
      continue;
    }
    for (const auto& c : sweep) {
      const double u = c.omega * c.omega;
      // |W(u)| small relative to the local polynomial scale
      const double local = scale * std::max(1.0, std::pow(u, W.coeffs.size() - 1.0));
      CHECK(std::abs(W.value(u)) <= 1e-6 * local);
      ++verified;
    }
  }
  CHECK(verified > 0);
}

TEST_CASE("analytic tendency equals the tracking oracle on simple crossings") {
  std::mt19937 rng(77);
  int verified = 0;
  for (int trial = 0; trial < 20 && verified < 10; ++trial) {
    const auto sys = oracle::random_system(rng, 2);
    const auto F = char_function(sys);
    std::vector<CrossingPoint> sweep;
    try {
      sweep = crossing_sweep(F, default_omega_max(sys));
    } catch (const NumericalError&) {
      continue;
    }
    for (const auto& c : sweep) {
      if (c.kind != CrossingKind::kTransversal) continue;
      const auto delays = c.delays(10.0);
      if (delays.empty() || delays.front() < 1e-3) continue;
      const int tracked = oracle::tracked_tendency(F, c.omega, delays.front());
      if (tracked == 0) continue;
      CHECK(c.tendency == tracked);
      ++verified;
    }
  }
  CHECK(verified >= 10);
}

TEST_CASE("direct-method policy alternates tendencies from the top frequency") {
  const auto sys = paper::subsystem6();
  const auto F = char_function(sys);
  const auto analytic = stability_map(F, sys, 4.0, {}, TendencyPolicy::kAnalytic);
  const auto direct = stability_map(F, sys, 4.0, {}, TendencyPolicy::kDirectMethod);
  REQUIRE(analytic.intervals.size() == direct.intervals.size());
  for (size_t i = 0; i < analytic.intervals.size(); ++i) {
    CHECK(analytic.intervals[i].nu == direct.intervals[i].nu);
    CHECK(analytic.intervals[i].lo == doctest::Approx(direct.intervals[i].lo).epsilon(1e-9));
  }
}
