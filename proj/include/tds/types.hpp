#pragma once

#include <complex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tds {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using Complex = std::complex<double>;

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input (shape mismatch, invariant violation).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// File or schema problem while reading a system description.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure failed to meet its tolerance.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// No common invariant subspace was found by the enumeration.
class NoDecomposition : public Error {
 public:
  using Error::Error;
};

/// Pole placement is singular (g(s*) = 0 or rank-deficient gain system).
class SingularPlacement : public Error {
 public:
  using Error::Error;
};

/// A characteristic root of multiplicity > 1 sits on the imaginary axis, so
/// the crossing direction cannot be classified; decompose the system first.
class DegenerateCrossing : public Error {
 public:
  explicit DegenerateCrossing(double omega_c, const std::string& msg)
      : Error(msg), omega(omega_c) {}
  double omega;
};

/// Numerical thresholds shared across the library.
struct ToleranceConfig {
  double rank_tol = 1e-8;         // relative singular-value cutoff
  double eig_cluster_tol = 1e-6;  // eigenvalue grouping radius
  double residual_tol = 1e-8;     // block-zero acceptance, relative

  void validate() const {
    if (!(rank_tol > 0.0) || !(eig_cluster_tol > 0.0) || !(residual_tol > 0.0)) {
      throw ValidationError("ToleranceConfig: all tolerances must be strictly positive");
    }
  }
};

/// One term A_k x(t - d_k) of a linear retarded system. The effective delay is
/// offset + tau_multiplicity * tau, where tau is the analysis parameter.
struct DelayTerm {
  double offset = 0.0;
  int tau_multiplicity = 0;
  Matrix A;

  double effective_delay(double tau) const { return offset + tau_multiplicity * tau; }
};

/// x'(t) = sum_k A_k x(t - d_k), optionally with an input matrix B.
struct TimeDelaySystem {
  std::vector<DelayTerm> terms;
  std::optional<Matrix> B;

  int dim() const { return terms.empty() ? 0 : static_cast<int>(terms.front().A.rows()); }

  /// x'(t) = A1 x(t) + A2 x(t - tau) with a single variable delay.
  static TimeDelaySystem retarded(const Matrix& A1, const Matrix& A2) {
    TimeDelaySystem sys;
    sys.terms.push_back({0.0, 0, A1});
    sys.terms.push_back({0.0, 1, A2});
    sys.validate();
    return sys;
  }

  /// Sum of all matrices: the tau = 0 collapse of a pure variable-delay system.
  Matrix delay_free_sum() const {
    Matrix s = Matrix::Zero(dim(), dim());
    for (const auto& t : terms) s += t.A;
    return s;
  }

  double max_delay(double tau) const {
    double m = 0.0;
    for (const auto& t : terms) m = std::max(m, t.effective_delay(tau));
    return m;
  }

  double min_positive_delay(double tau) const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& t : terms) {
      const double d = t.effective_delay(tau);
      if (d > 0.0) m = std::min(m, d);
    }
    return m;
  }

  void validate() const {
    if (terms.empty()) throw ValidationError("TimeDelaySystem: no terms");
    const int n = dim();
    if (n <= 0) throw ValidationError("TimeDelaySystem: empty matrix");
    int n_zero = 0;
    for (size_t i = 0; i < terms.size(); ++i) {
      const auto& t = terms[i];
      if (t.A.rows() != n || t.A.cols() != n) {
        throw ValidationError("TimeDelaySystem: term " + std::to_string(i) +
                              " matrix is not " + std::to_string(n) + "x" + std::to_string(n));
      }
      if (!t.A.allFinite()) {
        throw ValidationError("TimeDelaySystem: term " + std::to_string(i) +
                              " has a non-finite entry");
      }
      if (t.offset < 0.0 || t.tau_multiplicity < 0) {
        throw ValidationError("TimeDelaySystem: negative delay in term " + std::to_string(i));
      }
      if (t.offset == 0.0 && t.tau_multiplicity == 0) ++n_zero;
      for (size_t j = 0; j < i; ++j) {
        if (terms[j].tau_multiplicity == t.tau_multiplicity &&
            std::abs(terms[j].offset - t.offset) <= 1e-12 * (1.0 + std::abs(t.offset))) {
          throw ValidationError("TimeDelaySystem: duplicate delay in terms " +
                                std::to_string(j) + " and " + std::to_string(i));
        }
      }
    }
    if (n_zero != 1) {
      throw ValidationError("TimeDelaySystem: exactly one zero-delay term required, got " +
                            std::to_string(n_zero));
    }
    if (B && (B->rows() != n || !B->allFinite())) {
      throw ValidationError("TimeDelaySystem: input matrix B has wrong shape or NaN/Inf");
    }
  }
};

}  // namespace tds
