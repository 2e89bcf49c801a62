#include "tds/invariant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace tds {
namespace {

int svd_rank(const Eigen::JacobiSVD<Matrix>& svd, double rtol) {
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  int r = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > rtol * sv(0)) ++r;
  return r;
}

int svd_rank(const Matrix& M, double rtol) {
  Eigen::JacobiSVD<Matrix> svd(M);
  return svd_rank(svd, rtol);
}

// Orthonormal basis for the null space of M (columns of V past the rank).
template <typename Mat>
Mat nullspace(const Mat& M, double rtol) {
  Eigen::JacobiSVD<Mat> svd(M, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  int r = 0;
  if (sv.size() > 0 && sv(0) > 0.0) {
    for (int i = 0; i < sv.size(); ++i)
      if (sv(i) > rtol * sv(0)) ++r;
  }
  return svd.matrixV().rightCols(M.cols() - r);
}

// Chain extraction for one eigenvalue group. Works for real Scalar (real
// eigenvalue) or complex Scalar; B = A - lambda I, m = algebraic multiplicity.
template <typename Scalar>
std::vector<std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>> extract_chains(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& B, int m, double rtol) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const int n = static_cast<int>(B.rows());

  // Kernel flag ker B ⊂ ker B^2 ⊂ ... until the dimension reaches m.
  std::vector<Mat> kers;
  kers.push_back(Mat::Zero(n, 0));
  Mat Bj = Mat::Identity(n, n);
  int p = 0;
  while (true) {
    Bj = Bj * B;
    kers.push_back(nullspace<Mat>(Bj, rtol));
    ++p;
    const int d = static_cast<int>(kers.back().cols());
    if (d >= m || p > n || d == static_cast<int>(kers[p - 1].cols())) break;
  }
  p = static_cast<int>(kers.size()) - 1;

  std::vector<std::vector<Vec>> chains;
  std::vector<std::vector<Vec>> placed(p + 2);  // vectors already used at each grade
  for (int j = p; j >= 1; --j) {
    Mat base(n, kers[j - 1].cols() + placed[j].size());
    base.leftCols(kers[j - 1].cols()) = kers[j - 1];
    for (size_t c = 0; c < placed[j].size(); ++c)
      base.col(kers[j - 1].cols() + c) = placed[j][c];
    Mat Qb;
    if (base.cols() > 0) {
      Eigen::HouseholderQR<Mat> qr(base);
      Qb = qr.householderQ() * Mat::Identity(n, std::min<int>(n, base.cols()));
    } else {
      Qb = Mat::Zero(n, 0);
    }
    const int need = static_cast<int>(kers[j].cols()) - static_cast<int>(kers[j - 1].cols()) -
                     static_cast<int>(placed[j].size());
    Mat Qcur = Qb;
    for (int pick = 0; pick < need; ++pick) {
      // Candidate in ker B^j with the largest residual against what is spanned.
      Mat res = kers[j];
      if (Qcur.cols() > 0) res -= Qcur * (Qcur.adjoint() * kers[j]);
      int best = -1;
      double best_norm = 1e-10;
      for (int c = 0; c < res.cols(); ++c) {
        const double nn = res.col(c).norm();
        if (nn > best_norm) {
          best_norm = nn;
          best = c;
        }
      }
      if (best < 0) break;
      Mat grown(n, Qcur.cols() + 1);
      grown.leftCols(Qcur.cols()) = Qcur;
      grown.col(Qcur.cols()) = res.col(best) / best_norm;
      Qcur = grown;

      std::vector<Vec> chain;
      chain.push_back(kers[j].col(best));
      for (int step = 1; step < j; ++step) chain.push_back(B * chain.back());
      std::reverse(chain.begin(), chain.end());  // x_0 first
      double sc = 0.0;
      for (const auto& v : chain) sc = std::max(sc, v.norm());
      for (auto& v : chain) v /= sc;
      chains.push_back(chain);
      for (int g = 1; g <= j; ++g) placed[g].push_back(chains.back()[g - 1]);
    }
  }
  return chains;
}

struct EigGroup {
  Complex lambda;
  int multiplicity = 0;
};

std::vector<EigGroup> cluster_eigenvalues(const CVector& ev, double tol) {
  std::vector<Complex> sorted(ev.data(), ev.data() + ev.size());
  std::sort(sorted.begin(), sorted.end(), [](Complex a, Complex b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
  std::vector<std::vector<Complex>> groups;
  for (Complex e : sorted) {
    bool joined = false;
    for (auto& g : groups) {
      if (std::abs(e - g.front()) <= tol * std::max(1.0, std::abs(g.front()))) {
        g.push_back(e);
        joined = true;
        break;
      }
    }
    if (!joined) groups.push_back({e});
  }
  std::vector<EigGroup> out;
  for (const auto& g : groups) {
    Complex mean = 0.0;
    for (Complex e : g) mean += e;
    mean /= static_cast<double>(g.size());
    out.push_back({mean, static_cast<int>(g.size())});
  }
  return out;
}

}  // namespace

SubspaceBasis SubspaceBasis::from_columns(const Matrix& cols, double rank_tol) {
  Eigen::JacobiSVD<Matrix> svd(cols, Eigen::ComputeThinU);
  const auto& sv = svd.singularValues();
  int r = 0;
  if (sv.size() > 0 && sv(0) > 0.0) {
    for (int i = 0; i < sv.size(); ++i)
      if (sv(i) > rank_tol * sv(0)) ++r;
  }
  SubspaceBasis out;
  out.basis = svd.matrixU().leftCols(r);
  return out;
}

void SubspaceBasis::validate() const {
  if (basis.cols() < 1 || basis.rows() < basis.cols()) {
    throw ValidationError("SubspaceBasis: need n x k with 1 <= k <= n");
  }
  const Matrix gram = basis.transpose() * basis;
  if ((gram - Matrix::Identity(basis.cols(), basis.cols())).norm() > 1e-8) {
    throw ValidationError("SubspaceBasis: columns are not orthonormal");
  }
}

std::vector<JordanChainRecord> jordan_chains(const Matrix& A, const ToleranceConfig& cfg) {
  cfg.validate();
  if (A.rows() != A.cols() || A.rows() == 0) {
    throw ValidationError("jordan_chains: matrix must be square and nonempty");
  }
  const int n = static_cast<int>(A.rows());

  Eigen::EigenSolver<Matrix> es(A, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) {
    throw NumericalError("jordan_chains: eigenvalue iteration failed to converge");
  }
  const auto groups = cluster_eigenvalues(es.eigenvalues(), cfg.eig_cluster_tol);

  std::vector<JordanChainRecord> records;
  for (const auto& g : groups) {
    const bool is_real = std::abs(g.lambda.imag()) <= cfg.eig_cluster_tol * std::max(1.0, std::abs(g.lambda));
    if (is_real) {
      const double lam = g.lambda.real();
      Matrix B = A - lam * Matrix::Identity(n, n);
      for (auto& ch : extract_chains<double>(B, g.multiplicity, cfg.rank_tol)) {
        JordanChainRecord rec;
        rec.eigenvalue = Complex(lam, 0.0);
        for (auto& v : ch) rec.vectors.push_back(v.cast<Complex>());
        records.push_back(std::move(rec));
      }
    } else if (g.lambda.imag() > 0.0) {
      CMatrix B = A.cast<Complex>() - g.lambda * CMatrix::Identity(n, n);
      std::vector<JordanChainRecord> pair;
      for (auto& ch : extract_chains<Complex>(B, g.multiplicity, cfg.rank_tol)) {
        JordanChainRecord rec;
        rec.eigenvalue = g.lambda;
        rec.vectors = std::move(ch);
        records.push_back(rec);
        // conjugate chain at conj(lambda)
        JordanChainRecord conj_rec;
        conj_rec.eigenvalue = std::conj(g.lambda);
        for (const auto& v : records.back().vectors) conj_rec.vectors.push_back(v.conjugate());
        pair.push_back(std::move(conj_rec));
      }
      for (auto& r : pair) records.push_back(std::move(r));
    }
  }

  // The union of all chain vectors must span C^n.
  int total = 0;
  for (const auto& r : records) total += static_cast<int>(r.vectors.size());
  CMatrix V(n, total);
  int col = 0;
  for (const auto& r : records)
    for (const auto& v : r.vectors) V.col(col++) = v;
  Eigen::JacobiSVD<CMatrix> svd(V);
  const auto& sv = svd.singularValues();
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > 1e-10 * sv(0)) ++rank;
  if (total != n || rank != n) {
    throw NumericalError("jordan_chains: extracted chains do not span C^n (" +
                         std::to_string(rank) + "/" + std::to_string(n) +
                         "); eigenvalue clustering may be inadequate for this matrix");
  }
  return records;
}

bool invariant_check(const SubspaceBasis& J, const std::vector<Matrix>& mats,
                     const ToleranceConfig& cfg) {
  cfg.validate();
  J.validate();
  const int n = J.ambient();
  const int r = J.dim();
  for (const auto& A : mats) {
    if (A.rows() != n || A.cols() != n) {
      throw ValidationError("invariant_check: matrix dimension does not match subspace ambient");
    }
    Matrix stacked(n, 2 * r);
    stacked.leftCols(r) = J.basis;
    stacked.rightCols(r) = A * J.basis;
    if (svd_rank(stacked, cfg.rank_tol) != r) return false;
  }
  return true;
}

std::vector<CVector> common_eigenvectors(const Matrix& A1, const Matrix& A2,
                                         const ToleranceConfig& cfg) {
  cfg.validate();
  if (A1.rows() != A1.cols() || A2.rows() != A2.cols() || A1.rows() != A2.rows()) {
    throw ValidationError("common_eigenvectors: matrices must be square with equal size");
  }
  const int n = static_cast<int>(A1.rows());

  auto eigenspaces = [&](const Matrix& A) {
    Eigen::EigenSolver<Matrix> es(A, false);
    if (es.info() != Eigen::Success)
      throw NumericalError("common_eigenvectors: eigenvalue iteration failed");
    std::vector<std::pair<Complex, CMatrix>> spaces;
    for (const auto& g : cluster_eigenvalues(es.eigenvalues(), cfg.eig_cluster_tol)) {
      CMatrix B = A.cast<Complex>() - g.lambda * CMatrix::Identity(n, n);
      spaces.emplace_back(g.lambda, nullspace<CMatrix>(B, cfg.rank_tol));
    }
    return spaces;
  };

  const auto s1 = eigenspaces(A1);
  const auto s2 = eigenspaces(A2);

  std::vector<CVector> found;
  CMatrix accum(n, 0);
  auto adds_rank = [&](const CVector& v) {
    CMatrix grown(n, accum.cols() + 1);
    grown.leftCols(accum.cols()) = accum;
    grown.col(accum.cols()) = v;
    Eigen::JacobiSVD<CMatrix> svd(grown);
    const auto& sv = svd.singularValues();
    int r = 0;
    for (int i = 0; i < sv.size(); ++i)
      if (sv(i) > 1e-8 * sv(0)) ++r;
    if (r == grown.cols()) {
      accum = grown;
      return true;
    }
    return false;
  };

  const double res_tol = 1e-7;
  for (const auto& [lam1, E1] : s1) {
    for (const auto& [lam2, E2] : s2) {
      // principal angles between the eigenspaces
      CMatrix M = E1.adjoint() * E2;
      Eigen::JacobiSVD<CMatrix> svd(M, Eigen::ComputeFullU);
      const auto& sv = svd.singularValues();
      for (int k = 0; k < sv.size(); ++k) {
        if (sv(k) < 1.0 - cfg.eig_cluster_tol) continue;
        CVector v = E1 * svd.matrixU().col(k);
        v /= v.norm();
        if ((A1 * v - lam1 * v).norm() > res_tol * (1.0 + A1.norm())) continue;
        if ((A2 * v - lam2 * v).norm() > res_tol * (1.0 + A2.norm())) continue;
        if (adds_rank(v)) found.push_back(v);
      }
    }
  }
  return found;
}

namespace {

// Candidate generation: per chain, a unit is the list of realified column
// groups added by extending the leading segment one vector at a time.
struct ChainUnit {
  std::vector<Matrix> steps;  // each step: n x 1 (real eigenvalue) or n x 2 (conjugate pair)
};

std::vector<ChainUnit> realified_units(const Matrix& A, const ToleranceConfig& cfg) {
  std::vector<ChainUnit> units;
  for (const auto& rec : jordan_chains(A, cfg)) {
    const double im = rec.eigenvalue.imag();
    const double sc = std::max(1.0, std::abs(rec.eigenvalue));
    if (im < -cfg.eig_cluster_tol * sc) continue;  // conjugate of a kept chain
    ChainUnit u;
    if (std::abs(im) <= cfg.eig_cluster_tol * sc) {
      for (const auto& v : rec.vectors) {
        Matrix col(v.size(), 1);
        col.col(0) = v.real();
        u.steps.push_back(col);
      }
    } else {
      for (const auto& v : rec.vectors) {
        Matrix cols(v.size(), 2);
        cols.col(0) = v.real();
        cols.col(1) = v.imag();
        u.steps.push_back(cols);
      }
    }
    units.push_back(std::move(u));
  }
  return units;
}

std::vector<SubspaceBasis> candidates_from_units(const std::vector<ChainUnit>& units,
                                                 const std::vector<Matrix>& mats, int n,
                                                 const ToleranceConfig& cfg) {
  // Enumerate prefix lengths per chain; cap the combinatorial budget.
  long combos = 1;
  for (const auto& u : units) {
    combos *= static_cast<long>(u.steps.size()) + 1;
    if (combos > 65536) {
      combos = 65536;
      break;
    }
  }
  std::vector<SubspaceBasis> out;
  std::vector<size_t> prefix(units.size(), 0);
  long visited = 0;
  while (visited < combos) {
    ++visited;
    // assemble candidate columns
    int total_cols = 0;
    for (size_t i = 0; i < units.size(); ++i)
      for (size_t s = 0; s < prefix[i]; ++s) total_cols += static_cast<int>(units[i].steps[s].cols());
    if (total_cols >= 1 && total_cols < n) {
      Matrix cols(n, total_cols);
      int c = 0;
      for (size_t i = 0; i < units.size(); ++i) {
        for (size_t s = 0; s < prefix[i]; ++s) {
          cols.middleCols(c, units[i].steps[s].cols()) = units[i].steps[s];
          c += static_cast<int>(units[i].steps[s].cols());
        }
      }
      SubspaceBasis W = SubspaceBasis::from_columns(cols);
      if (W.dim() >= 1 && W.dim() < n && invariant_check(W, mats, cfg)) out.push_back(W);
    }
    // next combination (mixed-radix increment)
    size_t pos = 0;
    while (pos < units.size()) {
      if (++prefix[pos] <= units[pos].steps.size()) break;
      prefix[pos] = 0;
      ++pos;
    }
    if (pos == units.size()) break;
  }
  return out;
}

}  // namespace

std::vector<SubspaceBasis> find_common_invariant_subspaces(const Matrix& A1, const Matrix& A2,
                                                           const ToleranceConfig& cfg,
                                                           std::optional<int> k_wanted) {
  cfg.validate();
  if (A1.rows() != A1.cols() || A2.rows() != A2.cols() || A1.rows() != A2.rows()) {
    throw ValidationError("find_common_invariant_subspaces: matrices must be square, equal size");
  }
  const int n = static_cast<int>(A1.rows());
  const std::vector<Matrix> mats{A1, A2};

  std::vector<SubspaceBasis> found =
      candidates_from_units(realified_units(A1, cfg), mats, n, cfg);
  if (found.empty()) {
    found = candidates_from_units(realified_units(A2, cfg), mats, n, cfg);
  }

  std::stable_sort(found.begin(), found.end(),
                   [](const SubspaceBasis& a, const SubspaceBasis& b) { return a.dim() < b.dim(); });

  // dedupe by projector distance (all principal angles < 1e-6)
  std::vector<SubspaceBasis> uniq;
  for (const auto& W : found) {
    if (k_wanted && W.dim() != *k_wanted) continue;
    bool dup = false;
    for (const auto& U : uniq) {
      if (U.dim() != W.dim()) continue;
      const Matrix dP = W.basis * W.basis.transpose() - U.basis * U.basis.transpose();
      if (dP.norm() < 1e-6) {
        dup = true;
        break;
      }
    }
    if (!dup) uniq.push_back(W);
  }
  return uniq;
}

DecompositionResult block_triangularize(const std::vector<Matrix>& mats, const SubspaceBasis& W,
                                        const ToleranceConfig& cfg) {
  cfg.validate();
  W.validate();
  if (mats.empty()) throw ValidationError("block_triangularize: no matrices");
  const int n = W.ambient();
  const int k = W.dim();
  if (k >= n) throw ValidationError("block_triangularize: need 1 <= k < n");
  for (const auto& A : mats) {
    if (A.rows() != n || A.cols() != n)
      throw ValidationError("block_triangularize: matrix size mismatch");
  }
  if (!invariant_check(W, mats, cfg)) {
    throw ValidationError("block_triangularize: subspace is not invariant for all matrices");
  }

  // Deterministic orthonormal complement from the full SVD of the basis.
  Eigen::JacobiSVD<Matrix> svd(W.basis, Eigen::ComputeFullU);
  DecompositionResult out;
  out.k = k;
  out.Q.resize(n, n);
  out.Q.leftCols(k) = W.basis;
  out.Q.rightCols(n - k) = svd.matrixU().rightCols(n - k);
  out.Q_inv = out.Q.transpose();  // Q is orthogonal

  double max_norm = 0.0;
  for (const auto& A : mats) max_norm = std::max(max_norm, A.norm());
  for (const auto& A : mats) {
    const Matrix T = out.Q_inv * A * out.Q;
    MatrixBlocks b;
    b.top_left = T.topLeftCorner(k, k);
    b.coupling = T.topRightCorner(k, n - k);
    b.bottom_right = T.bottomRightCorner(n - k, n - k);
    out.residual = std::max(out.residual, T.bottomLeftCorner(n - k, k).norm());
    out.blocks.push_back(std::move(b));
  }
  if (out.residual > cfg.residual_tol * std::max(1.0, max_norm)) {
    throw NumericalError("block_triangularize: residual " + std::to_string(out.residual) +
                         " exceeds tolerance");
  }
  return out;
}

SystemDecomposition decompose_system(const TimeDelaySystem& sys, const ToleranceConfig& cfg) {
  cfg.validate();
  sys.validate();
  if (sys.terms.size() != 2 || sys.terms[0].tau_multiplicity != 0 || sys.terms[0].offset != 0.0 ||
      sys.terms[1].tau_multiplicity != 1 || sys.terms[1].offset != 0.0) {
    throw ValidationError(
        "decompose_system: expected exactly the terms (0, A1) and (tau, A2) with one variable delay");
  }
  const Matrix& A1 = sys.terms[0].A;
  const Matrix& A2 = sys.terms[1].A;

  const auto subspaces = find_common_invariant_subspaces(A1, A2, cfg);
  if (subspaces.empty()) {
    throw NoDecomposition("decompose_system: no common invariant subspace found");
  }
  SystemDecomposition out;
  out.transform = block_triangularize({A1, A2}, subspaces.front(), cfg);

  TimeDelaySystem top, bottom;
  top.terms.push_back({0.0, 0, out.transform.blocks[0].top_left});
  top.terms.push_back({0.0, 1, out.transform.blocks[1].top_left});
  bottom.terms.push_back({0.0, 0, out.transform.blocks[0].bottom_right});
  bottom.terms.push_back({0.0, 1, out.transform.blocks[1].bottom_right});
  out.subsystems = {top, bottom};
  return out;
}

}  // namespace tds
