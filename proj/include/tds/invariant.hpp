#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "tds/types.hpp"

namespace tds {

/// A Jordan chain x_0..x_k of A at eigenvalue lambda:
/// A x_0 = lambda x_0 and A x_j - lambda x_j = x_{j-1} for j >= 1.
struct JordanChainRecord {
  Complex eigenvalue;
  std::vector<CVector> vectors;  // x_0 first
};

/// Orthonormal basis of a k-dimensional subspace of R^n, 1 <= k < n allowed
/// for decomposition work (k == n is accepted for certificate checks).
struct SubspaceBasis {
  Matrix basis;  // n x k, orthonormal columns

  int ambient() const { return static_cast<int>(basis.rows()); }
  int dim() const { return static_cast<int>(basis.cols()); }

  /// Orthonormalizes arbitrary spanning columns (rank-revealing).
  static SubspaceBasis from_columns(const Matrix& cols, double rank_tol = 1e-10);
  void validate() const;
};

struct MatrixBlocks {
  Matrix top_left;      // k x k, restriction to W
  Matrix coupling;      // k x (n-k)
  Matrix bottom_right;  // (n-k) x (n-k), quotient map
};

struct DecompositionResult {
  Matrix Q;      // [W basis | orthonormal complement]
  Matrix Q_inv;
  std::vector<MatrixBlocks> blocks;  // one entry per input matrix
  double residual = 0.0;             // max_i ||bottom-left of Q^-1 A_i Q||_F
  int k = 0;
};

struct SystemDecomposition {
  DecompositionResult transform;
  std::vector<TimeDelaySystem> subsystems;  // {top-left system, bottom-right system}
};

/// Jordan chains of A, grouped by eigenvalue cluster. The union of all chain
/// vectors spans C^n. Eigenvalues closer than eig_cluster_tol are merged
/// before generalized-eigenvector extraction.
std::vector<JordanChainRecord> jordan_chains(const Matrix& A,
                                             const ToleranceConfig& cfg = {});

/// Rank certificate: true iff rank [J  A_i J] == dim(J) for every matrix.
bool invariant_check(const SubspaceBasis& J, const std::vector<Matrix>& mats,
                     const ToleranceConfig& cfg = {});

/// Common eigenvectors of A1 and A2 found by pairwise eigenspace
/// intersection (principal angles). May be empty.
std::vector<CVector> common_eigenvectors(const Matrix& A1, const Matrix& A2,
                                         const ToleranceConfig& cfg = {});

/// Searches for common invariant subspaces as real-form spans of unions of
/// leading Jordan-chain segments of A1 (falling back to A2's chains when
/// nothing qualifies). Every returned basis passes invariant_check for both
/// matrices; results deduplicated and sorted by dimension ascending.
std::vector<SubspaceBasis> find_common_invariant_subspaces(
    const Matrix& A1, const Matrix& A2, const ToleranceConfig& cfg = {},
    std::optional<int> k_wanted = std::nullopt);

/// Simultaneous block triangularization with Q = [W | complement].
/// Throws ValidationError when W fails the invariance certificate.
DecompositionResult block_triangularize(const std::vector<Matrix>& mats,
                                        const SubspaceBasis& W,
                                        const ToleranceConfig& cfg = {});

/// Splits x' = A1 x + A2 x(t - tau) into two lower-dimensional subsystems via
/// a common invariant subspace. Throws NoDecomposition when none is found.
SystemDecomposition decompose_system(const TimeDelaySystem& sys,
                                     const ToleranceConfig& cfg = {});

}  // namespace tds
