// Reference systems used across the test suites, built from the printed
// transformation matrices and block data so the decomposition structure is
// exact to rounding. The flat 4-decimal matrices are kept alongside for
// fidelity checks against the publication values.
#pragma once

#include <Eigen/Dense>

#include "tds/feedback.hpp"
#include "tds/types.hpp"

namespace paper {

using tds::Matrix;
using tds::Vector;

// --- shared 2x2 blocks -----------------------------------------------------
inline Matrix block_a11() {
  Matrix m(2, 2);
  m << 0, 1, -1, 1;
  return m;
}
inline Matrix block_b11() {
  Matrix m(2, 2);
  m << 0, 0, 0, 1;
  return m;
}
inline Matrix block_a22() {
  Matrix m(2, 2);
  m << 0, 2, -1, 0;
  return m;
}
inline Matrix block_b22() {
  Matrix m(2, 2);
  m << 0, 1, 0, 0;
  return m;
}
// 3x3 blocks of the 5x5 example
inline Matrix block_a33() {
  Matrix m(3, 3);
  m << 0, 0, -1, 1, 0, 1, 1, -1, 1;
  return m;
}
inline Matrix block_b33() {
  Matrix m(3, 3);
  m << 0, 0, 0, 0, 0, 0, 1, 0, 0;
  return m;
}

// --- Example 1 (3x3 pair with invariant subspace span{e1, e3}) --------------
inline Matrix example1_a1() {
  Matrix m(3, 3);
  m << 1, 1, 0, 0, 2, 0, 0, 3, 1;
  return m;
}
inline Matrix example1_a2() {
  Matrix m(3, 3);
  m << 0, 1, 0, 0, 4, 0, 2, 2, 0;
  return m;
}

// --- Example 2 (4x4) --------------------------------------------------------
inline Matrix example2_T() {
  Matrix t(4, 4);
  t << -1.0000, 3.6667, 4.3333, 0,
       1.7321, 1.6000, 0, 1.2500,
       0.2857, 0, 0.8333, 2.6667,
       0, 2.2500, 1.3333, 0.6667;
  return t;
}

inline void example2_matrices(Matrix& A1, Matrix& A2) {
  Matrix blkA = Matrix::Zero(4, 4), blkB = Matrix::Zero(4, 4);
  blkA.topLeftCorner(2, 2) = block_a11();
  blkA.bottomRightCorner(2, 2) = block_a22();
  blkB.topLeftCorner(2, 2) = block_b11();
  blkB.bottomRightCorner(2, 2) = block_b22();
  const Matrix T = example2_T();
  const Matrix Ti = T.inverse();
  A1 = Ti * blkA * T;
  A2 = Ti * blkB * T;
}

// The 4-decimal matrices as printed; they differ from the construction above
// by rounding of order 1e-4.
inline Matrix example2_a1_printed() {
  Matrix m(4, 4);
  m << 3.2423, -1.4176, -2.7298, 4.6267,
       -1.0366, -0.9812, -0.7598, -3.2319,
       2.0250, 0.8723, 0.0129, 4.0908,
       -0.9802, 1.5668, 1.2885, -1.2741;
  return m;
}
inline Matrix example2_a2_printed() {
  Matrix m(4, 4);
  m << 1.4104, 1.1252, -0.1052, 0.9652,
       -0.2045, -0.5965, -0.2415, -0.2683,
       0.4985, 0.7644, 0.1801, 0.4498,
       -0.3069, 0.4843, 0.4550, 0.0060;
  return m;
}
inline Matrix example2_E_printed() {
  Matrix m(4, 2);
  m << 0.3878, 0.8143,
       -0.2562, -0.1180,
       0.5371, 0.2878,
       -0.2094, -0.1772;
  return m;
}

// --- Example 3 (5x5) --------------------------------------------------------
inline Matrix example3_T() {
  Matrix t(5, 5);
  t << 0.125, 4.5, 0.6667, 2.75, 0,
       1.4142, 0.75, 1.625, 0, 0.7071,
       3, 0.8571, 0, 4.4286, 1,
       -1, 0, 2, 2.6667, -2,
       0, 1.7321, -1, 1.4142, 0.4286;
  return t;
}

inline void example3_matrices(Matrix& A1, Matrix& A2) {
  Matrix blkA = Matrix::Zero(5, 5), blkB = Matrix::Zero(5, 5);
  blkA.topLeftCorner(2, 2) = block_a11();
  blkA.bottomRightCorner(3, 3) = block_a33();
  blkB.topLeftCorner(2, 2) = block_b11();
  blkB.bottomRightCorner(3, 3) = block_b33();
  const Matrix T = example3_T();
  const Matrix Ti = T.inverse();
  A1 = Ti * blkA * T;
  A2 = Ti * blkB * T;
}

// --- subsystems and plants ---------------------------------------------------
inline tds::TimeDelaySystem subsystem5() {  // F = s^2 - s + 1 - s z
  return tds::TimeDelaySystem::retarded(block_a11(), block_b11());
}
inline tds::TimeDelaySystem subsystem6() {  // F = s^2 + 2 + z
  return tds::TimeDelaySystem::retarded(block_a22(), block_b22());
}
inline tds::TimeDelaySystem subsystem9() {  // F = s^3 - s^2 + 2s - 1 + s z
  return tds::TimeDelaySystem::retarded(block_a33(), block_b33());
}

inline tds::Plant plant10() {  // open loop (10): subsystem (5) at fixed h = 3.2
  tds::Plant p;
  p.A0 = block_a11();
  p.A1 = block_b11();
  p.h = 3.2;
  p.B = Vector(2);
  p.B << 1, 0;
  return p;
}

inline tds::Plant plant12() {  // open loop (12): subsystem (6) at fixed h = 3.2
  tds::Plant p;
  p.A0 = block_a22();
  p.A1 = block_b22();
  p.h = 3.2;
  p.B = Vector(2);
  p.B << 1, 0;
  return p;
}

}  // namespace paper
