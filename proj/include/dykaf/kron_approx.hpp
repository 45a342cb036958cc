// dykaf/kron_approx.hpp
//
// Dynamical low-rank machinery for maintaining Kronecker-product
// approximations of the empirical Fisher matrix: the generic discrete
// projector-splitting step, its Kronecker-structured matrix and tensor
// variants, the power-method initialization, and the brute-force
// nearest-Kronecker-product oracle.

#pragma once

#include <cstddef>
#include <vector>

#include "dykaf/linalg.hpp"

namespace dykaf {

/// Rank-1 factorization u * s * v^T with unit u, v.
struct Rank1Factorization {
  std::vector<double> u;
  std::vector<double> v;
  double s = 0.0;
};

/// Low-rank factorization U S V^T. U, V have orthonormal columns; S is
/// r x r, invertible but not necessarily diagonal.
struct LowRankFactorization {
  DenseMatrix u;  // m x r
  DenseMatrix s;  // r x r
  DenseMatrix v;  // n x r
};

/// The pair (L, R) approximating an mn x mn Fisher matrix as L (x) R.
/// After any projector-splitting step both factors carry S^{1/2}, so
/// ||L|| == ||R||.
struct KroneckerFactorPair {
  DenseMatrix l;  // m x m
  DenseMatrix r;  // n x n
};

/// d-way generalization: the k-th factor is n_k x n_k.
struct KroneckerFactorList {
  std::vector<DenseMatrix> factors;
};

/// Result of the nearest-Kronecker-product oracle.
struct NkpResult {
  KroneckerFactorPair pair;
  double residual = 0.0;
};

inline constexpr double kSFloor = 1e-30;
inline constexpr double kNormFloor = 1e-300;

/// One discrete projector-splitting step: advances the low-rank
/// factorization of F to approximate F + delta. Never materializes the
/// dense m x n approximation. Throws RankCollapse when a QR input column
/// degenerates to (near) zero norm.
LowRankFactorization proj_split_step(const LowRankFactorization& current,
                                     const DenseMatrix& delta);

/// Rank-1 specialization; the two QR factorizations reduce to vector
/// normalizations.
Rank1Factorization proj_split_step(const Rank1Factorization& current,
                                   const DenseMatrix& delta);

/// Kronecker-structured projector-splitting step for the Fisher matrix:
///   Lh = L ||R|| + G (R / ||R||) G^T
///   Rh = R ||L|| + G^T (L / ||L||) G
///   L+ = Lh / ||Lh||,  R+ = Rh / ||Rh||
///   S  = <L, L+> <R, R+> + <L+, G R+ G^T>
/// and returns (S^{1/2} L+, S^{1/2} R+), symmetrized.
/// Throws ZeroFactor for (near) zero input factors and NonPositiveS when
/// the core weight falls below its positivity floor.
KroneckerFactorPair kron_proj_split(const KroneckerFactorPair& pair,
                                    const DenseMatrix& g);

/// d-way variant. The Kronecker quadratic forms are evaluated through
/// successive mode-wise contractions; the full Kronecker product is never
/// materialized. Reduces exactly to kron_proj_split at d == 2.
KroneckerFactorList kron_proj_split_tensor(const KroneckerFactorList& list,
                                           const DenseTensor& g);

/// Best Kronecker initialization from the first gradient: the exact
/// nearest Kronecker product of vec(G) vec(G)^T, namely
/// L = sigma1 u1 u1^T, R = sigma1 v1 v1^T.
KroneckerFactorPair init_from_gradient(const DenseMatrix& g,
                                       int max_iters = 20000,
                                       double tol = 1e-13);

/// Brute-force nearest-Kronecker-product oracle for an mn x mn matrix:
/// rank-1 approximation of the rearranged matrix with the balanced norm
/// split between L and R. Optional warm start for the power iteration
/// (used when tracking a slowly-varying matrix).
NkpResult nkp_best(const DenseMatrix& f, std::size_t m, std::size_t n,
                   int max_iters = 20000, double tol = 1e-13,
                   const std::vector<double>* warm_start = nullptr);

/// Shampoo factor update. beta == 1 gives the plain accumulation
/// L+ = L + G G^T, R+ = R + G^T G; beta < 1 gives the EMA form
/// L+ = beta L + (1 - beta) G G^T.
KroneckerFactorPair shampoo_factor_update(const KroneckerFactorPair& pair,
                                          const DenseMatrix& g, double beta);

/// Dense Shampoo estimate L^{1/2} (x) R^{1/2} via sym_eig, eigenvalues
/// clamped at zero. Small sizes only (oracle / experiment use).
DenseMatrix shampoo_estimate(const KroneckerFactorPair& pair,
                             std::size_t dim_cap = kKronDimCap);

}  // namespace dykaf
