// dykaf/optim.hpp
//
// Optimizer steps over matrix-shaped parameters: the DyKAF step with both
// second-moment modes, plus SOAP, Shampoo and AdamW baselines, and the
// orthogonal-iteration eigenbasis refresh.

#pragma once

#include <optional>

#include "dykaf/kron_approx.hpp"
#include "dykaf/linalg.hpp"

namespace dykaf {

struct Hyperparams {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long precond_frequency = 10;
  bool rank1_second_moment = false;
  double weight_decay = 0.0;
  bool bias_correction = true;
  double shampoo_matrix_eps = 1e-6;
  /// Decay applied to the Kronecker factors before the projector-splitting
  /// update; defaults to beta1 as in the DyKAF listing.
  std::optional<double> factor_beta;
  /// Optional EMA decay for the rank-1 second moment; the listing uses raw
  /// accumulation (no decay).
  std::optional<double> second_moment_decay;
  /// Shampoo factor recursion: 1 = plain accumulation L + G G^T, < 1 = EMA.
  double shampoo_factor_beta = 1.0;

  double effective_factor_beta() const { return factor_beta.value_or(beta1); }

  /// Throws Error when any field is out of range. Betas live in [0, 1);
  /// zero is allowed so the momentum-free reductions in the step examples
  /// are expressible.
  void validate() const;
};

/// Per-parameter DyKAF state. In rank-1 mode the second moment is the
/// nonnegative rank-1 product sm.u * sm.s * sm.v^T (v is unused then);
/// in full mode `v` holds the elementwise moment and `sm` is unused.
struct DyKafParamState {
  long step = 0;
  DenseMatrix m;
  DenseMatrix v;
  Rank1Factorization sm;
  bool rank1 = false;
  KroneckerFactorPair factors;
  DenseMatrix q_l;
  DenseMatrix q_r;
};

struct DyKafStepResult {
  DyKafParamState state;
  DenseMatrix w;
};

struct AdamWState {
  long step = 0;
  DenseMatrix m;
  DenseMatrix v;
};

struct AdamWStepResult {
  AdamWState state;
  DenseMatrix w;
};

struct ShampooState {
  long step = 0;
  KroneckerFactorPair factors;
};

struct ShampooStepResult {
  ShampooState state;
  DenseMatrix w;
};

struct SoapState {
  long step = 0;
  DenseMatrix m;
  DenseMatrix v;
  KroneckerFactorPair factors;
  DenseMatrix q_l;
  DenseMatrix q_r;
};

struct SoapStepResult {
  SoapState state;
  DenseMatrix w;
};

/// One orthogonal-iteration refinement of the eigenbasis: Q+ = QR(P Q).Q.
/// Falls back to the full eigendecomposition of p when P Q has a
/// degenerate column.
DenseMatrix eigenvectors_refresh(const DenseMatrix& p, const DenseMatrix& q);

/// DyKAF state from the first gradient: factors are the exact nearest
/// Kronecker product of vec(g1) vec(g1)^T plus a tiny diagonal damping
/// (1e-12 sigma1) so the eigenbases of the rank-1 factors are well
/// defined; Q_L, Q_R are their eigenvector matrices.
DyKafParamState dykaf_init(const DenseMatrix& g1, const Hyperparams& hp);

/// One DyKAF step: rotate the gradient into the factor eigenbasis, run the
/// Adam-style update there, rotate back, apply the decoupled weight decay,
/// advance the Kronecker factors by projector splitting, and refresh the
/// eigenbases every hp.precond_frequency steps.
DyKafStepResult dykaf_step(const DyKafParamState& state, const DenseMatrix& w,
                           const DenseMatrix& g, const Hyperparams& hp);

AdamWState adamw_init(std::size_t m, std::size_t n);
AdamWStepResult adamw_step(const AdamWState& state, const DenseMatrix& w,
                           const DenseMatrix& g, const Hyperparams& hp);

ShampooState shampoo_init(std::size_t m, std::size_t n, const Hyperparams& hp);

/// The Shampoo preconditioned gradient L^{-1/4} G R^{-1/4}, with the
/// inverse fourth roots taken through sym_eig and eigenvalues clamped at
/// eig_floor.
DenseMatrix shampoo_precondition(const KroneckerFactorPair& pair,
                                 const DenseMatrix& g, double eig_floor);

ShampooStepResult shampoo_step(const ShampooState& state, const DenseMatrix& w,
                               const DenseMatrix& g, const Hyperparams& hp);

SoapState soap_init(std::size_t m, std::size_t n, const Hyperparams& hp);
SoapStepResult soap_step(const SoapState& state, const DenseMatrix& w,
                         const DenseMatrix& g, const Hyperparams& hp);

}  // namespace dykaf
