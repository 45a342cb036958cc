// dykaf/linalg.hpp
//
// Dense real linear-algebra kernels used by the rest of the library.
// Everything is plain row-major double storage, deterministic loop orders,
// no external numerical dependencies.

#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "dykaf/errors.hpp"

namespace dykaf {

/// Row-major dense matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;

  /// Zero-filled rows x cols matrix. Dimensions must be positive.
  DenseMatrix(std::size_t rows, std::size_t cols);

  /// Takes ownership of `data`, which must have rows*cols entries.
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  /// Literal construction: DenseMatrix{{1, 2}, {3, 4}}.
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const DenseMatrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  /// True when every entry is finite.
  bool all_finite() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Row-major dense tensor (last index fastest).
class DenseTensor {
 public:
  DenseTensor() = default;

  /// Zero-filled tensor with the given positive extents.
  explicit DenseTensor(std::vector<std::size_t> shape);
  DenseTensor(std::vector<std::size_t> shape, std::vector<double> data);

  std::size_t order() const { return shape_.size(); }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// Eigendecomposition of a symmetric matrix: A = Q diag(lambda) Q^T with
/// eigenvalues descending and deterministic eigenvector signs.
struct SymEigDecomposition {
  std::vector<double> eigenvalues;
  DenseMatrix eigenvectors;  // columns
};

/// Thin QR factorization, Q with orthonormal columns, R upper triangular
/// with nonnegative diagonal.
struct QrDecomposition {
  DenseMatrix q;
  DenseMatrix r;
};

/// Dominant singular triplet from power iteration. `converged` is false
/// when the iteration hit max_iters first; the best iterate is still
/// returned.
struct SingularTriplet {
  double sigma = 0.0;
  std::vector<double> u;
  std::vector<double> v;
  bool converged = false;
  int iterations = 0;
};

// ---- elementary matrix ops -------------------------------------------------

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix transpose(const DenseMatrix& a);
DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix sub(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix scale(const DenseMatrix& a, double alpha);
/// (A + A^T) / 2.
DenseMatrix symmetrize(const DenseMatrix& a);

double frobenius_norm(const DenseMatrix& a);
double frobenius_inner(const DenseMatrix& a, const DenseMatrix& b);
double vector_norm(const std::vector<double>& x);
double dot(const std::vector<double>& a, const std::vector<double>& b);

// ---- factorizations ----------------------------------------------------------

/// Householder QR of an m x n matrix with m >= n. Rank-deficient input
/// still yields a valid factorization (zero diagonal in R).
QrDecomposition qr(const DenseMatrix& a);

/// Cyclic Jacobi eigensolver; the input is symmetrized internally.
/// Converges to off-diagonal norm <= 1e-12 * ||A|| within 100 sweeps at the
/// sizes this library targets (<= 1024).
SymEigDecomposition sym_eig(const DenseMatrix& a);

/// Power iteration for the dominant singular triplet of g, deterministic
/// all-ones start (or `start` if given, e.g. to warm-start a tracking loop).
SingularTriplet dominant_singular_triplet(const DenseMatrix& g,
                                          int max_iters = 1000,
                                          double tol = 1e-12,
                                          const std::vector<double>* start = nullptr);

/// Golub-Kahan (Lanczos bidiagonalization) solver for the same triplet,
/// with full reorthogonalization and deterministic restarts. Much faster
/// than plain power iteration when the spectral gap is slim; used by the
/// dense tracking oracles. Same start/tolerance conventions.
SingularTriplet dominant_singular_triplet_lanczos(
    const DenseMatrix& g, int max_iters = 1000, double tol = 1e-12,
    const std::vector<double>* start = nullptr);

// ---- Kronecker / vectorization toolbox -------------------------------------

inline constexpr std::size_t kKronDimCap = 8192;

/// Kronecker product. (A (x) B)[i*p+k, j*q+l] = A[i,j] * B[k,l] for B of
/// shape p x q; consistent with row-major vec: vec(B X C^T) = (B (x) C) vec(X).
DenseMatrix kron(const DenseMatrix& a, const DenseMatrix& b,
                 std::size_t dim_cap = kKronDimCap);

/// Row-major vectorization (stacks rows).
std::vector<double> vec(const DenseMatrix& x);
/// Inverse of vec: packs a length m*n vector into an m x n matrix.
DenseMatrix mat(const std::vector<double>& x, std::size_t m, std::size_t n);

/// Rearrangement operator: maps an (m1*m2) x (n1*n2) matrix A to the
/// (m1*n1) x (m2*n2) matrix with
///   out[i*n1+j, k*n2+l] = A[i*m2+k, j*n2+l],
/// the row-major block rearrangement for which
/// rearrange(B (x) C, ...) = vec(B) vec(C)^T holds exactly.
DenseMatrix rearrange(const DenseMatrix& a, std::size_t m1, std::size_t n1,
                      std::size_t m2, std::size_t n2);

// ---- elementwise ops --------------------------------------------------------

inline constexpr double kDivisionFloor = 1e-30;

DenseMatrix hadamard(const DenseMatrix& a, const DenseMatrix& b);
/// Elementwise power. Non-integer alpha requires nonnegative entries;
/// alpha == 0.5 maps to sqrt for exactness.
DenseMatrix hadamard_pow(const DenseMatrix& a, double alpha);
/// Elementwise division; denominators with |b| < kDivisionFloor raise
/// DivisionUnderflow.
DenseMatrix hadamard_div(const DenseMatrix& a, const DenseMatrix& b);

// ---- tensor ops --------------------------------------------------------------

/// Mode-k unfolding (k is 1-based). Result is n_k x prod_{j != k} n_j with
/// columns ordered by the remaining modes in increasing index order,
/// row-major (last one fastest).
DenseMatrix unfold(const DenseTensor& t, std::size_t mode);
/// Inverse of unfold for the same mode and shape.
DenseTensor refold(const DenseMatrix& m, std::size_t mode,
                   const std::vector<std::size_t>& shape);
/// Mode-k tensor-times-matrix: contracts mode k (1-based) of t with the
/// columns of a, i.e. out(..., i, ...) = sum_j a[i,j] * t(..., j, ...).
DenseTensor ttm(const DenseTensor& t, const DenseMatrix& a, std::size_t mode);

}  // namespace dykaf
