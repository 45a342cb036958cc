// dykaf/linalg.cpp

#include "dykaf/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace dykaf {

namespace {

void check_same_shape(const DenseMatrix& a, const DenseMatrix& b,
                      const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionMismatch(std::string(op) + ": shapes " +
                            std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + " vs " +
                            std::to_string(b.rows()) + "x" +
                            std::to_string(b.cols()));
  }
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {
  if (rows == 0 || cols == 0) {
    throw DimensionMismatch("DenseMatrix: dimensions must be positive");
  }
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols,
                         std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows == 0 || cols == 0) {
    throw DimensionMismatch("DenseMatrix: dimensions must be positive");
  }
  if (data_.size() != rows * cols) {
    throw DimensionMismatch("DenseMatrix: data length " +
                            std::to_string(data_.size()) + " != " +
                            std::to_string(rows * cols));
  }
}

DenseMatrix::DenseMatrix(
    std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows.begin() == rows.end() ? 0 : rows.begin()->size();
  if (rows_ == 0 || cols_ == 0) {
    throw DimensionMismatch("DenseMatrix: dimensions must be positive");
  }
  data_.reserve(rows_ * cols_);
  for (const auto& row : rows) {
    if (row.size() != cols_) {
      throw DimensionMismatch("DenseMatrix: ragged initializer");
    }
    data_.insert(data_.end(), row.begin(), row.end());
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

bool DenseMatrix::all_finite() const {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

DenseTensor::DenseTensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)) {
  std::size_t total = 1;
  for (std::size_t n : shape_) {
    if (n == 0) throw DimensionMismatch("DenseTensor: extents must be positive");
    total *= n;
  }
  if (shape_.empty()) throw DimensionMismatch("DenseTensor: empty shape");
  data_.assign(total, 0.0);
}

DenseTensor::DenseTensor(std::vector<std::size_t> shape,
                         std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  std::size_t total = 1;
  for (std::size_t n : shape_) {
    if (n == 0) throw DimensionMismatch("DenseTensor: extents must be positive");
    total *= n;
  }
  if (shape_.empty()) throw DimensionMismatch("DenseTensor: empty shape");
  if (data_.size() != total) {
    throw DimensionMismatch("DenseTensor: data length != product of shape");
  }
}

// ---- elementary ops ---------------------------------------------------------

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionMismatch("matmul: " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + " * " +
                            std::to_string(b.rows()) + "x" +
                            std::to_string(b.cols()));
  }
  DenseMatrix c(a.rows(), b.cols());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  double* cd = c.data().data();
  // i-k-j order: row-major friendly and the summation over k is in fixed
  // ascending order for every output entry, so results are reproducible.
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ad[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bd + p * n;
      double* crow = cd + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  return c;
}

DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  }
  return t;
}

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
  check_same_shape(a, b, "add");
  DenseMatrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
  return c;
}

DenseMatrix sub(const DenseMatrix& a, const DenseMatrix& b) {
  check_same_shape(a, b, "sub");
  DenseMatrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
  return c;
}

DenseMatrix scale(const DenseMatrix& a, double alpha) {
  DenseMatrix c = a;
  for (double& x : c.data()) x *= alpha;
  return c;
}

DenseMatrix symmetrize(const DenseMatrix& a) {
  if (a.rows() != a.cols()) {
    throw DimensionMismatch("symmetrize: matrix not square");
  }
  DenseMatrix s(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      s(i, j) = 0.5 * (a(i, j) + a(j, i));
    }
  }
  return s;
}

double frobenius_norm(const DenseMatrix& a) {
  double sum = 0.0;
  for (double x : a.data()) sum += x * x;
  return std::sqrt(sum);
}

double frobenius_inner(const DenseMatrix& a, const DenseMatrix& b) {
  check_same_shape(a, b, "frobenius_inner");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a.data()[i] * b.data()[i];
  return sum;
}

double vector_norm(const std::vector<double>& x) {
  double sum = 0.0;
  for (double v : x) sum += v * v;
  return std::sqrt(sum);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DimensionMismatch("dot: length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

// ---- QR ----------------------------------------------------------------------

QrDecomposition qr(const DenseMatrix& a) {
  const std::size_t m = a.rows(), n = a.cols();
  if (m < n) throw DimensionMismatch("qr: needs rows >= cols");

  // Householder: store reflectors v_k in-place below the diagonal of work,
  // R in the upper triangle.
  DenseMatrix work = a;
  std::vector<std::vector<double>> reflectors(n);
  std::vector<double> betas(n, 0.0);

  for (std::size_t k = 0; k < n; ++k) {
    double xnorm = 0.0;
    for (std::size_t i = k; i < m; ++i) xnorm += work(i, k) * work(i, k);
    xnorm = std::sqrt(xnorm);

    std::vector<double> v(m - k, 0.0);
    double beta = 0.0;
    if (xnorm > 0.0) {
      const double x0 = work(k, k);
      const double alpha = (x0 >= 0.0) ? -xnorm : xnorm;
      for (std::size_t i = k; i < m; ++i) v[i - k] = work(i, k);
      v[0] -= alpha;
      double vtv = 0.0;
      for (double t : v) vtv += t * t;
      if (vtv > 0.0) {
        beta = 2.0 / vtv;
        // Apply H = I - beta v v^T to the trailing block.
        for (std::size_t j = k; j < n; ++j) {
          double s = 0.0;
          for (std::size_t i = k; i < m; ++i) s += v[i - k] * work(i, j);
          s *= beta;
          for (std::size_t i = k; i < m; ++i) work(i, j) -= s * v[i - k];
        }
      }
      work(k, k) = alpha;
      for (std::size_t i = k + 1; i < m; ++i) work(i, k) = 0.0;
    }
    reflectors[k] = std::move(v);
    betas[k] = beta;
  }

  // Thin Q: apply reflectors in reverse to the m x n identity block.
  DenseMatrix q(m, n);
  for (std::size_t j = 0; j < n; ++j) q(j, j) = 1.0;
  for (std::size_t k = n; k-- > 0;) {
    const auto& v = reflectors[k];
    const double beta = betas[k];
    if (beta == 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = k; i < m; ++i) s += v[i - k] * q(i, j);
      s *= beta;
      for (std::size_t i = k; i < m; ++i) q(i, j) -= s * v[i - k];
    }
  }

  DenseMatrix r(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) r(i, j) = work(i, j);
  }

  // Sign convention: nonnegative diagonal of R.
  for (std::size_t k = 0; k < n; ++k) {
    if (r(k, k) < 0.0) {
      for (std::size_t j = k; j < n; ++j) r(k, j) = -r(k, j);
      for (std::size_t i = 0; i < m; ++i) q(i, k) = -q(i, k);
    }
  }
  return {std::move(q), std::move(r)};
}

// ---- symmetric eigensolver ----------------------------------------------------

namespace {

// Deterministic sign fix: first component that is significantly nonzero
// becomes positive.
void fix_column_signs(DenseMatrix& q) {
  for (std::size_t j = 0; j < q.cols(); ++j) {
    double max_abs = 0.0;
    for (std::size_t i = 0; i < q.rows(); ++i) {
      max_abs = std::max(max_abs, std::abs(q(i, j)));
    }
    if (max_abs == 0.0) continue;
    const double threshold = 1e-12 * max_abs;
    for (std::size_t i = 0; i < q.rows(); ++i) {
      if (std::abs(q(i, j)) > threshold) {
        if (q(i, j) < 0.0) {
          for (std::size_t r = 0; r < q.rows(); ++r) q(r, j) = -q(r, j);
        }
        break;
      }
    }
  }
}

}  // namespace

SymEigDecomposition sym_eig(const DenseMatrix& a) {
  if (a.rows() != a.cols()) {
    throw DimensionMismatch("sym_eig: matrix not square");
  }
  const std::size_t n = a.rows();
  DenseMatrix b = symmetrize(a);
  DenseMatrix q = DenseMatrix::identity(n);

  const double total = frobenius_norm(b);  // rotation-invariant
  const int max_sweeps = 100;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t r = p + 1; r < n; ++r) off += 2.0 * b(p, r) * b(p, r);
    }
    off = std::sqrt(off);
    if (off <= 1e-12 * total || total == 0.0) break;

    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t r = p + 1; r < n; ++r) {
        const double apq = b(p, r);
        if (apq == 0.0) continue;
        const double theta = (b(r, r) - b(p, p)) / (2.0 * apq);
        double t;
        if (std::abs(theta) > 1e15) {
          t = 1.0 / (2.0 * theta);
        } else {
          t = ((theta >= 0.0) ? 1.0 : -1.0) /
              (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        }
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const double tau = s / (1.0 + c);

        const double app = b(p, p), aqq = b(r, r);
        b(p, p) = app - t * apq;
        b(r, r) = aqq + t * apq;
        b(p, r) = 0.0;
        b(r, p) = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (i == p || i == r) continue;
          const double aip = b(i, p), aiq = b(i, r);
          b(i, p) = aip - s * (aiq + tau * aip);
          b(p, i) = b(i, p);
          b(i, r) = aiq + s * (aip - tau * aiq);
          b(r, i) = b(i, r);
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double qip = q(i, p), qiq = q(i, r);
          q(i, p) = qip - s * (qiq + tau * qip);
          q(i, r) = qiq + s * (qip - tau * qiq);
        }
      }
    }
  }

  // Sort eigenvalues descending, carrying columns along (stable for ties).
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return b(x, x) > b(y, y);
  });

  SymEigDecomposition out;
  out.eigenvalues.resize(n);
  out.eigenvectors = DenseMatrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    out.eigenvalues[j] = b(order[j], order[j]);
    for (std::size_t i = 0; i < n; ++i) {
      out.eigenvectors(i, j) = q(i, order[j]);
    }
  }
  fix_column_signs(out.eigenvectors);
  return out;
}

// ---- power iteration -----------------------------------------------------------

SingularTriplet dominant_singular_triplet(const DenseMatrix& g, int max_iters,
                                          double tol,
                                          const std::vector<double>* start) {
  const std::size_t m = g.rows(), n = g.cols();
  const double gnorm = frobenius_norm(g);
  if (gnorm == 0.0 || !std::isfinite(gnorm)) {
    throw ZeroGradient("dominant_singular_triplet: zero or non-finite input");
  }

  std::vector<double> u;
  if (start != nullptr && start->size() == m && vector_norm(*start) > 0.0) {
    u = *start;
  } else {
    u.assign(m, 1.0);
  }
  {
    const double nu = vector_norm(u);
    for (double& x : u) x /= nu;
  }

  SingularTriplet out;
  out.u = u;
  out.v.assign(n, 0.0);
  std::size_t restart = 0;

  std::vector<double> w(n), z(m);
  for (int it = 0; it < max_iters; ++it) {
    // w = G^T u
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i) s += g(i, j) * u[i];
      w[j] = s;
    }
    double wn = vector_norm(w);
    if (wn <= 1e-300 * gnorm) {
      // Start vector (numerically) orthogonal to the row space; fall back to
      // the next canonical basis vector.
      if (restart >= m) break;
      u.assign(m, 0.0);
      u[restart++] = 1.0;
      continue;
    }
    for (double& x : w) x /= wn;
    // z = G w
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += g(i, j) * w[j];
      z[i] = s;
    }
    const double sigma = vector_norm(z);
    if (sigma <= 1e-300 * gnorm) {
      if (restart >= m) break;
      u.assign(m, 0.0);
      u[restart++] = 1.0;
      continue;
    }
    for (std::size_t i = 0; i < m; ++i) u[i] = z[i] / sigma;

    out.sigma = sigma;
    out.u = u;
    out.v = w;
    out.iterations = it + 1;

    // Residual of the second triplet equation, ||G^T u - sigma v||; the
    // first one is zero by construction.
    double resid = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i) s += g(i, j) * u[i];
      const double d = s - sigma * w[j];
      resid += d * d;
    }
    if (std::sqrt(resid) <= tol * gnorm) {
      out.converged = true;
      break;
    }
  }

  // Deterministic sign: first significant component of u positive.
  double max_abs = 0.0;
  for (double x : out.u) max_abs = std::max(max_abs, std::abs(x));
  if (max_abs > 0.0) {
    for (double x : out.u) {
      if (std::abs(x) > 1e-12 * max_abs) {
        if (x < 0.0) {
          for (double& t : out.u) t = -t;
          for (double& t : out.v) t = -t;
        }
        break;
      }
    }
  }
  return out;
}

namespace {

// y = G^T x and y = G x without temporaries.
void matvec_t(const DenseMatrix& g, const std::vector<double>& x,
              std::vector<double>& y) {
  const std::size_t m = g.rows(), n = g.cols();
  y.assign(n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* row = g.data().data() + i * n;
    for (std::size_t j = 0; j < n; ++j) y[j] += row[j] * xi;
  }
}

void matvec(const DenseMatrix& g, const std::vector<double>& x,
            std::vector<double>& y) {
  const std::size_t m = g.rows(), n = g.cols();
  y.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = g.data().data() + i * n;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += row[j] * x[j];
    y[i] = s;
  }
}

// Classical Gram-Schmidt, applied twice.
void reorthogonalize(std::vector<double>& w,
                     const std::vector<std::vector<double>>& basis) {
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& b : basis) {
      double proj = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) proj += b[i] * w[i];
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= proj * b[i];
    }
  }
}

void fix_triplet_sign(SingularTriplet& t) {
  double max_abs = 0.0;
  for (double x : t.u) max_abs = std::max(max_abs, std::abs(x));
  if (max_abs == 0.0) return;
  for (double x : t.u) {
    if (std::abs(x) > 1e-12 * max_abs) {
      if (x < 0.0) {
        for (double& y : t.u) y = -y;
        for (double& y : t.v) y = -y;
      }
      break;
    }
  }
}

}  // namespace

SingularTriplet dominant_singular_triplet_lanczos(
    const DenseMatrix& g, int max_iters, double tol,
    const std::vector<double>* start) {
  const std::size_t m = g.rows(), n = g.cols();
  const double gnorm = frobenius_norm(g);
  if (gnorm == 0.0 || !std::isfinite(gnorm)) {
    throw ZeroGradient("dominant_singular_triplet_lanczos: zero input");
  }

  std::vector<double> u1;
  if (start != nullptr && start->size() == m && vector_norm(*start) > 0.0) {
    u1 = *start;
  } else {
    u1.assign(m, 1.0);
  }
  {
    const double nu = vector_norm(u1);
    for (double& x : u1) x /= nu;
  }

  SingularTriplet best;
  best.u = u1;
  best.v.assign(n, 0.0);
  const std::size_t cycle_cap =
      std::min<std::size_t>(30, std::min(m, n));
  int iters_used = 0;
  std::size_t fallback = 0;

  std::vector<double> w(n), z(m), tmp_u(m), tmp_v(n);
  while (iters_used < max_iters && !best.converged) {
    std::vector<std::vector<double>> us{u1}, vs;
    std::vector<double> alphas, betas;  // betas[k] couples u_{k+1} to v_k

    // Rayleigh-Ritz extraction from the current bidiagonal; updates `best`
    // and the convergence flag.
    auto extract = [&]() {
      const std::size_t kk = alphas.size();
      if (kk == 0) return;
      DenseMatrix b(kk + 1, kk);
      for (std::size_t i = 0; i < kk; ++i) {
        b(i, i) = alphas[i];
        if (i < betas.size()) b(i + 1, i) = betas[i];
      }
      SymEigDecomposition d = sym_eig(matmul(transpose(b), b));
      // v = V y, then one application of G recovers (sigma, u).
      tmp_v.assign(n, 0.0);
      for (std::size_t j = 0; j < kk; ++j) {
        const double yj = d.eigenvectors(j, 0);
        for (std::size_t i = 0; i < n; ++i) tmp_v[i] += yj * vs[j][i];
      }
      const double nv = vector_norm(tmp_v);
      if (nv > 0.0) {
        for (double& x : tmp_v) x /= nv;
      }
      matvec(g, tmp_v, tmp_u);
      const double sigma = vector_norm(tmp_u);
      if (sigma > 0.0) {
        for (double& x : tmp_u) x /= sigma;
      }
      best.sigma = sigma;
      best.u = tmp_u;
      best.v = tmp_v;
      best.iterations = iters_used;

      matvec_t(g, tmp_u, w);
      double resid = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double dres = w[j] - sigma * tmp_v[j];
        resid += dres * dres;
      }
      if (std::sqrt(resid) <= tol * gnorm) best.converged = true;
    };

    for (std::size_t k = 0; k < cycle_cap && iters_used < max_iters; ++k) {
      ++iters_used;
      matvec_t(g, us[k], w);
      if (k > 0) {
        for (std::size_t j = 0; j < n; ++j) w[j] -= betas[k - 1] * vs[k - 1][j];
      }
      reorthogonalize(w, vs);
      const double alpha = vector_norm(w);
      if (alpha <= 1e-14 * gnorm) {
        // Row space exhausted from this start. Extract what the subspace
        // holds; restart from a canonical vector when it holds nothing.
        extract();
        if (alphas.empty() && fallback < m) {
          u1.assign(m, 0.0);
          u1[fallback++] = 1.0;
        }
        break;
      }
      for (double& x : w) x /= alpha;
      vs.push_back(w);
      alphas.push_back(alpha);

      matvec(g, vs[k], z);
      for (std::size_t i = 0; i < m; ++i) z[i] -= alpha * us[k][i];
      reorthogonalize(z, us);
      const double beta = vector_norm(z);
      const bool invariant = beta <= 1e-14 * gnorm;
      if (!invariant) {
        for (double& x : z) x /= beta;
        us.push_back(z);
        betas.push_back(beta);
      }

      const std::size_t kk = alphas.size();
      if (invariant || kk % 2 == 0 || kk == cycle_cap) {
        extract();
        if (best.converged || invariant) break;
      }
    }
    // Restart from the best current estimate.
    if (!best.converged && vector_norm(best.u) > 0.0 &&
        best.u.size() == u1.size() && best.sigma > 0.0) {
      u1 = best.u;
    }
  }

  fix_triplet_sign(best);
  return best;
}

// ---- Kronecker / vectorization ---------------------------------------------------

DenseMatrix kron(const DenseMatrix& a, const DenseMatrix& b,
                 std::size_t dim_cap) {
  const std::size_t rows = a.rows() * b.rows();
  const std::size_t cols = a.cols() * b.cols();
  if (rows > dim_cap || cols > dim_cap) {
    throw SizeCapExceeded("kron: result " + std::to_string(rows) + "x" +
                          std::to_string(cols) + " exceeds cap " +
                          std::to_string(dim_cap));
  }
  DenseMatrix out(rows, cols);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double aij = a(i, j);
      if (aij == 0.0) continue;
      for (std::size_t k = 0; k < b.rows(); ++k) {
        for (std::size_t l = 0; l < b.cols(); ++l) {
          out(i * b.rows() + k, j * b.cols() + l) = aij * b(k, l);
        }
      }
    }
  }
  return out;
}

std::vector<double> vec(const DenseMatrix& x) { return x.data(); }

DenseMatrix mat(const std::vector<double>& x, std::size_t m, std::size_t n) {
  if (x.size() != m * n) {
    throw DimensionMismatch("mat: length " + std::to_string(x.size()) +
                            " != " + std::to_string(m) + "*" +
                            std::to_string(n));
  }
  return DenseMatrix(m, n, x);
}

DenseMatrix rearrange(const DenseMatrix& a, std::size_t m1, std::size_t n1,
                      std::size_t m2, std::size_t n2) {
  if (a.rows() != m1 * m2 || a.cols() != n1 * n2) {
    throw DimensionMismatch("rearrange: input must be (m1*m2) x (n1*n2)");
  }
  DenseMatrix out(m1 * n1, m2 * n2);
  for (std::size_t i = 0; i < m1; ++i) {
    for (std::size_t j = 0; j < n1; ++j) {
      for (std::size_t k = 0; k < m2; ++k) {
        for (std::size_t l = 0; l < n2; ++l) {
          out(i * n1 + j, k * n2 + l) = a(i * m2 + k, j * n2 + l);
        }
      }
    }
  }
  return out;
}

// ---- elementwise ------------------------------------------------------------------

DenseMatrix hadamard(const DenseMatrix& a, const DenseMatrix& b) {
  check_same_shape(a, b, "hadamard");
  DenseMatrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] *= b.data()[i];
  return c;
}

DenseMatrix hadamard_pow(const DenseMatrix& a, double alpha) {
  DenseMatrix c = a;
  if (alpha == 1.0) return c;
  const bool integral = (alpha == std::floor(alpha));
  if (alpha == 0.5) {
    for (double& x : c.data()) {
      if (x < 0.0) throw NegativeBase("hadamard_pow: sqrt of negative entry");
      x = std::sqrt(x);
    }
    return c;
  }
  for (double& x : c.data()) {
    if (!integral && x < 0.0) {
      throw NegativeBase("hadamard_pow: fractional power of negative entry");
    }
    x = std::pow(x, alpha);
  }
  return c;
}

DenseMatrix hadamard_div(const DenseMatrix& a, const DenseMatrix& b) {
  check_same_shape(a, b, "hadamard_div");
  DenseMatrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double d = b.data()[i];
    if (std::abs(d) < kDivisionFloor) {
      throw DivisionUnderflow("hadamard_div: denominator below 1e-30");
    }
    c.data()[i] /= d;
  }
  return c;
}

// ---- tensor ops -------------------------------------------------------------------

namespace {

// Row-major strides, last index fastest.
std::vector<std::size_t> strides_of(const std::vector<std::size_t>& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t j = shape.size() - 1; j-- > 0;) {
    s[j] = s[j + 1] * shape[j + 1];
  }
  return s;
}

}  // namespace

DenseMatrix unfold(const DenseTensor& t, std::size_t mode) {
  const auto& shape = t.shape();
  const std::size_t d = shape.size();
  if (mode < 1 || mode > d) throw DimensionMismatch("unfold: invalid mode");
  const std::size_t k = mode - 1;

  std::size_t rest = 1;
  for (std::size_t j = 0; j < d; ++j) {
    if (j != k) rest *= shape[j];
  }
  const auto strides = strides_of(shape);

  // Column strides over the remaining modes, in increasing mode order,
  // row-major.
  std::vector<std::size_t> col_stride(d, 0);
  std::size_t acc = 1;
  for (std::size_t j = d; j-- > 0;) {
    if (j == k) continue;
    col_stride[j] = acc;
    acc *= shape[j];
  }

  DenseMatrix out(shape[k], rest);
  const auto& data = t.data();
  for (std::size_t lin = 0; lin < data.size(); ++lin) {
    std::size_t row = (lin / strides[k]) % shape[k];
    std::size_t col = 0;
    for (std::size_t j = 0; j < d; ++j) {
      if (j == k) continue;
      col += ((lin / strides[j]) % shape[j]) * col_stride[j];
    }
    out(row, col) = data[lin];
  }
  return out;
}

DenseTensor refold(const DenseMatrix& m, std::size_t mode,
                   const std::vector<std::size_t>& shape) {
  const std::size_t d = shape.size();
  if (mode < 1 || mode > d) throw DimensionMismatch("refold: invalid mode");
  const std::size_t k = mode - 1;
  std::size_t rest = 1;
  for (std::size_t j = 0; j < d; ++j) {
    if (j != k) rest *= shape[j];
  }
  if (m.rows() != shape[k] || m.cols() != rest) {
    throw DimensionMismatch("refold: matrix shape does not match target");
  }
  const auto strides = strides_of(shape);
  std::vector<std::size_t> col_stride(d, 0);
  std::size_t acc = 1;
  for (std::size_t j = d; j-- > 0;) {
    if (j == k) continue;
    col_stride[j] = acc;
    acc *= shape[j];
  }

  DenseTensor out(shape);
  auto& data = out.data();
  for (std::size_t lin = 0; lin < data.size(); ++lin) {
    std::size_t row = (lin / strides[k]) % shape[k];
    std::size_t col = 0;
    for (std::size_t j = 0; j < d; ++j) {
      if (j == k) continue;
      col += ((lin / strides[j]) % shape[j]) * col_stride[j];
    }
    data[lin] = m(row, col);
  }
  return out;
}

DenseTensor ttm(const DenseTensor& t, const DenseMatrix& a, std::size_t mode) {
  const auto& shape = t.shape();
  const std::size_t d = shape.size();
  if (mode < 1 || mode > d) throw DimensionMismatch("ttm: invalid mode");
  const std::size_t k = mode - 1;
  if (a.cols() != shape[k]) {
    throw DimensionMismatch("ttm: matrix cols != tensor extent at mode");
  }

  std::vector<std::size_t> out_shape = shape;
  out_shape[k] = a.rows();
  DenseTensor out(out_shape);

  const auto in_strides = strides_of(shape);
  const auto out_strides = strides_of(out_shape);
  const std::size_t nk = shape[k];

  // Iterate over all positions with mode k at index 0, then contract.
  const std::size_t total = t.size() / nk;
  const auto& src = t.data();
  auto& dst = out.data();
  for (std::size_t slot = 0; slot < total; ++slot) {
    // Decode the (d-1)-dim slot into a base linear offset for both tensors.
    std::size_t rem = slot;
    std::size_t in_base = 0, out_base = 0;
    for (std::size_t j = 0; j < d; ++j) {
      if (j == k) continue;
      // Row-major over the remaining modes in increasing order.
      std::size_t span = 1;
      for (std::size_t j2 = j + 1; j2 < d; ++j2) {
        if (j2 != k) span *= shape[j2];
      }
      const std::size_t idx = rem / span;
      rem %= span;
      in_base += idx * in_strides[j];
      out_base += idx * out_strides[j];
    }
    for (std::size_t i = 0; i < a.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < nk; ++j) {
        s += a(i, j) * src[in_base + j * in_strides[k]];
      }
      dst[out_base + i * out_strides[k]] = s;
    }
  }
  return out;
}

}  // namespace dykaf
