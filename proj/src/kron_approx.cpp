// dykaf/kron_approx.cpp

#include "dykaf/kron_approx.hpp"

#include <cmath>
#include <string>

namespace dykaf {

namespace {

void check_column_norms(const DenseMatrix& a, const char* who) {
  for (std::size_t j = 0; j < a.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, j) * a(i, j);
    if (std::sqrt(s) < kNormFloor) {
      throw RankCollapse(std::string(who) + ": degenerate column " +
                         std::to_string(j));
    }
  }
}

}  // namespace

LowRankFactorization proj_split_step(const LowRankFactorization& current,
                                     const DenseMatrix& delta) {
  const DenseMatrix& u = current.u;
  const DenseMatrix& s = current.s;
  const DenseMatrix& v = current.v;
  if (delta.rows() != u.rows() || delta.cols() != v.rows()) {
    throw DimensionMismatch("proj_split_step: delta shape");
  }

  // Uh = U S + dF V
  DenseMatrix uh = add(matmul(u, s), matmul(delta, v));
  check_column_norms(uh, "proj_split_step/U");
  auto [u_next, s_hat] = qr(uh);
  (void)s_hat;

  // Vh = V S^T + dF^T U
  DenseMatrix vh = add(matmul(v, transpose(s)), matmul(transpose(delta), u));
  check_column_norms(vh, "proj_split_step/V");
  auto [v_next, s_tilde] = qr(vh);
  (void)s_tilde;

  // S+ = U+^T (U S V^T + dF) V+, expanded so the dense approximation is
  // never formed: (U+^T U) S (V^T V+) + U+^T dF V+.
  DenseMatrix core = matmul(matmul(matmul(transpose(u_next), u), s),
                            matmul(transpose(v), v_next));
  core = add(core, matmul(transpose(u_next), matmul(delta, v_next)));

  return {std::move(u_next), std::move(core), std::move(v_next)};
}

Rank1Factorization proj_split_step(const Rank1Factorization& current,
                                   const DenseMatrix& delta) {
  const std::size_t m = current.u.size(), n = current.v.size();
  if (delta.rows() != m || delta.cols() != n) {
    throw DimensionMismatch("proj_split_step: delta shape");
  }

  // uh = u s + dF v
  std::vector<double> uh(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double acc = current.u[i] * current.s;
    for (std::size_t j = 0; j < n; ++j) acc += delta(i, j) * current.v[j];
    uh[i] = acc;
  }
  const double un = vector_norm(uh);
  if (un < kNormFloor) throw RankCollapse("proj_split_step: zero u iterate");
  for (double& x : uh) x /= un;

  // vh = v s + dF^T u
  std::vector<double> vh(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double acc = current.v[j] * current.s;
    for (std::size_t i = 0; i < m; ++i) acc += delta(i, j) * current.u[i];
    vh[j] = acc;
  }
  const double vn = vector_norm(vh);
  if (vn < kNormFloor) throw RankCollapse("proj_split_step: zero v iterate");
  for (double& x : vh) x /= vn;

  // s+ = u+^T (u s v^T + dF) v+
  double s_next = dot(uh, current.u) * current.s * dot(current.v, vh);
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += delta(i, j) * vh[j];
    s_next += uh[i] * acc;
  }
  return {std::move(uh), std::move(vh), s_next};
}

KroneckerFactorPair kron_proj_split(const KroneckerFactorPair& pair,
                                    const DenseMatrix& g) {
  const DenseMatrix& l = pair.l;
  const DenseMatrix& r = pair.r;
  if (g.rows() != l.rows() || g.cols() != r.rows()) {
    throw DimensionMismatch("kron_proj_split: gradient shape");
  }
  const double ln = frobenius_norm(l);
  const double rn = frobenius_norm(r);
  if (ln < kNormFloor || rn < kNormFloor) {
    throw ZeroFactor("kron_proj_split: zero factor norm");
  }

  // Lh = L ||R|| + G (R / ||R||) G^T
  DenseMatrix lh = add(scale(l, rn),
                       matmul(matmul(g, scale(r, 1.0 / rn)), transpose(g)));
  // Rh = R ||L|| + G^T (L / ||L||) G
  DenseMatrix rh = add(scale(r, ln),
                       matmul(matmul(transpose(g), scale(l, 1.0 / ln)), g));

  const double lhn = frobenius_norm(lh);
  const double rhn = frobenius_norm(rh);
  if (lhn < kNormFloor || rhn < kNormFloor) {
    throw ZeroFactor("kron_proj_split: updated factor collapsed");
  }
  DenseMatrix l_next = scale(lh, 1.0 / lhn);
  DenseMatrix r_next = scale(rh, 1.0 / rhn);

  const double s = frobenius_inner(l, l_next) * frobenius_inner(r, r_next) +
                   frobenius_inner(l_next, matmul(matmul(g, r_next), transpose(g)));
  if (s <= kSFloor) {
    throw NonPositiveS("kron_proj_split: core weight " + std::to_string(s));
  }
  const double root = std::sqrt(s);
  return {symmetrize(scale(l_next, root)), symmetrize(scale(r_next, root))};
}

KroneckerFactorList kron_proj_split_tensor(const KroneckerFactorList& list,
                                           const DenseTensor& g) {
  const std::size_t d = list.factors.size();
  if (d < 2) throw DimensionMismatch("kron_proj_split_tensor: needs d >= 2");
  if (g.order() != d) {
    throw DimensionMismatch("kron_proj_split_tensor: tensor order != d");
  }
  for (std::size_t k = 0; k < d; ++k) {
    const DenseMatrix& f = list.factors[k];
    if (f.rows() != f.cols() || f.rows() != g.shape()[k]) {
      throw DimensionMismatch("kron_proj_split_tensor: factor shape");
    }
  }

  std::vector<double> norms(d);
  for (std::size_t k = 0; k < d; ++k) {
    norms[k] = frobenius_norm(list.factors[k]);
    if (norms[k] < kNormFloor) {
      throw ZeroFactor("kron_proj_split_tensor: zero factor norm");
    }
  }

  std::vector<DenseMatrix> next;
  next.reserve(d);
  for (std::size_t k = 0; k < d; ++k) {
    double norm_k = 1.0;
    for (std::size_t j = 0; j < d; ++j) {
      if (j != k) norm_k *= norms[j];
    }
    // G^(k) (kron of the other factors) G^(k)T, evaluated by contracting
    // every other mode of G with its factor first.
    DenseTensor z = g;
    for (std::size_t j = 0; j < d; ++j) {
      if (j != k) z = ttm(z, list.factors[j], j + 1);
    }
    DenseMatrix gram = matmul(unfold(g, k + 1), transpose(unfold(z, k + 1)));

    DenseMatrix lh = add(scale(list.factors[k], norm_k * norm_k), gram);
    const double lhn = frobenius_norm(lh);
    if (lhn < kNormFloor) {
      throw ZeroFactor("kron_proj_split_tensor: updated factor collapsed");
    }
    next.push_back(scale(lh, 1.0 / lhn));
  }

  // S = prod_k <L_k, L_k+> + vec(G)^T (kron of L_k+) vec(G)
  double s = 1.0;
  for (std::size_t k = 0; k < d; ++k) {
    s *= frobenius_inner(list.factors[k], next[k]);
  }
  DenseTensor z = g;
  for (std::size_t k = 0; k < d; ++k) z = ttm(z, next[k], k + 1);
  double quad = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) quad += g.data()[i] * z.data()[i];
  s += quad;

  if (s <= kSFloor) {
    throw NonPositiveS("kron_proj_split_tensor: core weight " +
                       std::to_string(s));
  }
  const double root = std::pow(s, 1.0 / static_cast<double>(d));
  KroneckerFactorList out;
  out.factors.reserve(d);
  for (std::size_t k = 0; k < d; ++k) {
    out.factors.push_back(symmetrize(scale(next[k], root)));
  }
  return out;
}

KroneckerFactorPair init_from_gradient(const DenseMatrix& g, int max_iters,
                                       double tol) {
  if (frobenius_norm(g) < kNormFloor) {
    throw ZeroGradient("init_from_gradient: zero gradient");
  }
  SingularTriplet t = dominant_singular_triplet(g, max_iters, tol);
  const std::size_t m = g.rows(), n = g.cols();
  DenseMatrix l(m, m), r(n, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) l(i, j) = t.sigma * t.u[i] * t.u[j];
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) r(i, j) = t.sigma * t.v[i] * t.v[j];
  }
  return {std::move(l), std::move(r)};
}

NkpResult nkp_best(const DenseMatrix& f, std::size_t m, std::size_t n,
                   int max_iters, double tol,
                   const std::vector<double>* warm_start) {
  if (f.rows() != m * n || f.cols() != m * n) {
    throw DimensionMismatch("nkp_best: input must be mn x mn");
  }
  DenseMatrix r = rearrange(f, m, m, n, n);  // m^2 x n^2
  // The rearranged tracking problems can have slim spectral gaps, where
  // plain power iteration crawls; the Lanczos solver reaches the same
  // triplet in a fraction of the matvecs.
  SingularTriplet t =
      dominant_singular_triplet_lanczos(r, max_iters, tol, warm_start);

  const double root = std::sqrt(t.sigma);
  DenseMatrix lf = scale(mat(t.u, m, m), root);
  DenseMatrix rf = scale(mat(t.v, n, n), root);

  // Residual in rearranged space (the rearrangement is an isometry).
  double resid = 0.0;
  for (std::size_t p = 0; p < m * m; ++p) {
    for (std::size_t q = 0; q < n * n; ++q) {
      const double d = r(p, q) - t.sigma * t.u[p] * t.v[q];
      resid += d * d;
    }
  }
  return {{std::move(lf), std::move(rf)}, std::sqrt(resid)};
}

KroneckerFactorPair shampoo_factor_update(const KroneckerFactorPair& pair,
                                          const DenseMatrix& g, double beta) {
  if (g.rows() != pair.l.rows() || g.cols() != pair.r.rows()) {
    throw DimensionMismatch("shampoo_factor_update: gradient shape");
  }
  const double gw = (beta == 1.0) ? 1.0 : (1.0 - beta);
  DenseMatrix l = add(scale(pair.l, beta), scale(matmul(g, transpose(g)), gw));
  DenseMatrix r = add(scale(pair.r, beta), scale(matmul(transpose(g), g), gw));
  return {std::move(l), std::move(r)};
}

DenseMatrix shampoo_estimate(const KroneckerFactorPair& pair,
                             std::size_t dim_cap) {
  const std::size_t m = pair.l.rows(), n = pair.r.rows();
  if (m * n > dim_cap) {
    throw SizeCapExceeded("shampoo_estimate: mn exceeds cap");
  }
  auto half = [](const DenseMatrix& a) {
    SymEigDecomposition d = sym_eig(a);
    const std::size_t k = a.rows();
    DenseMatrix scaled = d.eigenvectors;
    for (std::size_t j = 0; j < k; ++j) {
      const double root = std::sqrt(std::max(0.0, d.eigenvalues[j]));
      for (std::size_t i = 0; i < k; ++i) scaled(i, j) *= root;
    }
    return matmul(scaled, transpose(d.eigenvectors));
  };
  return kron(half(pair.l), half(pair.r), dim_cap);
}

}  // namespace dykaf
