#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dykaf/linalg.hpp"
#include "dykaf/rng.hpp"
#include "test_util.hpp"

using namespace dykaf;
using namespace dykaf::testutil;

TEST_CASE("matmul basics") {
  Rng rng(1);
  DenseMatrix a = random_matrix(rng, 3, 3);
  CHECK(max_abs_diff(matmul(DenseMatrix::identity(3), a), a) == 0.0);

  DenseMatrix b{{1, 2}, {3, 4}};
  DenseMatrix x{{0}, {1}};
  DenseMatrix y = matmul(b, x);
  CHECK(y(0, 0) == doctest::Approx(2).epsilon(1e-15));
  CHECK(y(1, 0) == doctest::Approx(4).epsilon(1e-15));

  CHECK_THROWS_AS(matmul(b, DenseMatrix(3, 2)), DimensionMismatch);
}

TEST_CASE("matmul matches naive triple loop") {
  Rng rng(2);
  DenseMatrix a = random_matrix(rng, 5, 3);
  DenseMatrix b = random_matrix(rng, 3, 4);
  DenseMatrix c = matmul(a, b);
  DenseMatrix ref(5, 4);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 3; ++k) s += a(i, k) * b(k, j);
      ref(i, j) = s;
    }
  }
  CHECK(max_abs_diff(c, ref) <= 1e-12);
}

TEST_CASE("frobenius norm and inner product") {
  CHECK(frobenius_norm(DenseMatrix::identity(2)) ==
        doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));

  Rng rng(3);
  DenseMatrix a = random_matrix(rng, 4, 4);
  CHECK(rel_err(frobenius_inner(a, a),
                frobenius_norm(a) * frobenius_norm(a)) <= 1e-13);

  double ref = 0.0;
  for (double x : a.data()) ref += x * x;
  CHECK(std::abs(frobenius_norm(a) - std::sqrt(ref)) <= 1e-13);

  CHECK_THROWS_AS(frobenius_inner(a, DenseMatrix(2, 2)), DimensionMismatch);
}

TEST_CASE("qr: normalization of a single column") {
  DenseMatrix a{{3}, {4}};
  auto [q, r] = qr(a);
  CHECK(q(0, 0) == doctest::Approx(0.6).epsilon(1e-14));
  CHECK(q(1, 0) == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(r(0, 0) == doctest::Approx(5.0).epsilon(1e-14));
}

TEST_CASE("qr: orthogonal input reproduces itself up to sign fixing") {
  Rng rng(4);
  auto [q0, r0] = qr(random_matrix(rng, 5, 5));
  auto [q, r] = qr(q0);
  // R must be the identity and Q must equal Q0 (signs already fixed by the
  // nonnegative-diagonal convention on both factorizations).
  CHECK(max_abs_diff(r, DenseMatrix::identity(5)) <= 1e-12);
  CHECK(max_abs_diff(q, q0) <= 1e-12);
}

TEST_CASE("qr: reconstruction and orthogonality on random input") {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    DenseMatrix a = random_matrix(rng, 6, 4);
    auto [q, r] = qr(a);
    DenseMatrix qtq = matmul(transpose(q), q);
    CHECK(max_abs_diff(qtq, DenseMatrix::identity(4)) <= 1e-12);
    CHECK(frobenius_norm(sub(a, matmul(q, r))) <= 1e-12 * frobenius_norm(a));
    for (std::size_t k = 0; k < 4; ++k) CHECK(r(k, k) >= 0.0);
    for (std::size_t i = 1; i < 4; ++i) {
      for (std::size_t j = 0; j < i; ++j) CHECK(r(i, j) == 0.0);
    }
  }
}

TEST_CASE("qr: rank-deficient input still factorizes") {
  DenseMatrix a(4, 3);
  for (std::size_t i = 0; i < 4; ++i) a(i, 0) = 1.0 + double(i);
  // columns 1, 2 are zero
  auto [q, r] = qr(a);
  CHECK(frobenius_norm(sub(a, matmul(q, r))) <= 1e-12 * frobenius_norm(a));
}

TEST_CASE("sym_eig: known 2x2 cases") {
  auto d = sym_eig(DenseMatrix{{3, 0}, {0, 1}});
  CHECK(d.eigenvalues[0] == doctest::Approx(3).epsilon(1e-14));
  CHECK(d.eigenvalues[1] == doctest::Approx(1).epsilon(1e-14));
  CHECK(max_abs_diff(d.eigenvectors, DenseMatrix::identity(2)) <= 1e-14);

  auto e = sym_eig(DenseMatrix{{0, 1}, {1, 0}});
  CHECK(e.eigenvalues[0] == doctest::Approx(1).epsilon(1e-14));
  CHECK(e.eigenvalues[1] == doctest::Approx(-1).epsilon(1e-14));
  const double s = 1.0 / std::sqrt(2.0);
  CHECK(e.eigenvectors(0, 0) == doctest::Approx(s).epsilon(1e-13));
  CHECK(e.eigenvectors(1, 0) == doctest::Approx(s).epsilon(1e-13));
  CHECK(e.eigenvectors(0, 1) == doctest::Approx(s).epsilon(1e-13));
  CHECK(e.eigenvectors(1, 1) == doctest::Approx(-s).epsilon(1e-13));
}

TEST_CASE("sym_eig: diagonal input is exact") {
  DenseMatrix a(5, 5);
  const double vals[5] = {0.3, -2.0, 7.5, 7.5, 1e-8};
  for (std::size_t i = 0; i < 5; ++i) a(i, i) = vals[i];
  auto d = sym_eig(a);
  std::vector<double> sorted(vals, vals + 5);
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(std::abs(d.eigenvalues[i] - sorted[i]) <= 1e-12);
  }
}

TEST_CASE("sym_eig: random symmetric matrices") {
  Rng rng(6);
  for (int rep = 0; rep < 10; ++rep) {
    DenseMatrix a = random_symmetric(rng, 8);
    auto d = sym_eig(a);
    // A Q = Q Lambda
    DenseMatrix aq = matmul(a, d.eigenvectors);
    DenseMatrix qe = d.eigenvectors;
    for (std::size_t j = 0; j < 8; ++j) {
      for (std::size_t i = 0; i < 8; ++i) qe(i, j) *= d.eigenvalues[j];
    }
    CHECK(frobenius_norm(sub(aq, qe)) <= 1e-9 * frobenius_norm(a));
    DenseMatrix qtq = matmul(transpose(d.eigenvectors), d.eigenvectors);
    CHECK(max_abs_diff(qtq, DenseMatrix::identity(8)) <= 1e-10);
    for (std::size_t i = 1; i < 8; ++i) {
      CHECK(d.eigenvalues[i - 1] >= d.eigenvalues[i]);
    }
  }
}

TEST_CASE("dominant singular triplet: simple cases") {
  DenseMatrix g(3, 3);
  g(0, 0) = 2.0;
  auto t = dominant_singular_triplet(g, 100, 1e-12);
  CHECK(t.converged);
  CHECK(t.sigma == doctest::Approx(2).epsilon(1e-12));
  CHECK(std::abs(t.u[0]) == doctest::Approx(1).epsilon(1e-12));
  CHECK(std::abs(t.v[0]) == doctest::Approx(1).epsilon(1e-12));

  CHECK_THROWS_AS(dominant_singular_triplet(DenseMatrix(2, 2)), ZeroGradient);
}

TEST_CASE("dominant singular triplet: exact on rank-1") {
  Rng rng(7);
  std::vector<double> u(4), v(3);
  for (double& x : u) x = rng.normal();
  for (double& x : v) x = rng.normal();
  const double nu = vector_norm(u), nv = vector_norm(v);
  for (double& x : u) x /= nu;
  for (double& x : v) x /= nv;
  DenseMatrix g(4, 3);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) g(i, j) = 1.7 * u[i] * v[j];
  }
  auto t = dominant_singular_triplet(g, 100, 1e-12);
  CHECK(t.converged);
  CHECK(t.sigma == doctest::Approx(1.7).epsilon(1e-11));
  // u recovered up to a global sign
  double align = std::abs(dot(t.u, u));
  CHECK(align == doctest::Approx(1).epsilon(1e-11));
}

TEST_CASE("dominant singular triplet agrees with sym_eig SVD oracle") {
  Rng rng(8);
  for (int rep = 0; rep < 12; ++rep) {
    const std::size_t m = 2 + rng.below(15);  // up to 16
    const std::size_t n = 2 + rng.below(15);
    DenseMatrix g = random_matrix(rng, m, n);
    auto t = dominant_singular_triplet(g, 20000, 1e-13);
    // Oracle: sigma1^2 = top eigenvalue of G^T G.
    auto d = sym_eig(matmul(transpose(g), g));
    const double sigma_ref = std::sqrt(std::max(0.0, d.eigenvalues[0]));
    CHECK(std::abs(t.sigma - sigma_ref) <= 1e-8 * sigma_ref);
  }
}

TEST_CASE("kron: small cases and the vec identity") {
  CHECK(max_abs_diff(kron(DenseMatrix::identity(2), DenseMatrix::identity(3)),
                     DenseMatrix::identity(6)) == 0.0);

  DenseMatrix a{{1, 2}};
  DenseMatrix b{{3}, {4}};
  DenseMatrix k = kron(a, b);
  CHECK(k.rows() == 2);
  CHECK(k.cols() == 2);
  CHECK(k(0, 0) == 3);
  CHECK(k(0, 1) == 6);
  CHECK(k(1, 0) == 4);
  CHECK(k(1, 1) == 8);

  CHECK_THROWS_AS(kron(DenseMatrix(100, 100), DenseMatrix(100, 100)),
                  SizeCapExceeded);
}

TEST_CASE("property: vec(B X C^T) == kron(B, C) vec(X) over random shapes") {
  Rng rng(9);
  for (int rep = 0; rep < 40; ++rep) {
    const std::size_t m1 = 1 + rng.below(6), n1 = 1 + rng.below(6);
    const std::size_t m2 = 1 + rng.below(6), n2 = 1 + rng.below(6);
    DenseMatrix b = random_matrix(rng, m1, n1);
    DenseMatrix c = random_matrix(rng, m2, n2);
    DenseMatrix x = random_matrix(rng, n1, n2);
    DenseMatrix y = matmul(matmul(b, x), transpose(c));
    std::vector<double> lhs = vec(y);
    DenseMatrix kvec = matmul(kron(b, c), mat(vec(x), n1 * n2, 1));
    CHECK(max_abs_diff(lhs, kvec.data()) <= 1e-12);
  }
}

TEST_CASE("vec and mat are mutually inverse, row-major") {
  DenseMatrix x{{1, 2}, {3, 4}};
  auto v = vec(x);
  CHECK(v == std::vector<double>{1, 2, 3, 4});
  CHECK(max_abs_diff(mat(v, 2, 2), x) == 0.0);
  CHECK_THROWS_AS(mat(v, 3, 2), DimensionMismatch);

  // vec(e_i e_j^T) is the standard basis vector at index n*i + j.
  const std::size_t m = 3, n = 4, i = 1, j = 2;
  DenseMatrix e(m, n);
  e(i, j) = 1.0;
  auto ev = vec(e);
  for (std::size_t t = 0; t < m * n; ++t) {
    CHECK(ev[t] == (t == n * i + j ? 1.0 : 0.0));
  }
}

TEST_CASE("rearrange maps Kronecker products to rank-1 exactly") {
  Rng rng(10);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t m1 = 1 + rng.below(4), n1 = 1 + rng.below(4);
    const std::size_t m2 = 1 + rng.below(4), n2 = 1 + rng.below(4);
    DenseMatrix b = random_matrix(rng, m1, n1);
    DenseMatrix c = random_matrix(rng, m2, n2);
    DenseMatrix r = rearrange(kron(b, c), m1, n1, m2, n2);
    auto vb = vec(b);
    auto vc = vec(c);
    DenseMatrix want(m1 * n1, m2 * n2);
    for (std::size_t p = 0; p < vb.size(); ++p) {
      for (std::size_t q = 0; q < vc.size(); ++q) want(p, q) = vb[p] * vc[q];
    }
    CHECK(max_abs_diff(r, want) == 0.0);  // pure permutation, exact
  }
}

TEST_CASE("rearrange of vec(G)vec(G)^T is G kron G (2x2 enumeration)") {
  Rng rng(11);
  DenseMatrix g = random_matrix(rng, 2, 2);
  auto vg = vec(g);
  DenseMatrix outer(4, 4);
  for (std::size_t p = 0; p < 4; ++p) {
    for (std::size_t q = 0; q < 4; ++q) outer(p, q) = vg[p] * vg[q];
  }
  DenseMatrix r = rearrange(outer, 2, 2, 2, 2);
  CHECK(max_abs_diff(r, kron(g, g)) == 0.0);
}

TEST_CASE("rearrange: scalars and norm preservation") {
  DenseMatrix s{{42.0}};
  CHECK(rearrange(s, 1, 1, 1, 1)(0, 0) == 42.0);

  Rng rng(12);
  DenseMatrix a = random_matrix(rng, 6, 6);
  DenseMatrix r = rearrange(a, 2, 3, 3, 2);
  // Entries are permuted, so the norm is identical up to summation order.
  CHECK(frobenius_norm(r) ==
        doctest::Approx(frobenius_norm(a)).epsilon(1e-15));
  CHECK_THROWS_AS(rearrange(a, 2, 2, 2, 2), DimensionMismatch);
}

TEST_CASE("hadamard family") {
  Rng rng(13);
  DenseMatrix a = random_matrix(rng, 3, 4);
  CHECK(max_abs_diff(hadamard_pow(a, 1.0), a) == 0.0);

  DenseMatrix sq{{4, 9}};
  DenseMatrix root = hadamard_pow(sq, 0.5);
  CHECK(root(0, 0) == 2.0);
  CHECK(root(0, 1) == 3.0);

  // (A / B) * B == A when B is bounded away from zero.
  DenseMatrix b(3, 4);
  for (double& x : b.data()) x = 0.5 + rng.uniform();
  CHECK(max_abs_diff(hadamard(hadamard_div(a, b), b), a) <= 1e-12);

  DenseMatrix neg{{-1.0}};
  CHECK_THROWS_AS(hadamard_pow(neg, 0.5), NegativeBase);
  CHECK(hadamard_pow(neg, 3.0)(0, 0) == -1.0);  // integral powers allowed

  DenseMatrix tiny{{1e-31}};
  CHECK_THROWS_AS(hadamard_div(DenseMatrix{{1.0}}, tiny), DivisionUnderflow);
}

TEST_CASE("unfold: matrix modes and roundtrip") {
  Rng rng(14);
  DenseMatrix m = random_matrix(rng, 3, 4);
  DenseTensor t({3, 4}, m.data());
  CHECK(max_abs_diff(unfold(t, 1), m) == 0.0);
  CHECK(max_abs_diff(unfold(t, 2), transpose(m)) == 0.0);

  DenseTensor t3({2, 3, 4});
  for (double& x : t3.data()) x = rng.normal();
  for (std::size_t k = 1; k <= 3; ++k) {
    DenseTensor back = refold(unfold(t3, k), k, t3.shape());
    CHECK(max_abs_diff(back.data(), t3.data()) == 0.0);
  }
  CHECK_THROWS_AS(unfold(t3, 4), DimensionMismatch);
  CHECK_THROWS_AS(unfold(t3, 0), DimensionMismatch);
}

TEST_CASE("ttm on a matrix reproduces matmul") {
  Rng rng(15);
  DenseMatrix x = random_matrix(rng, 3, 5);
  DenseMatrix a = random_matrix(rng, 4, 3);
  DenseTensor t({3, 5}, x.data());
  DenseTensor y = ttm(t, a, 1);
  CHECK(max_abs_diff(unfold(y, 1), matmul(a, x)) <= 1e-13);

  DenseMatrix b = random_matrix(rng, 6, 5);
  DenseTensor z = ttm(t, b, 2);
  CHECK(max_abs_diff(unfold(z, 2), matmul(b, transpose(x))) <= 1e-13);
}

TEST_CASE("ttm consistency: unfold of multi-mode product vs kron") {
  // unfold_k(G x_j L_j for all j != k) == G^(k) (L_{j1} kron L_{j2} ...)^T
  // with the remaining modes in increasing order; this pins the convention
  // shared by unfold and the tensor projector-splitting step.
  Rng rng(16);
  DenseTensor g({2, 3, 4});
  for (double& x : g.data()) x = rng.normal();
  DenseMatrix l1 = random_matrix(rng, 2, 2);
  DenseMatrix l2 = random_matrix(rng, 3, 3);
  DenseMatrix l3 = random_matrix(rng, 4, 4);

  DenseTensor y = ttm(ttm(g, l2, 2), l3, 3);  // modes except k=1
  DenseMatrix lhs = unfold(y, 1);
  DenseMatrix rhs = matmul(unfold(g, 1), transpose(kron(l2, l3)));
  CHECK(max_abs_diff(lhs, rhs) <= 1e-12);

  DenseTensor y2 = ttm(ttm(g, l1, 1), l3, 3);  // modes except k=2
  DenseMatrix lhs2 = unfold(y2, 2);
  DenseMatrix rhs2 = matmul(unfold(g, 2), transpose(kron(l1, l3)));
  CHECK(max_abs_diff(lhs2, rhs2) <= 1e-12);
}

TEST_CASE("lanczos dominant triplet agrees with the power method") {
  Rng rng(17);
  for (int rep = 0; rep < 12; ++rep) {
    const std::size_t m = 2 + rng.below(15);
    const std::size_t n = 2 + rng.below(15);
    DenseMatrix g = random_matrix(rng, m, n);
    auto p = dominant_singular_triplet(g, 50000, 1e-13);
    auto l = dominant_singular_triplet_lanczos(g, 50000, 1e-13);
    CHECK(l.converged);
    CHECK(std::abs(l.sigma - p.sigma) <= 1e-9 * p.sigma);
    CHECK(std::abs(std::abs(dot(l.u, p.u)) - 1.0) <= 1e-7);
  }
  // Rank-1 input converges immediately and exactly.
  DenseMatrix r1(3, 4);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) r1(i, j) = (1.0 + i) * (2.0 - 0.5 * j);
  }
  auto t = dominant_singular_triplet_lanczos(r1, 100, 1e-12);
  CHECK(t.converged);
  auto d = sym_eig(matmul(transpose(r1), r1));
  CHECK(std::abs(t.sigma - std::sqrt(d.eigenvalues[0])) <= 1e-10 * t.sigma);
  CHECK_THROWS_AS(dominant_singular_triplet_lanczos(DenseMatrix(2, 2)),
                  ZeroGradient);
}
