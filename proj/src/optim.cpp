// dykaf/optim.cpp

#include "dykaf/optim.hpp"

#include <cmath>
#include <string>

namespace dykaf {

namespace {

void check_range(bool ok, const char* what) {
  if (!ok) throw Error(std::string("Hyperparams: ") + what);
}

// m <- beta m + (1 - beta) g, elementwise. Shared by every optimizer so the
// frozen-rotation reductions are bit-identical.
void ema_update(DenseMatrix& m, const DenseMatrix& g, double beta) {
  for (std::size_t i = 0; i < m.size(); ++i) {
    m.data()[i] = beta * m.data()[i] + (1.0 - beta) * g.data()[i];
  }
}

void ema_update_squared(DenseMatrix& v, const DenseMatrix& g, double beta) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = g.data()[i];
    v.data()[i] = beta * v.data()[i] + (1.0 - beta) * (x * x);
  }
}

// (m / bc1) / (sqrt(v / bc2) + eps), elementwise; the single place the
// Adam-style quotient is spelled out.
DenseMatrix adam_quotient(const DenseMatrix& m, const DenseMatrix& v,
                          double bc1, double bc2, double eps) {
  DenseMatrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double denom = std::sqrt(v.data()[i] / bc2) + eps;
    if (std::abs(denom) < kDivisionFloor) {
      throw DivisionUnderflow("adam step: denominator below 1e-30");
    }
    out.data()[i] = (m.data()[i] / bc1) / denom;
  }
  return out;
}

void apply_update(DenseMatrix& w, const DenseMatrix& n, double lr, double wd) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    w.data()[i] -= lr * (n.data()[i] + wd * w.data()[i]);
  }
}

double bias_factor(bool enabled, double beta, long t) {
  return enabled ? 1.0 - std::pow(beta, static_cast<double>(t)) : 1.0;
}

// Clamp tiny negative roundoff in the rank-1 second-moment vectors and
// restore unit norm; the represented product must stay entrywise >= 0.
void clamp_rank1_state(Rank1Factorization& f) {
  auto clamp_unit = [](std::vector<double>& x) {
    bool touched = false;
    for (double& t : x) {
      if (t < 0.0) {
        t = 0.0;
        touched = true;
      }
    }
    if (touched) {
      const double n = vector_norm(x);
      if (n > 0.0) {
        for (double& t : x) t /= n;
      }
    }
  };
  clamp_unit(f.u);
  clamp_unit(f.v);
  if (f.s < 0.0) f.s = 0.0;
}

DenseMatrix inverse_fourth_root(const DenseMatrix& a, double eig_floor) {
  SymEigDecomposition d = sym_eig(a);
  const std::size_t n = a.rows();
  DenseMatrix scaled = d.eigenvectors;
  for (std::size_t j = 0; j < n; ++j) {
    const double lam = std::max(d.eigenvalues[j], eig_floor);
    const double w = 1.0 / std::sqrt(std::sqrt(lam));
    for (std::size_t i = 0; i < n; ++i) scaled(i, j) *= w;
  }
  return matmul(scaled, transpose(d.eigenvectors));
}

}  // namespace

void Hyperparams::validate() const {
  check_range(learning_rate > 0.0, "learning_rate must be > 0");
  check_range(beta1 >= 0.0 && beta1 < 1.0, "beta1 must be in [0, 1)");
  check_range(beta2 >= 0.0 && beta2 < 1.0, "beta2 must be in [0, 1)");
  check_range(epsilon > 0.0, "epsilon must be > 0");
  check_range(precond_frequency >= 1, "precond_frequency must be >= 1");
  check_range(weight_decay >= 0.0, "weight_decay must be >= 0");
  check_range(shampoo_matrix_eps > 0.0, "shampoo_matrix_eps must be > 0");
  if (factor_beta) {
    check_range(*factor_beta >= 0.0 && *factor_beta < 1.0,
                "factor_beta must be in [0, 1)");
  }
  if (second_moment_decay) {
    check_range(*second_moment_decay > 0.0 && *second_moment_decay < 1.0,
                "second_moment_decay must be in (0, 1)");
  }
  check_range(shampoo_factor_beta > 0.0 && shampoo_factor_beta <= 1.0,
              "shampoo_factor_beta must be in (0, 1]");
}

DenseMatrix eigenvectors_refresh(const DenseMatrix& p, const DenseMatrix& q) {
  if (p.rows() != p.cols() || !p.same_shape(q)) {
    throw DimensionMismatch("eigenvectors_refresh: shapes");
  }
  DenseMatrix s = matmul(p, q);
  for (std::size_t j = 0; j < s.cols(); ++j) {
    double nrm = 0.0;
    for (std::size_t i = 0; i < s.rows(); ++i) nrm += s(i, j) * s(i, j);
    if (std::sqrt(nrm) < kNormFloor) {
      // Degenerate column; re-orthogonalize from scratch.
      return sym_eig(p).eigenvectors;
    }
  }
  return qr(s).q;
}

DyKafParamState dykaf_init(const DenseMatrix& g1, const Hyperparams& hp) {
  hp.validate();
  if (frobenius_norm(g1) < kNormFloor) {
    throw ZeroGradient("dykaf_init: zero first gradient");
  }
  const std::size_t m = g1.rows(), n = g1.cols();

  DyKafParamState st;
  st.factors = init_from_gradient(g1);
  // Rank-1 factors have degenerate null spaces; the damping makes the
  // eigenbases below well defined.
  const double sigma1 = frobenius_norm(st.factors.l);
  const double delta = 1e-12 * sigma1;
  for (std::size_t i = 0; i < m; ++i) st.factors.l(i, i) += delta;
  for (std::size_t i = 0; i < n; ++i) st.factors.r(i, i) += delta;

  st.q_l = sym_eig(st.factors.l).eigenvectors;
  st.q_r = sym_eig(st.factors.r).eigenvectors;
  st.m = DenseMatrix(m, n);
  st.rank1 = hp.rank1_second_moment;
  if (st.rank1) {
    // v_l = v_r = eps * ones, stored as unit directions with the scale in s.
    st.sm.u.assign(m, 1.0 / std::sqrt(static_cast<double>(m)));
    st.sm.v.assign(n, 1.0 / std::sqrt(static_cast<double>(n)));
    st.sm.s = hp.epsilon * hp.epsilon *
              std::sqrt(static_cast<double>(m) * static_cast<double>(n));
  } else {
    st.v = DenseMatrix(m, n);
  }
  st.step = 0;
  return st;
}

DyKafStepResult dykaf_step(const DyKafParamState& state, const DenseMatrix& w,
                           const DenseMatrix& g, const Hyperparams& hp) {
  hp.validate();
  const std::size_t m = g.rows(), n = g.cols();
  if (!w.same_shape(g) || state.m.rows() != m || state.m.cols() != n) {
    throw DimensionMismatch("dykaf_step: shapes");
  }

  DyKafParamState st = state;
  const long t = st.step + 1;

  DenseMatrix g_rot = matmul(matmul(transpose(st.q_l), g), st.q_r);
  ema_update(st.m, g, hp.beta1);
  DenseMatrix m_rot = matmul(matmul(transpose(st.q_l), st.m), st.q_r);

  const double bc1 = bias_factor(hp.bias_correction, hp.beta1, t);
  DenseMatrix n_rot(m, n);
  if (st.rank1) {
    DenseMatrix delta = hadamard(g_rot, g_rot);
    if (hp.second_moment_decay) {
      st.sm.s *= *hp.second_moment_decay;
      delta = scale(delta, 1.0 - *hp.second_moment_decay);
    }
    st.sm = proj_split_step(st.sm, delta);
    clamp_rank1_state(st.sm);
    // N' = (M'/bc1) / ((v_l v_r^T)^{1/2} + eps); no exponent bias
    // correction in this branch.
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double denom =
            std::sqrt(st.sm.u[i] * st.sm.s * st.sm.v[j]) + hp.epsilon;
        if (std::abs(denom) < kDivisionFloor) {
          throw DivisionUnderflow("dykaf_step: rank-1 denominator underflow");
        }
        n_rot(i, j) = (m_rot(i, j) / bc1) / denom;
      }
    }
  } else {
    ema_update_squared(st.v, g_rot, hp.beta2);
    const double bc2 = bias_factor(hp.bias_correction, hp.beta2, t);
    n_rot = adam_quotient(m_rot, st.v, bc1, bc2, hp.epsilon);
  }

  DenseMatrix update = matmul(matmul(st.q_l, n_rot), transpose(st.q_r));
  DenseMatrix w_next = w;
  apply_update(w_next, update, hp.learning_rate, hp.weight_decay);

  const double fb = hp.effective_factor_beta();
  st.factors = kron_proj_split(
      {scale(st.factors.l, std::sqrt(fb)), scale(st.factors.r, std::sqrt(fb))},
      scale(g, std::sqrt(1.0 - fb)));

  st.step = t;
  if (t % hp.precond_frequency == 0) {
    st.q_l = eigenvectors_refresh(st.factors.l, st.q_l);
    st.q_r = eigenvectors_refresh(st.factors.r, st.q_r);
  }
  return {std::move(st), std::move(w_next)};
}

AdamWState adamw_init(std::size_t m, std::size_t n) {
  AdamWState st;
  st.m = DenseMatrix(m, n);
  st.v = DenseMatrix(m, n);
  return st;
}

AdamWStepResult adamw_step(const AdamWState& state, const DenseMatrix& w,
                           const DenseMatrix& g, const Hyperparams& hp) {
  hp.validate();
  if (!w.same_shape(g) || !state.m.same_shape(g)) {
    throw DimensionMismatch("adamw_step: shapes");
  }
  AdamWState st = state;
  const long t = st.step + 1;
  ema_update(st.m, g, hp.beta1);
  ema_update_squared(st.v, g, hp.beta2);
  const double bc1 = bias_factor(hp.bias_correction, hp.beta1, t);
  const double bc2 = bias_factor(hp.bias_correction, hp.beta2, t);
  DenseMatrix update = adam_quotient(st.m, st.v, bc1, bc2, hp.epsilon);
  DenseMatrix w_next = w;
  apply_update(w_next, update, hp.learning_rate, hp.weight_decay);
  st.step = t;
  return {std::move(st), std::move(w_next)};
}

ShampooState shampoo_init(std::size_t m, std::size_t n,
                          const Hyperparams& hp) {
  hp.validate();
  ShampooState st;
  st.factors = {scale(DenseMatrix::identity(m), hp.shampoo_matrix_eps),
                scale(DenseMatrix::identity(n), hp.shampoo_matrix_eps)};
  return st;
}

DenseMatrix shampoo_precondition(const KroneckerFactorPair& pair,
                                 const DenseMatrix& g, double eig_floor) {
  DenseMatrix left = inverse_fourth_root(pair.l, eig_floor);
  DenseMatrix right = inverse_fourth_root(pair.r, eig_floor);
  return matmul(matmul(left, g), right);
}

ShampooStepResult shampoo_step(const ShampooState& state, const DenseMatrix& w,
                               const DenseMatrix& g, const Hyperparams& hp) {
  hp.validate();
  if (!w.same_shape(g)) throw DimensionMismatch("shampoo_step: shapes");
  ShampooState st = state;
  st.factors = shampoo_factor_update(st.factors, g, hp.shampoo_factor_beta);

  DenseMatrix update =
      shampoo_precondition(st.factors, g, hp.shampoo_matrix_eps);

  DenseMatrix w_next = w;
  apply_update(w_next, update, hp.learning_rate, hp.weight_decay);
  st.step += 1;
  return {std::move(st), std::move(w_next)};
}

SoapState soap_init(std::size_t m, std::size_t n, const Hyperparams& hp) {
  hp.validate();
  SoapState st;
  st.m = DenseMatrix(m, n);
  st.v = DenseMatrix(m, n);
  st.factors = {scale(DenseMatrix::identity(m), hp.shampoo_matrix_eps),
                scale(DenseMatrix::identity(n), hp.shampoo_matrix_eps)};
  st.q_l = DenseMatrix::identity(m);
  st.q_r = DenseMatrix::identity(n);
  return st;
}

SoapStepResult soap_step(const SoapState& state, const DenseMatrix& w,
                         const DenseMatrix& g, const Hyperparams& hp) {
  hp.validate();
  const std::size_t m = g.rows(), n = g.cols();
  if (!w.same_shape(g) || state.m.rows() != m || state.m.cols() != n) {
    throw DimensionMismatch("soap_step: shapes");
  }
  SoapState st = state;
  const long t = st.step + 1;

  DenseMatrix g_rot = matmul(matmul(transpose(st.q_l), g), st.q_r);
  ema_update(st.m, g, hp.beta1);
  DenseMatrix m_rot = matmul(matmul(transpose(st.q_l), st.m), st.q_r);
  ema_update_squared(st.v, g_rot, hp.beta2);

  const double bc1 = bias_factor(hp.bias_correction, hp.beta1, t);
  const double bc2 = bias_factor(hp.bias_correction, hp.beta2, t);
  DenseMatrix n_rot = adam_quotient(m_rot, st.v, bc1, bc2, hp.epsilon);
  DenseMatrix update = matmul(matmul(st.q_l, n_rot), transpose(st.q_r));

  DenseMatrix w_next = w;
  apply_update(w_next, update, hp.learning_rate, hp.weight_decay);

  st.factors.l = add(scale(st.factors.l, hp.beta2),
                     scale(matmul(g, transpose(g)), 1.0 - hp.beta2));
  st.factors.r = add(scale(st.factors.r, hp.beta2),
                     scale(matmul(transpose(g), g), 1.0 - hp.beta2));

  st.step = t;
  if (t % hp.precond_frequency == 0) {
    st.q_l = eigenvectors_refresh(st.factors.l, st.q_l);
    st.q_r = eigenvectors_refresh(st.factors.r, st.q_r);
  }
  return {std::move(st), std::move(w_next)};
}

}  // namespace dykaf
