// dykaf/model.cpp

#include "dykaf/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "dykaf/rng.hpp"

namespace dykaf {

namespace {

void check_shapes(const SoftmaxModel& model, const Dataset& ds) {
  if (model.w.cols() != ds.features()) {
    throw DimensionMismatch("softmax: W cols != feature dim");
  }
  if (ds.count() == 0) throw DimensionMismatch("softmax: empty dataset");
  for (long label : ds.y) {
    if (label < 0 || static_cast<std::size_t>(label) >= model.w.rows()) {
      throw DimensionMismatch("softmax: label out of range");
    }
  }
}

// Softmax probabilities of sample i, log-sum-exp stabilized; also returns
// the per-sample loss term.
void sample_probs(const SoftmaxModel& model, const Dataset& ds, std::size_t i,
                  std::vector<double>& p, double* loss_term) {
  const std::size_t m = model.w.rows(), n = model.w.cols();
  p.assign(m, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += model.w(k, j) * ds.x(i, j);
    p[k] = z;
  }
  const double zmax = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (double& z : p) {
    z = std::exp(z - zmax);
    sum += z;
  }
  if (loss_term != nullptr) {
    const double lse = zmax + std::log(sum);
    double zy = 0.0;
    const long label = ds.y[i];
    for (std::size_t j = 0; j < n; ++j) {
      zy += model.w(static_cast<std::size_t>(label), j) * ds.x(i, j);
    }
    *loss_term = lse - zy;
  }
  for (double& z : p) z /= sum;
}

}  // namespace

double loss(const SoftmaxModel& model, const Dataset& ds) {
  check_shapes(model, ds);
  std::vector<double> p;
  double total = 0.0;
  for (std::size_t i = 0; i < ds.count(); ++i) {
    double term = 0.0;
    sample_probs(model, ds, i, p, &term);
    total += term;
  }
  return total / static_cast<double>(ds.count());
}

DenseMatrix gradient(const SoftmaxModel& model, const Dataset& ds) {
  check_shapes(model, ds);
  const std::size_t m = model.w.rows(), n = model.w.cols();
  DenseMatrix g(m, n);
  std::vector<double> p;
  for (std::size_t i = 0; i < ds.count(); ++i) {
    sample_probs(model, ds, i, p, nullptr);
    p[static_cast<std::size_t>(ds.y[i])] -= 1.0;
    for (std::size_t k = 0; k < m; ++k) {
      if (p[k] == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) g(k, j) += p[k] * ds.x(i, j);
    }
  }
  return scale(g, 1.0 / static_cast<double>(ds.count()));
}

DenseMatrix hessian(const SoftmaxModel& model, const Dataset& ds) {
  check_shapes(model, ds);
  const std::size_t m = model.w.rows(), n = model.w.cols();
  if (m * n > kHessianDimCap) {
    throw SizeCapExceeded("hessian: mn exceeds cap");
  }
  DenseMatrix h(m * n, m * n);
  std::vector<double> p;
  const double inv_n = 1.0 / static_cast<double>(ds.count());
  for (std::size_t i = 0; i < ds.count(); ++i) {
    sample_probs(model, ds, i, p, nullptr);
    // (diag(p) - p p^T) (x) (x x^T), accumulated blockwise.
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t c = 0; c < m; ++c) {
        const double hz = (a == c ? p[a] : 0.0) - p[a] * p[c];
        if (hz == 0.0) continue;
        const double wz = hz * inv_n;
        for (std::size_t b = 0; b < n; ++b) {
          const double xb = ds.x(i, b);
          if (xb == 0.0) continue;
          for (std::size_t d = 0; d < n; ++d) {
            h(a * n + b, c * n + d) += wz * xb * ds.x(i, d);
          }
        }
      }
    }
  }
  return h;
}

DenseMatrix fisher_reconstruct(const DenseMatrix& q_l, const DenseMatrix& q_r,
                               const DenseMatrix& v, std::size_t dim_cap) {
  const std::size_t m = q_l.rows(), n = q_r.rows();
  if (v.rows() != m || v.cols() != n) {
    throw DimensionMismatch("fisher_reconstruct: V shape");
  }
  if (m * n > dim_cap) {
    throw SizeCapExceeded("fisher_reconstruct: mn exceeds cap");
  }
  DenseMatrix k = kron(q_l, q_r, dim_cap);
  DenseMatrix scaled = k;
  const auto vv = vec(v);
  for (std::size_t col = 0; col < m * n; ++col) {
    for (std::size_t row = 0; row < m * n; ++row) scaled(row, col) *= vv[col];
  }
  return matmul(scaled, transpose(k));
}

DenseMatrix fisher_reconstruct(const DyKafParamState& state,
                               std::size_t dim_cap) {
  if (state.rank1) {
    DenseMatrix v(state.sm.u.size(), state.sm.v.size());
    for (std::size_t i = 0; i < state.sm.u.size(); ++i) {
      for (std::size_t j = 0; j < state.sm.v.size(); ++j) {
        v(i, j) = state.sm.u[i] * state.sm.s * state.sm.v[j];
      }
    }
    return fisher_reconstruct(state.q_l, state.q_r, v, dim_cap);
  }
  return fisher_reconstruct(state.q_l, state.q_r, state.v, dim_cap);
}

DenseMatrix fisher_reconstruct(const SoapState& state, std::size_t dim_cap) {
  return fisher_reconstruct(state.q_l, state.q_r, state.v, dim_cap);
}

Dataset read_libsvm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DatasetUnavailable("read_libsvm: cannot open " + path);

  struct Entry {
    long cls;
    std::vector<std::pair<std::size_t, double>> feats;  // 0-based
  };
  std::vector<Entry> entries;
  std::map<std::string, long> label_ids;  // first-seen order via counter
  std::size_t max_index = 0;

  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string label;
    if (!(ls >> label)) continue;  // blank line

    auto [it, inserted] =
        label_ids.try_emplace(label, static_cast<long>(label_ids.size()));
    Entry e;
    e.cls = it->second;

    std::string tok;
    while (ls >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos || colon == 0 ||
          colon + 1 == tok.size()) {
        throw ParseError("read_libsvm: malformed pair '" + tok + "'", line_no);
      }
      std::size_t idx = 0;
      double val = 0.0;
      try {
        std::size_t consumed = 0;
        idx = std::stoul(tok.substr(0, colon), &consumed);
        if (consumed != colon) throw std::invalid_argument(tok);
        const std::string vs = tok.substr(colon + 1);
        val = std::stod(vs, &consumed);
        if (consumed != vs.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError("read_libsvm: bad index or value in '" + tok + "'",
                         line_no);
      }
      if (idx == 0) {
        throw ParseError("read_libsvm: feature indices are 1-based", line_no);
      }
      if (!std::isfinite(val)) {
        throw ParseError("read_libsvm: non-finite value in '" + tok + "'",
                         line_no);
      }
      max_index = std::max(max_index, idx);
      e.feats.emplace_back(idx - 1, val);
    }
    entries.push_back(std::move(e));
  }
  if (entries.empty()) {
    throw DatasetUnavailable("read_libsvm: no samples in " + path);
  }

  Dataset ds;
  ds.classes = label_ids.size();
  ds.x = DenseMatrix(entries.size(), std::max<std::size_t>(max_index, 1));
  ds.y.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    ds.y.push_back(entries[i].cls);
    for (const auto& [j, v] : entries[i].feats) ds.x(i, j) = v;
  }
  return ds;
}

void write_libsvm(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("write_libsvm: cannot open " + path);
  char buf[64];
  for (std::size_t i = 0; i < ds.count(); ++i) {
    out << (ds.y[i] + 1);
    for (std::size_t j = 0; j < ds.features(); ++j) {
      const double v = ds.x(i, j);
      if (v == 0.0) continue;
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << ' ' << (j + 1) << ':' << buf;
    }
    out << '\n';
  }
}

Dataset synth_blobs(std::size_t classes, std::size_t dim, std::size_t count,
                    std::uint64_t seed, double spread) {
  if (classes < 2 || dim < 1 || count < 1) {
    throw DimensionMismatch("synth_blobs: need classes >= 2, dim, count >= 1");
  }
  Rng rng(seed);
  Dataset ds;
  ds.classes = classes;
  ds.x = DenseMatrix(count, dim);
  ds.y.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t cls = i % classes;
    ds.y.push_back(static_cast<long>(cls));
    for (std::size_t j = 0; j < dim; ++j) ds.x(i, j) = rng.normal();
    // Class mean: spread * (+-e_{cls mod dim}), alternating sign when
    // classes wrap past the dimension.
    const std::size_t axis = cls % dim;
    const double sign = (cls / dim) % 2 == 0 ? 1.0 : -1.0;
    ds.x(i, axis) += sign * spread;
  }
  return ds;
}

double accuracy(const SoftmaxModel& model, const Dataset& ds) {
  check_shapes(model, ds);
  std::size_t hits = 0;
  const std::size_t m = model.w.rows(), n = model.w.cols();
  for (std::size_t i = 0; i < ds.count(); ++i) {
    std::size_t best = 0;
    double best_z = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < m; ++k) {
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j) z += model.w(k, j) * ds.x(i, j);
      if (z > best_z) {
        best_z = z;
        best = k;
      }
    }
    if (static_cast<long>(best) == ds.y[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(ds.count());
}

}  // namespace dykaf
