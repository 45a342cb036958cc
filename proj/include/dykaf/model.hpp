// dykaf/model.hpp
//
// Closed-form test problem: multinomial softmax regression with analytic
// loss, gradient and Hessian, libsvm-format ingestion, synthetic blob data,
// and reconstruction of the dense Fisher estimate from optimizer state.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dykaf/linalg.hpp"
#include "dykaf/optim.hpp"

namespace dykaf {

/// Linear softmax classifier with weight matrix W (m classes x n features).
struct SoftmaxModel {
  DenseMatrix w;
};

struct Dataset {
  DenseMatrix x;           // N x n features
  std::vector<long> y;     // N labels in [0, classes)
  std::size_t classes = 0;

  std::size_t count() const { return y.size(); }
  std::size_t features() const { return x.cols(); }
};

inline constexpr std::size_t kHessianDimCap = 4096;  // mn <= cap

/// Mean cross-entropy over the dataset, log-sum-exp stabilized.
double loss(const SoftmaxModel& model, const Dataset& ds);

/// Mean gradient (1/N) sum_i (p_i - y_i) x_i^T, shape m x n.
DenseMatrix gradient(const SoftmaxModel& model, const Dataset& ds);

/// Dense mn x mn Hessian (1/N) sum_i (diag(p_i) - p_i p_i^T) (x) (x_i x_i^T),
/// consistent with row-major vec(W).
DenseMatrix hessian(const SoftmaxModel& model, const Dataset& ds);

/// Dense Fisher estimate (Q_L (x) Q_R) diag(vec(V)) (Q_L (x) Q_R)^T from
/// raw rotation/second-moment state.
DenseMatrix fisher_reconstruct(const DenseMatrix& q_l, const DenseMatrix& q_r,
                               const DenseMatrix& v,
                               std::size_t dim_cap = kHessianDimCap);
/// Overloads materializing V from the optimizer state (rank-1 mode builds
/// v_l v_r^T first).
DenseMatrix fisher_reconstruct(const DyKafParamState& state,
                               std::size_t dim_cap = kHessianDimCap);
DenseMatrix fisher_reconstruct(const SoapState& state,
                               std::size_t dim_cap = kHessianDimCap);

/// Reads a libsvm/svmlight text file: "label idx:val idx:val ...", 1-based
/// feature indices. Labels are remapped to contiguous 0-based classes in
/// first-seen order; the feature dimension is the maximum index seen.
/// Blank lines and trailing whitespace are tolerated.
Dataset read_libsvm(const std::string& path);

/// Writes a dataset in the same format (feature values with full
/// precision); the read/write pair round-trips exactly.
void write_libsvm(const Dataset& ds, const std::string& path);

/// Deterministic Gaussian class blobs, one blob per class with means on a
/// scaled coordinate simplex. Labels are assigned round-robin, so the class
/// histogram is balanced by construction.
Dataset synth_blobs(std::size_t classes, std::size_t dim, std::size_t count,
                    std::uint64_t seed, double spread = 4.0);

/// Fraction of samples whose argmax logit matches the label.
double accuracy(const SoftmaxModel& model, const Dataset& ds);

}  // namespace dykaf
