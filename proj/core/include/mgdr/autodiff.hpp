#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace mgdr::ad {

using Mat = Eigen::MatrixXd;

class Node;
using NodePtr = std::shared_ptr<Node>;

/// One entry of the reverse-mode tape. Holds a dense matrix value; scalars
/// are 1x1. Nodes form a DAG through `parents`; creation order doubles as a
/// topological order because inputs always exist before the op that uses
/// them.
class Node {
public:
  Node(Mat v, bool req);

  Mat value;
  Mat grad;  // allocated lazily, same shape as value
  bool requires_grad = false;
  std::uint64_t order = 0;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward_fn;  // pulls this->grad into parents

  Eigen::Index rows() const { return value.rows(); }
  Eigen::Index cols() const { return value.cols(); }

  void ensure_grad();
  void zero_grad();
  double scalar() const { return value(0, 0); }
};

/// While a guard is alive, ops compute values only: no parents, no backward
/// closures. Used for inference and finite-difference evaluation.
class NoGradGuard {
public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
  bool prev_;
};

bool grad_enabled();

// ---- leaves ----

NodePtr leaf(Mat v, bool requires_grad = false);
NodePtr scalar_constant(double s);

// ---- elementwise / broadcast ----

NodePtr add(const NodePtr& a, const NodePtr& b);             // same shape
NodePtr add_rowvec(const NodePtr& a, const NodePtr& row);    // row: 1 x cols
NodePtr scale(const NodePtr& a, double s);
NodePtr gelu(const NodePtr& a);

/// sum_i coeffs[i] * terms[i]; all terms share one shape.
NodePtr lincomb(const std::vector<NodePtr>& terms, const std::vector<double>& coeffs);

// ---- products ----

NodePtr matmul(const NodePtr& a, const NodePtr& b);     // A * B
NodePtr matmul_nt(const NodePtr& a, const NodePtr& b);  // A * B^T

// ---- shape ----

NodePtr slice_rows(const NodePtr& a, Eigen::Index start, Eigen::Index n);
NodePtr slice_cols(const NodePtr& a, Eigen::Index start, Eigen::Index n);
NodePtr concat_rows(const std::vector<NodePtr>& parts);
NodePtr concat_cols(const std::vector<NodePtr>& parts);

/// Row gather; duplicate indices accumulate gradient.
NodePtr rows(const NodePtr& a, std::vector<int> indices);

/// out.row(v) = mean over table rows listed in groups[v]. The average-pooling
/// projection used for shared value embeddings.
NodePtr mean_pooled_rows(const NodePtr& table, std::vector<std::vector<int>> groups);

// ---- normalization / attention ----

inline constexpr double kLayerNormEps = 1e-5;

NodePtr layer_norm(const NodePtr& x, const NodePtr& gain, const NodePtr& bias);
NodePtr softmax_rows(const NodePtr& a);

// ---- losses (fused, numerically stable) ----

/// Mean over rows of -log softmax(row)[target]. logits: R x C.
NodePtr softmax_xent_rows(const NodePtr& logits, std::vector<int> targets);

/// -(1/|P|) * sum_{p in P} log softmax(logits)[p]. logits: 1 x V.
NodePtr multi_positive_xent(const NodePtr& logits, std::vector<int> positives);

// ---- backward ----

/// Reverse pass from a 1x1 root; accumulates into leaf grads.
void backward(const NodePtr& root);

}  // namespace mgdr::ad
