#include "mgdr/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace mgdr::ad {

namespace {

std::atomic<std::uint64_t> g_order{0};
thread_local bool g_grad_enabled = true;

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

/// Builds an op node. When grads are globally disabled or no parent needs
/// them, the node is a detached constant.
NodePtr make_op(Mat value, std::initializer_list<NodePtr> parents,
                std::function<void(Node&)> backward_fn) {
  bool need = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) need = need || p->requires_grad;
  }
  auto n = std::make_shared<Node>(std::move(value), need);
  if (need) {
    n->parents.assign(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

NodePtr make_op(Mat value, const std::vector<NodePtr>& parents,
                std::function<void(Node&)> backward_fn) {
  bool need = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) need = need || p->requires_grad;
  }
  auto n = std::make_shared<Node>(std::move(value), need);
  if (need) {
    n->parents = parents;
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

}  // namespace

Node::Node(Mat v, bool req) : value(std::move(v)), requires_grad(req) {
  order = g_order.fetch_add(1, std::memory_order_relaxed);
}

void Node::ensure_grad() {
  if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
    grad = Mat::Zero(value.rows(), value.cols());
  }
}

void Node::zero_grad() { grad.setZero(); }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

NodePtr leaf(Mat v, bool requires_grad) {
  auto n = std::make_shared<Node>(std::move(v), requires_grad);
  if (requires_grad) n->ensure_grad();
  return n;
}

NodePtr scalar_constant(double s) {
  Mat m(1, 1);
  m(0, 0) = s;
  return leaf(std::move(m), false);
}

NodePtr add(const NodePtr& a, const NodePtr& b) {
  require(a->rows() == b->rows() && a->cols() == b->cols(), "add: shape mismatch");
  return make_op(a->value + b->value, {a, b}, [a, b](Node& self) {
    if (a->requires_grad) {
      a->ensure_grad();
      a->grad += self.grad;
    }
    if (b->requires_grad) {
      b->ensure_grad();
      b->grad += self.grad;
    }
  });
}

NodePtr add_rowvec(const NodePtr& a, const NodePtr& row) {
  require(row->rows() == 1 && row->cols() == a->cols(), "add_rowvec: shape mismatch");
  Mat v = a->value;
  v.rowwise() += row->value.row(0);
  return make_op(std::move(v), {a, row}, [a, row](Node& self) {
    if (a->requires_grad) {
      a->ensure_grad();
      a->grad += self.grad;
    }
    if (row->requires_grad) {
      row->ensure_grad();
      row->grad.row(0) += self.grad.colwise().sum();
    }
  });
}

NodePtr scale(const NodePtr& a, double s) {
  return make_op(a->value * s, {a}, [a, s](Node& self) {
    if (a->requires_grad) {
      a->ensure_grad();
      a->grad += s * self.grad;
    }
  });
}

NodePtr gelu(const NodePtr& a) {
  Mat y = a->value.unaryExpr(
      [](double t) { return 0.5 * t * (1.0 + std::erf(t * M_SQRT1_2)); });
  return make_op(std::move(y), {a}, [a](Node& self) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * M_PI);
    Mat d = a->value.unaryExpr([inv_sqrt2pi](double t) {
      const double cdf = 0.5 * (1.0 + std::erf(t * M_SQRT1_2));
      return cdf + t * std::exp(-0.5 * t * t) * inv_sqrt2pi;
    });
    a->grad.array() += self.grad.array() * d.array();
  });
}

NodePtr lincomb(const std::vector<NodePtr>& terms, const std::vector<double>& coeffs) {
  require(!terms.empty() && terms.size() == coeffs.size(), "lincomb: bad arity");
  Mat v = terms[0]->value * coeffs[0];
  for (std::size_t i = 1; i < terms.size(); ++i) {
    require(terms[i]->rows() == v.rows() && terms[i]->cols() == v.cols(),
            "lincomb: shape mismatch");
    v += terms[i]->value * coeffs[i];
  }
  auto cs = coeffs;
  return make_op(std::move(v), terms, [terms, cs](Node& self) {
    for (std::size_t i = 0; i < terms.size(); ++i) {
      if (!terms[i]->requires_grad) continue;
      terms[i]->ensure_grad();
      terms[i]->grad += cs[i] * self.grad;
    }
  });
}

NodePtr matmul(const NodePtr& a, const NodePtr& b) {
  require(a->cols() == b->rows(), "matmul: inner dim mismatch");
  return make_op(a->value * b->value, {a, b}, [a, b](Node& self) {
    if (a->requires_grad) {
      a->ensure_grad();
      a->grad.noalias() += self.grad * b->value.transpose();
    }
    if (b->requires_grad) {
      b->ensure_grad();
      b->grad.noalias() += a->value.transpose() * self.grad;
    }
  });
}

NodePtr matmul_nt(const NodePtr& a, const NodePtr& b) {
  require(a->cols() == b->cols(), "matmul_nt: inner dim mismatch");
  return make_op(a->value * b->value.transpose(), {a, b}, [a, b](Node& self) {
    if (a->requires_grad) {
      a->ensure_grad();
      a->grad.noalias() += self.grad * b->value;
    }
    if (b->requires_grad) {
      b->ensure_grad();
      b->grad.noalias() += self.grad.transpose() * a->value;
    }
  });
}

NodePtr slice_rows(const NodePtr& a, Eigen::Index start, Eigen::Index n) {
  require(start >= 0 && n >= 0 && start + n <= a->rows(), "slice_rows: out of range");
  return make_op(a->value.middleRows(start, n), {a}, [a, start, n](Node& self) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    a->grad.middleRows(start, n) += self.grad;
  });
}

NodePtr slice_cols(const NodePtr& a, Eigen::Index start, Eigen::Index n) {
  require(start >= 0 && n >= 0 && start + n <= a->cols(), "slice_cols: out of range");
  return make_op(a->value.middleCols(start, n), {a}, [a, start, n](Node& self) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    a->grad.middleCols(start, n) += self.grad;
  });
}

NodePtr concat_rows(const std::vector<NodePtr>& parts) {
  require(!parts.empty(), "concat_rows: empty");
  Eigen::Index total = 0;
  const Eigen::Index cols = parts[0]->cols();
  for (const auto& p : parts) {
    require(p->cols() == cols, "concat_rows: col mismatch");
    total += p->rows();
  }
  Mat v(total, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    v.middleRows(at, p->rows()) = p->value;
    at += p->rows();
  }
  return make_op(std::move(v), parts, [parts](Node& self) {
    Eigen::Index at = 0;
    for (const auto& p : parts) {
      if (p->requires_grad) {
        p->ensure_grad();
        p->grad += self.grad.middleRows(at, p->rows());
      }
      at += p->rows();
    }
  });
}

NodePtr concat_cols(const std::vector<NodePtr>& parts) {
  require(!parts.empty(), "concat_cols: empty");
  Eigen::Index total = 0;
  const Eigen::Index rws = parts[0]->rows();
  for (const auto& p : parts) {
    require(p->rows() == rws, "concat_cols: row mismatch");
    total += p->cols();
  }
  Mat v(rws, total);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    v.middleCols(at, p->cols()) = p->value;
    at += p->cols();
  }
  return make_op(std::move(v), parts, [parts](Node& self) {
    Eigen::Index at = 0;
    for (const auto& p : parts) {
      if (p->requires_grad) {
        p->ensure_grad();
        p->grad += self.grad.middleCols(at, p->cols());
      }
      at += p->cols();
    }
  });
}

NodePtr rows(const NodePtr& a, std::vector<int> indices) {
  Mat v(static_cast<Eigen::Index>(indices.size()), a->cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require(indices[i] >= 0 && indices[i] < a->rows(), "rows: index out of range");
    v.row(static_cast<Eigen::Index>(i)) = a->value.row(indices[i]);
  }
  auto idx = std::make_shared<std::vector<int>>(std::move(indices));
  return make_op(std::move(v), {a}, [a, idx](Node& self) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    for (std::size_t i = 0; i < idx->size(); ++i) {
      a->grad.row((*idx)[i]) += self.grad.row(static_cast<Eigen::Index>(i));
    }
  });
}

NodePtr mean_pooled_rows(const NodePtr& table, std::vector<std::vector<int>> groups) {
  Mat v(static_cast<Eigen::Index>(groups.size()), table->cols());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    require(!groups[g].empty(), "mean_pooled_rows: empty group");
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(table->cols());
    for (int id : groups[g]) {
      require(id >= 0 && id < table->rows(), "mean_pooled_rows: index out of range");
      acc += table->value.row(id);
    }
    v.row(static_cast<Eigen::Index>(g)) = acc / static_cast<double>(groups[g].size());
  }
  auto grp = std::make_shared<std::vector<std::vector<int>>>(std::move(groups));
  return make_op(std::move(v), {table}, [table, grp](Node& self) {
    if (!table->requires_grad) return;
    table->ensure_grad();
    for (std::size_t g = 0; g < grp->size(); ++g) {
      const double inv = 1.0 / static_cast<double>((*grp)[g].size());
      for (int id : (*grp)[g]) {
        table->grad.row(id) += inv * self.grad.row(static_cast<Eigen::Index>(g));
      }
    }
  });
}

NodePtr layer_norm(const NodePtr& x, const NodePtr& gain, const NodePtr& bias) {
  require(gain->rows() == 1 && gain->cols() == x->cols(), "layer_norm: gain shape");
  require(bias->rows() == 1 && bias->cols() == x->cols(), "layer_norm: bias shape");
  const Eigen::Index R = x->rows(), C = x->cols();
  Mat xhat(R, C);
  Eigen::VectorXd inv_std(R);
  for (Eigen::Index r = 0; r < R; ++r) {
    const double mean = x->value.row(r).mean();
    const double var = (x->value.row(r).array() - mean).square().sum() / static_cast<double>(C);
    inv_std(r) = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(r) = (x->value.row(r).array() - mean) * inv_std(r);
  }
  Mat y = (xhat.array().rowwise() * gain->value.row(0).array()).rowwise() +
          bias->value.row(0).array();
  auto xh = std::make_shared<Mat>(std::move(xhat));
  auto istd = std::make_shared<Eigen::VectorXd>(std::move(inv_std));
  return make_op(std::move(y), {x, gain, bias}, [x, gain, bias, xh, istd](Node& self) {
    const Eigen::Index R = x->rows(), C = x->cols();
    if (gain->requires_grad) {
      gain->ensure_grad();
      gain->grad.row(0) += (self.grad.array() * xh->array()).colwise().sum().matrix();
    }
    if (bias->requires_grad) {
      bias->ensure_grad();
      bias->grad.row(0) += self.grad.colwise().sum();
    }
    if (x->requires_grad) {
      x->ensure_grad();
      const double n = static_cast<double>(C);
      for (Eigen::Index r = 0; r < R; ++r) {
        // d xhat for this row
        Eigen::RowVectorXd dxh =
            (self.grad.row(r).array() * gain->value.row(0).array()).matrix();
        const double s1 = dxh.sum();
        const double s2 = (dxh.array() * xh->row(r).array()).sum();
        // dx = inv_std * (dxh - mean(dxh) - xhat * mean(dxh .* xhat))
        x->grad.row(r) +=
            ((*istd)(r) * (dxh.array() - s1 / n - xh->row(r).array() * (s2 / n))).matrix();
      }
    }
  });
}

NodePtr softmax_rows(const NodePtr& a) {
  Mat y(a->rows(), a->cols());
  for (Eigen::Index r = 0; r < a->rows(); ++r) {
    const double m = a->value.row(r).maxCoeff();
    Eigen::ArrayXd e = (a->value.row(r).array() - m).exp();
    y.row(r) = (e / e.sum()).matrix();
  }
  return make_op(std::move(y), {a}, [a](Node& self) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    for (Eigen::Index r = 0; r < a->rows(); ++r) {
      const auto y = self.value.row(r).array();
      const auto g = self.grad.row(r).array();
      const double dot = (g * y).sum();
      a->grad.row(r) += ((g - dot) * y).matrix();
    }
  });
}

NodePtr softmax_xent_rows(const NodePtr& logits, std::vector<int> targets) {
  require(static_cast<Eigen::Index>(targets.size()) == logits->rows(),
          "softmax_xent_rows: target count mismatch");
  require(!targets.empty(), "softmax_xent_rows: empty batch");
  const Eigen::Index R = logits->rows();
  double total = 0.0;
  for (Eigen::Index r = 0; r < R; ++r) {
    require(targets[r] >= 0 && targets[r] < logits->cols(),
            "softmax_xent_rows: target out of range");
    const double m = logits->value.row(r).maxCoeff();
    const double lse = std::log((logits->value.row(r).array() - m).exp().sum()) + m;
    total += lse - logits->value(r, targets[r]);
  }
  Mat v(1, 1);
  v(0, 0) = total / static_cast<double>(R);
  auto tgt = std::make_shared<std::vector<int>>(std::move(targets));
  return make_op(std::move(v), {logits}, [logits, tgt](Node& self) {
    if (!logits->requires_grad) return;
    logits->ensure_grad();
    const Eigen::Index R = logits->rows();
    const double g = self.grad(0, 0) / static_cast<double>(R);
    for (Eigen::Index r = 0; r < R; ++r) {
      const double m = logits->value.row(r).maxCoeff();
      Eigen::ArrayXd e = (logits->value.row(r).array() - m).exp();
      Eigen::ArrayXd p = e / e.sum();
      logits->grad.row(r) += (g * p).matrix().transpose();
      logits->grad(r, (*tgt)[r]) -= g;
    }
  });
}

NodePtr multi_positive_xent(const NodePtr& logits, std::vector<int> positives) {
  require(logits->rows() == 1, "multi_positive_xent: logits must be 1 x V");
  require(!positives.empty(), "multi_positive_xent: empty positive set");
  const double m = logits->value.row(0).maxCoeff();
  const double lse = std::log((logits->value.row(0).array() - m).exp().sum()) + m;
  double pos_mean = 0.0;
  for (int p : positives) {
    require(p >= 0 && p < logits->cols(), "multi_positive_xent: positive out of range");
    pos_mean += logits->value(0, p);
  }
  pos_mean /= static_cast<double>(positives.size());
  Mat v(1, 1);
  v(0, 0) = lse - pos_mean;
  auto pos = std::make_shared<std::vector<int>>(std::move(positives));
  return make_op(std::move(v), {logits}, [logits, pos](Node& self) {
    if (!logits->requires_grad) return;
    logits->ensure_grad();
    const double g = self.grad(0, 0);
    const double m = logits->value.row(0).maxCoeff();
    Eigen::ArrayXd e = (logits->value.row(0).array() - m).exp();
    Eigen::ArrayXd p = e / e.sum();
    logits->grad.row(0) += (g * p).matrix().transpose();
    const double w = g / static_cast<double>(pos->size());
    for (int i : *pos) logits->grad(0, i) -= w;
  });
}

void backward(const NodePtr& root) {
  if (!root) throw std::invalid_argument("backward: null root");
  if (root->rows() != 1 || root->cols() != 1) {
    throw std::invalid_argument("backward: root must be a 1x1 scalar");
  }
  if (!root->requires_grad) return;  // constant graph, nothing to do

  // Collect the reachable subgraph; creation order is a topological order.
  std::vector<Node*> nodes;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    nodes.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const Node* a, const Node* b) { return a->order > b->order; });

  root->ensure_grad();
  root->grad(0, 0) += 1.0;
  for (Node* n : nodes) {
    n->ensure_grad();
    if (n->backward_fn) n->backward_fn(*n);
  }
}

}  // namespace mgdr::ad
