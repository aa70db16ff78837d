#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "casft/common.hpp"

namespace casft::ad {

/// Reverse-mode automatic differentiation on Eigen matrices.
///
/// Every op builds a node holding its value, its parents, and a pull-back
/// closure. backward() runs the closures in reverse topological order and
/// then severs parent links, so a graph is single-use. With grads disabled
/// (NoGradGuard) ops emit detached constants and no graph is built.

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Mat val;
  Mat grad;  // empty until something accumulates into it
  std::vector<NodePtr> parents;
  std::function<void(Node&)> back;
  bool requires_grad = false;
};

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

/// RAII guard disabling graph construction (inference mode).
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev; }
};

class Var {
 public:
  Var() = default;
  explicit Var(NodePtr n) : n_(std::move(n)) {}

  static Var constant(Mat m) {
    auto n = std::make_shared<Node>();
    n->val = std::move(m);
    return Var(std::move(n));
  }

  /// Trainable leaf; gradients accumulate here.
  static Var param(Mat m) {
    auto n = std::make_shared<Node>();
    n->val = std::move(m);
    n->requires_grad = true;
    return Var(std::move(n));
  }

  bool defined() const { return static_cast<bool>(n_); }
  const Mat& val() const { return n_->val; }
  Mat& mutable_val() { return n_->val; }
  bool requires_grad() const { return n_ && n_->requires_grad; }

  const Mat& grad() const {
    if (n_->grad.size() == 0) n_->grad = Mat::Zero(n_->val.rows(), n_->val.cols());
    return n_->grad;
  }
  void zero_grad() {
    if (n_->grad.size() != 0) n_->grad.setZero();
  }

  double scalar() const {
    if (n_->val.size() != 1) throw CasftError("Var::scalar: not a 1x1 value");
    return n_->val(0, 0);
  }

  Var detach() const { return constant(n_->val); }

  NodePtr node() const { return n_; }

  /// Reverse pass from a scalar root. Clears visited parent links afterwards.
  void backward() const {
    if (!n_ || n_->val.size() != 1) throw CasftError("backward: root must be a scalar");
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(n_.get(), 0);
    visited.insert(n_.get());
    while (!stack.empty()) {
      auto& top = stack.back();
      Node* cur = top.first;
      if (top.second < cur->parents.size()) {
        Node* p = cur->parents[top.second++].get();
        if (p->requires_grad && !visited.count(p) && !p->parents.empty())
          // pure leaves need no visit; grads land in them via their children
          if (visited.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(cur);
        stack.pop_back();
      }
    }
    n_->grad = Mat::Ones(1, 1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* cur = *it;
      if (cur->back && cur->grad.size() != 0) cur->back(*cur);
    }
    for (Node* cur : order) {
      cur->parents.clear();
      cur->back = nullptr;
    }
  }

 private:
  NodePtr n_;
};

namespace detail {

inline void accum(Node& target, const Mat& g) {
  if (!target.requires_grad) return;
  if (target.grad.size() == 0)
    target.grad = g;
  else
    target.grad += g;
}

inline Var make(Mat val, std::vector<Var> parents, std::function<void(Node&)> back) {
  auto n = std::make_shared<Node>();
  n->val = std::move(val);
  if (grad_mode()) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      n->requires_grad = true;
      n->parents.reserve(parents.size());
      for (auto& p : parents) n->parents.push_back(p.node());
      n->back = std::move(back);
    }
  }
  return Var(std::move(n));
}

}  // namespace detail

inline Var add(const Var& a, const Var& b) {
  return detail::make(a.val() + b.val(), {a, b}, [](Node& n) {
    detail::accum(*n.parents[0], n.grad);
    detail::accum(*n.parents[1], n.grad);
  });
}

inline Var sub(const Var& a, const Var& b) {
  return detail::make(a.val() - b.val(), {a, b}, [](Node& n) {
    detail::accum(*n.parents[0], n.grad);
    detail::accum(*n.parents[1], -n.grad);
  });
}

inline Var neg(const Var& a) {
  return detail::make(-a.val(), {a}, [](Node& n) { detail::accum(*n.parents[0], -n.grad); });
}

/// Hadamard product.
inline Var mul(const Var& a, const Var& b) {
  return detail::make(a.val().cwiseProduct(b.val()), {a, b}, [](Node& n) {
    detail::accum(*n.parents[0], n.grad.cwiseProduct(n.parents[1]->val));
    detail::accum(*n.parents[1], n.grad.cwiseProduct(n.parents[0]->val));
  });
}

inline Var smul(const Var& a, double c) {
  return detail::make(a.val() * c, {a},
                      [c](Node& n) { detail::accum(*n.parents[0], n.grad * c); });
}

inline Var add_scalar(const Var& a, double c) {
  return detail::make((a.val().array() + c).matrix(), {a},
                      [](Node& n) { detail::accum(*n.parents[0], n.grad); });
}

inline Var matmul(const Var& a, const Var& b) {
  return detail::make(a.val() * b.val(), {a, b}, [](Node& n) {
    detail::accum(*n.parents[0], n.grad * n.parents[1]->val.transpose());
    detail::accum(*n.parents[1], n.parents[0]->val.transpose() * n.grad);
  });
}

/// a * b^T without materializing a transpose node.
inline Var matmul_nt(const Var& a, const Var& b) {
  return detail::make(a.val() * b.val().transpose(), {a, b}, [](Node& n) {
    detail::accum(*n.parents[0], n.grad * n.parents[1]->val);
    detail::accum(*n.parents[1], n.grad.transpose() * n.parents[0]->val);
  });
}

/// Broadcast a 1 x d row vector over every row of a.
inline Var add_rowvec(const Var& a, const Var& b) {
  if (b.val().rows() != 1 || a.val().cols() != b.val().cols())
    throw CasftError("add_rowvec: bias must be 1 x cols(a)");
  Mat out = a.val();
  out.rowwise() += b.val().row(0);
  return detail::make(std::move(out), {a, b}, [](Node& n) {
    detail::accum(*n.parents[0], n.grad);
    detail::accum(*n.parents[1], n.grad.colwise().sum());
  });
}

inline Var tanh_(const Var& a) {
  Mat y = a.val().array().tanh().matrix();
  return detail::make(std::move(y), {a}, [](Node& n) {
    detail::accum(*n.parents[0], n.grad.cwiseProduct((1.0 - n.val.array().square()).matrix()));
  });
}

inline Var sigmoid(const Var& a) {
  Mat y = a.val().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  return detail::make(std::move(y), {a}, [](Node& n) {
    detail::accum(*n.parents[0],
                  n.grad.cwiseProduct(n.val.cwiseProduct((1.0 - n.val.array()).matrix())));
  });
}

inline Var relu(const Var& a) {
  Mat y = a.val().cwiseMax(0.0);
  return detail::make(y, {a}, [](Node& n) {
    const Mat mask = (n.parents[0]->val.array() > 0.0).cast<double>();
    detail::accum(*n.parents[0], n.grad.cwiseProduct(mask));
  });
}

inline double softplus_scalar(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

inline Var softplus(const Var& a) {
  Mat y = a.val().unaryExpr([](double x) { return softplus_scalar(x); });
  return detail::make(y, {a}, [](Node& n) {
    const Mat s = n.parents[0]->val.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    detail::accum(*n.parents[0], n.grad.cwiseProduct(s));
  });
}

inline Var exp_(const Var& a) {
  Mat y = a.val().array().exp().matrix();
  return detail::make(std::move(y), {a}, [](Node& n) {
    detail::accum(*n.parents[0], n.grad.cwiseProduct(n.val));
  });
}

inline Var log_(const Var& a) {
  return detail::make(a.val().array().log().matrix(), {a}, [](Node& n) {
    detail::accum(*n.parents[0], n.grad.cwiseQuotient(n.parents[0]->val));
  });
}

/// Row-wise softmax; used with an additive mask for causal attention.
inline Var softmax_rows(const Var& a) {
  Mat y = a.val();
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const double m = y.row(i).maxCoeff();
    y.row(i) = (y.row(i).array() - m).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  return detail::make(std::move(y), {a}, [](Node& n) {
    Mat gx(n.val.rows(), n.val.cols());
    for (Eigen::Index i = 0; i < n.val.rows(); ++i) {
      const double dot = n.grad.row(i).dot(n.val.row(i));
      gx.row(i) = ((n.grad.row(i).array() - dot) * n.val.row(i).array()).matrix();
    }
    detail::accum(*n.parents[0], gx);
  });
}

inline Var concat_cols(const Var& a, const Var& b) {
  if (a.val().rows() != b.val().rows()) throw CasftError("concat_cols: row mismatch");
  Mat out(a.val().rows(), a.val().cols() + b.val().cols());
  out << a.val(), b.val();
  return detail::make(std::move(out), {a, b}, [](Node& n) {
    const auto ca = n.parents[0]->val.cols();
    detail::accum(*n.parents[0], n.grad.leftCols(ca));
    detail::accum(*n.parents[1], n.grad.rightCols(n.grad.cols() - ca));
  });
}

inline Var concat_rows(const Var& a, const Var& b) {
  if (a.val().cols() != b.val().cols()) throw CasftError("concat_rows: column mismatch");
  Mat out(a.val().rows() + b.val().rows(), a.val().cols());
  out << a.val(), b.val();
  return detail::make(std::move(out), {a, b}, [](Node& n) {
    const auto ra = n.parents[0]->val.rows();
    detail::accum(*n.parents[0], n.grad.topRows(ra));
    detail::accum(*n.parents[1], n.grad.bottomRows(n.grad.rows() - ra));
  });
}

inline Var slice_cols(const Var& a, Eigen::Index from, Eigen::Index count) {
  return detail::make(a.val().middleCols(from, count), {a}, [from, count](Node& n) {
    Mat g = Mat::Zero(n.parents[0]->val.rows(), n.parents[0]->val.cols());
    g.middleCols(from, count) = n.grad;
    detail::accum(*n.parents[0], g);
  });
}

inline Var slice_rows(const Var& a, Eigen::Index from, Eigen::Index count) {
  return detail::make(a.val().middleRows(from, count), {a}, [from, count](Node& n) {
    Mat g = Mat::Zero(n.parents[0]->val.rows(), n.parents[0]->val.cols());
    g.middleRows(from, count) = n.grad;
    detail::accum(*n.parents[0], g);
  });
}

inline Var row(const Var& a, Eigen::Index i) {
  return detail::make(a.val().row(i), {a}, [i](Node& n) {
    Mat g = Mat::Zero(n.parents[0]->val.rows(), n.parents[0]->val.cols());
    g.row(i) = n.grad;
    detail::accum(*n.parents[0], g);
  });
}

inline Var sum_all(const Var& a) {
  Mat s(1, 1);
  s(0, 0) = a.val().sum();
  return detail::make(std::move(s), {a}, [](Node& n) {
    detail::accum(*n.parents[0],
                  Mat::Constant(n.parents[0]->val.rows(), n.parents[0]->val.cols(), n.grad(0, 0)));
  });
}

/// Squared Frobenius norm as a 1x1 value.
inline Var sumsq(const Var& a) {
  Mat s(1, 1);
  s(0, 0) = a.val().squaredNorm();
  return detail::make(std::move(s), {a}, [](Node& n) {
    detail::accum(*n.parents[0], 2.0 * n.grad(0, 0) * n.parents[0]->val);
  });
}

inline Var square(const Var& a) { return mul(a, a); }

}  // namespace casft::ad
