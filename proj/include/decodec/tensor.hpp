// Dense 2-D tensors with reverse-mode differentiation on a dynamic tape.
//
// Every quantity in the codec is a frames-by-channels matrix (waveforms are
// T x 1), so the tensor type wraps an Eigen matrix and records, per node, the
// parents and a closure that pushes the node's gradient into them. backward()
// walks the tape in reverse topological order. Leaves created with
// requires_grad keep their accumulated gradient for the optimizer; everything
// else is freed with the graph.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

namespace decodec {

template <typename Scalar>
struct TensorNodeT {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Mat value;
  Mat grad;  // empty until first accumulation
  bool requires_grad = false;
  bool needs_grad = false;  // true if this node or any ancestor requires grad
  std::vector<std::shared_ptr<TensorNodeT>> parents;
  std::function<void(TensorNodeT&)> backward_fn;

  void accumulate(const Mat& g) {
    if (grad.size() == 0) grad = Mat::Zero(value.rows(), value.cols());
    grad += g;
  }
};

// Value-semantics handle to a shared tape node.
template <typename Scalar>
class TensorT {
 public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Node = TensorNodeT<Scalar>;

  TensorT() = default;
  explicit TensorT(Mat v, bool requires_grad = false) : n_(std::make_shared<Node>()) {
    n_->value = std::move(v);
    n_->requires_grad = requires_grad;
    n_->needs_grad = requires_grad;
  }

  static TensorT zeros(Eigen::Index r, Eigen::Index c, bool requires_grad = false) {
    return TensorT(Mat::Zero(r, c), requires_grad);
  }
  static TensorT constant(Eigen::Index r, Eigen::Index c, Scalar v) {
    return TensorT(Mat::Constant(r, c, v));
  }
  static TensorT scalar_of(Scalar v) { return constant(1, 1, v); }

  bool defined() const { return n_ != nullptr; }
  Eigen::Index rows() const { return n_->value.rows(); }
  Eigen::Index cols() const { return n_->value.cols(); }
  Eigen::Index size() const { return n_->value.size(); }

  const Mat& value() const { return n_->value; }
  Mat& mutable_value() { return n_->value; }

  bool has_grad() const { return n_->grad.size() > 0; }
  const Mat& grad() const {
    if (!has_grad()) throw std::runtime_error("tensor has no accumulated gradient");
    return n_->grad;
  }
  void zero_grad() { n_->grad.resize(0, 0); }

  bool requires_grad() const { return n_->requires_grad; }
  bool needs_grad() const { return n_ && n_->needs_grad; }

  Scalar scalar() const {
    if (rows() != 1 || cols() != 1) throw std::runtime_error("tensor is not a scalar");
    return n_->value(0, 0);
  }

  std::shared_ptr<Node> node() const { return n_; }

  // Reverse pass from a 1x1 root. Accumulates into every reachable node that
  // needs a gradient; leaf gradients persist until zero_grad().
  void backward() const {
    if (rows() != 1 || cols() != 1)
      throw std::runtime_error("backward() requires a scalar root");
    std::vector<Node*> order;
    topo_sort(order);
    n_->accumulate(Mat::Ones(1, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* node = *it;
      if (!node->needs_grad || !node->backward_fn) continue;
      if (node->grad.size() == 0) continue;  // unreached branch
      node->backward_fn(*node);
    }
  }

 private:
  void topo_sort(std::vector<Node*>& order) const {
    std::unordered_set<Node*> visited;
    // Iterative DFS; second visit emits the node.
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(n_.get(), 0);
    visited.insert(n_.get());
    while (!stack.empty()) {
      auto& [node, idx] = stack.back();
      if (idx < node->parents.size()) {
        Node* p = node->parents[idx++].get();
        if (p->needs_grad && !visited.count(p)) {
          visited.insert(p);
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<Node> n_;
};

using Tensor = TensorT<double>;

namespace detail {

template <typename S>
TensorT<S> make_op(typename TensorT<S>::Mat value,
                   std::vector<TensorT<S>> parents,
                   std::function<void(TensorNodeT<S>&)> backward_fn) {
  TensorT<S> out(std::move(value));
  auto n = out.node();
  bool needs = false;
  for (const auto& p : parents) {
    n->parents.push_back(p.node());
    needs = needs || p.needs_grad();
  }
  n->needs_grad = needs;
  if (needs) n->backward_fn = std::move(backward_fn);
  return out;
}

template <typename S>
void check_same_shape(const TensorT<S>& a, const TensorT<S>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and linear-algebra ops
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  detail::check_same_shape(a, b, "add");
  return detail::make_op<S>(a.value() + b.value(), {a, b}, [](TensorNodeT<S>& n) {
    if (n.parents[0]->needs_grad) n.parents[0]->accumulate(n.grad);
    if (n.parents[1]->needs_grad) n.parents[1]->accumulate(n.grad);
  });
}

template <typename S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
  detail::check_same_shape(a, b, "sub");
  return detail::make_op<S>(a.value() - b.value(), {a, b}, [](TensorNodeT<S>& n) {
    if (n.parents[0]->needs_grad) n.parents[0]->accumulate(n.grad);
    if (n.parents[1]->needs_grad) n.parents[1]->accumulate(-n.grad);
  });
}

template <typename S>
TensorT<S> cmul(const TensorT<S>& a, const TensorT<S>& b) {
  detail::check_same_shape(a, b, "cmul");
  return detail::make_op<S>(a.value().cwiseProduct(b.value()), {a, b},
                            [](TensorNodeT<S>& n) {
    if (n.parents[0]->needs_grad)
      n.parents[0]->accumulate(n.grad.cwiseProduct(n.parents[1]->value));
    if (n.parents[1]->needs_grad)
      n.parents[1]->accumulate(n.grad.cwiseProduct(n.parents[0]->value));
  });
}

template <typename S>
TensorT<S> cdiv(const TensorT<S>& a, const TensorT<S>& b) {
  detail::check_same_shape(a, b, "cdiv");
  return detail::make_op<S>(a.value().cwiseQuotient(b.value()), {a, b},
                            [](TensorNodeT<S>& n) {
    const auto& bv = n.parents[1]->value;
    if (n.parents[0]->needs_grad) n.parents[0]->accumulate(n.grad.cwiseQuotient(bv));
    if (n.parents[1]->needs_grad)
      n.parents[1]->accumulate(
          (-n.grad.array() * n.value.array() / bv.array()).matrix());
  });
}

template <typename S>
TensorT<S> scale(const TensorT<S>& a, S s) {
  return detail::make_op<S>(a.value() * s, {a}, [s](TensorNodeT<S>& n) {
    n.parents[0]->accumulate(n.grad * s);
  });
}

template <typename S>
TensorT<S> add_scalar(const TensorT<S>& a, S s) {
  return detail::make_op<S>(a.value().array() + s, {a}, [](TensorNodeT<S>& n) {
    n.parents[0]->accumulate(n.grad);
  });
}

template <typename S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  return detail::make_op<S>(a.value() * b.value(), {a, b}, [](TensorNodeT<S>& n) {
    if (n.parents[0]->needs_grad)
      n.parents[0]->accumulate(n.grad * n.parents[1]->value.transpose());
    if (n.parents[1]->needs_grad)
      n.parents[1]->accumulate(n.parents[0]->value.transpose() * n.grad);
  });
}

template <typename S>
TensorT<S> transpose(const TensorT<S>& a) {
  return detail::make_op<S>(a.value().transpose(), {a}, [](TensorNodeT<S>& n) {
    n.parents[0]->accumulate(n.grad.transpose());
  });
}

// Broadcast a 1xC row vector over every row of a TxC tensor.
template <typename S>
TensorT<S> rowwise_add(const TensorT<S>& a, const TensorT<S>& row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw std::invalid_argument("rowwise_add: bias must be 1 x cols");
  return detail::make_op<S>(a.value().rowwise() + row.value().row(0), {a, row},
                            [](TensorNodeT<S>& n) {
    if (n.parents[0]->needs_grad) n.parents[0]->accumulate(n.grad);
    if (n.parents[1]->needs_grad) n.parents[1]->accumulate(n.grad.colwise().sum());
  });
}

template <typename S>
TensorT<S> rowwise_mul(const TensorT<S>& a, const TensorT<S>& row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw std::invalid_argument("rowwise_mul: weights must be 1 x cols");
  return detail::make_op<S>(
      (a.value().array().rowwise() * row.value().row(0).array()).matrix(), {a, row},
      [](TensorNodeT<S>& n) {
        if (n.parents[0]->needs_grad)
          n.parents[0]->accumulate(
              (n.grad.array().rowwise() * n.parents[1]->value.row(0).array()).matrix());
        if (n.parents[1]->needs_grad)
          n.parents[1]->accumulate(
              n.grad.cwiseProduct(n.parents[0]->value).colwise().sum());
      });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> sum(const TensorT<S>& a) {
  typename TensorT<S>::Mat v(1, 1);
  v(0, 0) = a.value().sum();
  return detail::make_op<S>(std::move(v), {a}, [](TensorNodeT<S>& n) {
    const auto& p = n.parents[0];
    p->accumulate(TensorNodeT<S>::Mat::Constant(p->value.rows(), p->value.cols(),
                                                n.grad(0, 0)));
  });
}

template <typename S>
TensorT<S> mean(const TensorT<S>& a) {
  return scale(sum(a), S(1) / static_cast<S>(a.size()));
}

// Sum over columns: TxC -> Tx1.
template <typename S>
TensorT<S> row_sum(const TensorT<S>& a) {
  return detail::make_op<S>(a.value().rowwise().sum(), {a}, [](TensorNodeT<S>& n) {
    const auto& p = n.parents[0];
    p->accumulate(n.grad * TensorNodeT<S>::Mat::Ones(1, p->value.cols()));
  });
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> tanh_op(const TensorT<S>& a) {
  return detail::make_op<S>(a.value().array().tanh(), {a}, [](TensorNodeT<S>& n) {
    n.parents[0]->accumulate(
        (n.grad.array() * (S(1) - n.value.array().square())).matrix());
  });
}

template <typename S>
TensorT<S> sigmoid_op(const TensorT<S>& a) {
  typename TensorT<S>::Mat v =
      (S(1) / (S(1) + (-a.value().array()).exp())).matrix();
  return detail::make_op<S>(std::move(v), {a}, [](TensorNodeT<S>& n) {
    n.parents[0]->accumulate(
        (n.grad.array() * n.value.array() * (S(1) - n.value.array())).matrix());
  });
}

template <typename S>
TensorT<S> log_op(const TensorT<S>& a) {
  return detail::make_op<S>(a.value().array().log(), {a}, [](TensorNodeT<S>& n) {
    n.parents[0]->accumulate(n.grad.cwiseQuotient(n.parents[0]->value));
  });
}

template <typename S>
TensorT<S> sqrt_op(const TensorT<S>& a) {
  return detail::make_op<S>(a.value().array().sqrt(), {a}, [](TensorNodeT<S>& n) {
    n.parents[0]->accumulate(
        (n.grad.array() / (S(2) * n.value.array())).matrix());
  });
}

template <typename S>
TensorT<S> abs_op(const TensorT<S>& a) {
  return detail::make_op<S>(a.value().array().abs(), {a}, [](TensorNodeT<S>& n) {
    n.parents[0]->accumulate(
        (n.grad.array() * n.parents[0]->value.array().sign()).matrix());
  });
}

// log(1 + exp(x)), numerically stable; derivative is sigmoid(x).
template <typename S>
TensorT<S> softplus(const TensorT<S>& a) {
  auto sp = [](S x) {
    return x > S(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  };
  typename TensorT<S>::Mat v = a.value().unaryExpr(sp);
  return detail::make_op<S>(std::move(v), {a}, [](TensorNodeT<S>& n) {
    auto sig = (S(1) / (S(1) + (-n.parents[0]->value.array()).exp()));
    n.parents[0]->accumulate((n.grad.array() * sig).matrix());
  });
}

// max(a, floor) elementwise; gradient passes only where a > floor.
template <typename S>
TensorT<S> cmax_scalar(const TensorT<S>& a, S floor) {
  return detail::make_op<S>(a.value().cwiseMax(floor), {a}, [floor](TensorNodeT<S>& n) {
    n.parents[0]->accumulate(
        (n.grad.array() * (n.parents[0]->value.array() > floor).template cast<S>())
            .matrix());
  });
}

// ---------------------------------------------------------------------------
// Structural ops
// ---------------------------------------------------------------------------

// Detached copy: forward value, no gradient path.
template <typename S>
TensorT<S> stopgrad(const TensorT<S>& a) {
  return TensorT<S>(a.value());
}

template <typename S>
TensorT<S> gather_rows(const TensorT<S>& table, std::vector<int> idx) {
  typename TensorT<S>::Mat v(static_cast<Eigen::Index>(idx.size()), table.cols());
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= table.rows())
      throw std::out_of_range("gather_rows: index out of range");
    v.row(static_cast<Eigen::Index>(i)) = table.value().row(idx[i]);
  }
  return detail::make_op<S>(std::move(v), {table},
                            [idx = std::move(idx)](TensorNodeT<S>& n) {
    const auto& p = n.parents[0];
    typename TensorNodeT<S>::Mat g =
        TensorNodeT<S>::Mat::Zero(p->value.rows(), p->value.cols());
    for (size_t i = 0; i < idx.size(); ++i)
      g.row(idx[i]) += n.grad.row(static_cast<Eigen::Index>(i));
    p->accumulate(g);
  });
}

template <typename S>
TensorT<S> slice_rows(const TensorT<S>& a, Eigen::Index start, Eigen::Index len) {
  if (start < 0 || len < 0 || start + len > a.rows())
    throw std::out_of_range("slice_rows: range out of bounds");
  return detail::make_op<S>(a.value().middleRows(start, len), {a},
                            [start, len](TensorNodeT<S>& n) {
    const auto& p = n.parents[0];
    typename TensorNodeT<S>::Mat g =
        TensorNodeT<S>::Mat::Zero(p->value.rows(), p->value.cols());
    g.middleRows(start, len) = n.grad;
    p->accumulate(g);
  });
}

template <typename S>
TensorT<S> reverse_rows(const TensorT<S>& a) {
  return detail::make_op<S>(a.value().colwise().reverse(), {a}, [](TensorNodeT<S>& n) {
    n.parents[0]->accumulate(n.grad.colwise().reverse());
  });
}

// Sliding windows of a Tx1 signal as an n_frames x window matrix.
template <typename S>
TensorT<S> unfold_frames(const TensorT<S>& x, Eigen::Index window, Eigen::Index hop) {
  if (x.cols() != 1) throw std::invalid_argument("unfold_frames: expected Tx1 input");
  if (x.rows() < window) throw std::invalid_argument("unfold_frames: signal shorter than window");
  const Eigen::Index n = 1 + (x.rows() - window) / hop;
  typename TensorT<S>::Mat v(n, window);
  for (Eigen::Index f = 0; f < n; ++f)
    v.row(f) = x.value().col(0).segment(f * hop, window).transpose();
  return detail::make_op<S>(std::move(v), {x}, [window, hop](TensorNodeT<S>& n_) {
    const auto& p = n_.parents[0];
    typename TensorNodeT<S>::Mat g = TensorNodeT<S>::Mat::Zero(p->value.rows(), 1);
    for (Eigen::Index f = 0; f < n_.grad.rows(); ++f)
      g.col(0).segment(f * hop, window) += n_.grad.row(f).transpose();
    p->accumulate(g);
  });
}

// ---------------------------------------------------------------------------
// Composite helpers
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> mean_abs(const TensorT<S>& a) { return mean(abs_op(a)); }

template <typename S>
TensorT<S> sum_squares(const TensorT<S>& a) { return sum(cmul(a, a)); }

// Per-frame inner products of two TxC tensors -> Tx1.
template <typename S>
TensorT<S> rowwise_dot(const TensorT<S>& a, const TensorT<S>& b) {
  return row_sum(cmul(a, b));
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checker
// ---------------------------------------------------------------------------

// Max over coordinates of |analytic - central difference| /
// max(|analytic|, |fd|, 1e-8). f must return a 1x1 tensor. Double precision.
inline double grad_check(const std::function<Tensor(const Tensor&)>& f,
                         const Eigen::MatrixXd& point, double eps) {
  if (eps < 1e-6 || eps > 1e-3)
    throw std::invalid_argument("grad_check: eps must be in [1e-6, 1e-3]");
  Tensor x(point, /*requires_grad=*/true);
  Tensor loss = f(x);
  if (!std::isfinite(loss.scalar()))
    throw std::runtime_error("grad_check: non-finite value at base point");
  loss.backward();
  Eigen::MatrixXd analytic = x.has_grad()
                                 ? x.grad()
                                 : Eigen::MatrixXd::Zero(point.rows(), point.cols());

  double max_err = 0.0;
  Eigen::MatrixXd probe = point;
  for (Eigen::Index j = 0; j < point.size(); ++j) {
    const double orig = probe(j);
    probe(j) = orig + eps;
    const double fp = f(Tensor(probe)).scalar();
    probe(j) = orig - eps;
    const double fm = f(Tensor(probe)).scalar();
    probe(j) = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("grad_check: non-finite value at probe point");
    const double fd = (fp - fm) / (2.0 * eps);
    const double a = analytic(j);
    const double denom = std::max({std::abs(a), std::abs(fd), 1e-8});
    max_err = std::max(max_err, std::abs(a - fd) / denom);
  }
  return max_err;
}

}  // namespace decodec
