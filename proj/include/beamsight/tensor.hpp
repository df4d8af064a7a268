#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "beamsight/errors.hpp"

namespace beamsight {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace detail {

struct GraphNode;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty == absent
  bool requires_grad = false;
  std::shared_ptr<GraphNode> node;  // producing op, when recorded

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

struct GraphNode {
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::weak_ptr<TensorImpl> output;
  std::function<void(TensorImpl&)> backprop;
  bool consumed = false;
};

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

// Suspends graph recording (forward values are still computed).
struct NoGradGuard {
  NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev_; }

 private:
  bool prev_;
};

// Dense row-major f64 tensor participating in reverse-mode differentiation.
// Value-semantic handle: copies share the underlying buffer.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), 0.0, requires_grad);
  }

  static Tensor filled(Shape shape, double value, bool requires_grad = false) {
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data.assign(shape_numel(impl->shape), value);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
  }

  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
    if (shape_numel(shape) != data.size())
      throw std::invalid_argument("Tensor::from: shape " + shape_str(shape) +
                                  " does not match data length " + std::to_string(data.size()));
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape[i]; }

  std::vector<double>& data() { return impl_->data; }
  const std::vector<double>& data() const { return impl_->data; }
  double value() const {
    if (numel() != 1) throw std::invalid_argument("Tensor::value: tensor is not scalar");
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  bool has_grad() const { return !impl_->grad.empty(); }
  const std::vector<double>& grad() const {
    if (impl_->grad.empty()) throw std::runtime_error("Tensor::grad: gradient not populated");
    return impl_->grad;
  }
  std::vector<double>& grad_buffer() {
    impl_->ensure_grad();
    return impl_->grad;
  }
  void zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
  }

  // Detached deep copy (no graph, preserves requires_grad flag on request).
  Tensor clone(bool requires_grad = false) const {
    return from(impl_->shape, impl_->data, requires_grad);
  }

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;

  friend Tensor make_op_result(Shape shape, std::vector<double> data,
                               const std::vector<Tensor>& inputs,
                               std::function<void(detail::TensorImpl&)> backprop);
};

inline Tensor make_op_result(Shape shape, std::vector<double> data,
                             const std::vector<Tensor>& inputs,
                             std::function<void(detail::TensorImpl&)> backprop) {
  Tensor out = Tensor::from(std::move(shape), std::move(data));
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (needs && detail::grad_mode()) {
    out.impl_->requires_grad = true;
    auto node = std::make_shared<detail::GraphNode>();
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(in.impl());
    node->output = out.impl_;
    node->backprop = std::move(backprop);
    out.impl_->node = std::move(node);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reverse pass. The record is define-by-run and consumable exactly once.
// ---------------------------------------------------------------------------

inline void backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw std::invalid_argument("backward: root must be a scalar tensor");
  auto root = loss.impl();
  if (!root->node) {
    // Leaf scalar: nothing upstream, just seed its own grad.
    if (root->requires_grad) {
      root->ensure_grad();
      root->grad[0] += 1.0;
    }
    return;
  }

  // Topological order (producers first) over the reachable record.
  std::vector<detail::GraphNode*> order;
  std::unordered_set<detail::GraphNode*> seen;
  std::vector<std::pair<detail::GraphNode*, std::size_t>> stack;
  stack.emplace_back(root->node.get(), 0);
  seen.insert(root->node.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->consumed)
      throw std::runtime_error("backward: computation record already consumed");
    bool descended = false;
    while (next < node->inputs.size()) {
      auto* child = node->inputs[next].get() ? node->inputs[next]->node.get() : nullptr;
      ++next;
      if (child && !seen.count(child)) {
        seen.insert(child);
        stack.emplace_back(child, 0);
        descended = true;
        break;
      }
    }
    if (!descended && (stack.back().second >= stack.back().first->inputs.size())) {
      order.push_back(stack.back().first);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::GraphNode* node = *it;
    node->consumed = true;
    auto out = node->output.lock();
    if (!out) continue;
    if (out->grad.empty()) continue;  // nothing flowed into this branch
    node->backprop(*out);
  }
}

// ---------------------------------------------------------------------------
// Shape checks
// ---------------------------------------------------------------------------

namespace detail {
inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  const auto& da = a.data();
  const auto& db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] + db[i];
  return make_op_result(a.shape(), std::move(out), {a, b}, [](detail::TensorImpl& o) {
    auto& node = *o.node;
    for (int k = 0; k < 2; ++k) {
      auto& in = *node.inputs[k];
      if (!in.requires_grad && !in.node) continue;
      in.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) in.grad[i] += o.grad[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  const auto& da = a.data();
  const auto& db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] - db[i];
  return make_op_result(a.shape(), std::move(out), {a, b}, [](detail::TensorImpl& o) {
    auto& node = *o.node;
    {
      auto& in = *node.inputs[0];
      if (in.requires_grad || in.node) {
        in.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) in.grad[i] += o.grad[i];
      }
    }
    {
      auto& in = *node.inputs[1];
      if (in.requires_grad || in.node) {
        in.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) in.grad[i] -= o.grad[i];
      }
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto& da = a.data();
  const auto& db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i];
  return make_op_result(a.shape(), std::move(out), {a, b}, [](detail::TensorImpl& o) {
    auto& node = *o.node;
    auto& ia = *node.inputs[0];
    auto& ib = *node.inputs[1];
    if (ia.requires_grad || ia.node) {
      ia.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) ia.grad[i] += o.grad[i] * ib.data[i];
    }
    if (ib.requires_grad || ib.node) {
      ib.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) ib.grad[i] += o.grad[i] * ia.data[i];
    }
  });
}

inline Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.numel());
  const auto& da = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * c;
  return make_op_result(a.shape(), std::move(out), {a}, [c](detail::TensorImpl& o) {
    auto& in = *o.node->inputs[0];
    in.ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) in.grad[i] += o.grad[i] * c;
  });
}

// x: [..., D], bias: [D]; the only broadcast in the library.
inline Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || x.rank() < 1 || x.shape().back() != bias.dim(0))
    throw std::invalid_argument("add_bias: bias " + shape_str(bias.shape()) +
                                " incompatible with " + shape_str(x.shape()));
  const std::size_t d = bias.dim(0);
  std::vector<double> out(x.numel());
  const auto& dx = x.data();
  const auto& db = bias.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = dx[i] + db[i % d];
  return make_op_result(x.shape(), std::move(out), {x, bias}, [d](detail::TensorImpl& o) {
    auto& ix = *o.node->inputs[0];
    auto& ib = *o.node->inputs[1];
    if (ix.requires_grad || ix.node) {
      ix.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) ix.grad[i] += o.grad[i];
    }
    if (ib.requires_grad || ib.node) {
      ib.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) ib.grad[i % d] += o.grad[i];
    }
  });
}

inline Tensor relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  const auto& dx = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = dx[i] > 0.0 ? dx[i] : 0.0;
  return make_op_result(x.shape(), std::move(out), {x}, [](detail::TensorImpl& o) {
    auto& in = *o.node->inputs[0];
    in.ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i)
      if (in.data[i] > 0.0) in.grad[i] += o.grad[i];
  });
}

inline Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.numel());
  const auto& dx = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-dx[i]));
  return make_op_result(x.shape(), std::move(out), {x}, [](detail::TensorImpl& o) {
    auto& in = *o.node->inputs[0];
    in.ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const double y = o.data[i];
      in.grad[i] += o.grad[i] * y * (1.0 - y);
    }
  });
}

// ---------------------------------------------------------------------------
// Structural ops
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw std::invalid_argument("reshape: element count mismatch " + shape_str(x.shape()) +
                                " -> " + shape_str(shape));
  return make_op_result(std::move(shape), x.data(), {x}, [](detail::TensorImpl& o) {
    auto& in = *o.node->inputs[0];
    in.ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) in.grad[i] += o.grad[i];
  });
}

namespace detail {
inline std::vector<std::size_t> row_major_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}
}  // namespace detail

// General axis permutation; out[i0,..,ik] = in[i_perm[0],..] style reorder.
inline Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const std::size_t r = x.rank();
  if (axes.size() != r) throw std::invalid_argument("permute: axes rank mismatch");
  std::vector<bool> used(r, false);
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (axes[i] >= r || used[axes[i]]) throw std::invalid_argument("permute: invalid axes");
    used[axes[i]] = true;
    out_shape[i] = x.dim(axes[i]);
  }
  const auto in_strides = detail::row_major_strides(x.shape());
  const auto out_strides = detail::row_major_strides(out_shape);
  // gather index map: out flat index -> in flat index
  auto map = std::make_shared<std::vector<std::size_t>>(x.numel());
  const std::size_t n = x.numel();
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t of = 0; of < n; ++of) {
    std::size_t rem = of, inf = 0;
    for (std::size_t i = 0; i < r; ++i) {
      const std::size_t c = rem / out_strides[i];
      rem %= out_strides[i];
      inf += c * in_strides[axes[i]];
    }
    (*map)[of] = inf;
  }
  std::vector<double> out(n);
  const auto& dx = x.data();
  for (std::size_t of = 0; of < n; ++of) out[of] = dx[(*map)[of]];
  return make_op_result(std::move(out_shape), std::move(out), {x},
                        [map](detail::TensorImpl& o) {
                          auto& in = *o.node->inputs[0];
                          in.ensure_grad();
                          for (std::size_t of = 0; of < o.grad.size(); ++of)
                            in.grad[(*map)[of]] += o.grad[of];
                        });
}

inline Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw std::invalid_argument("transpose: rank-2 tensor required");
  return permute(x, {1, 0});
}

// Concatenate along axis 0; all inputs share trailing dims.
inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty input list");
  Shape tail = parts[0].shape();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.rank() != tail.size())
      throw std::invalid_argument("concat_rows: rank mismatch");
    for (std::size_t i = 1; i < tail.size(); ++i)
      if (p.dim(i) != tail[i]) throw std::invalid_argument("concat_rows: trailing dim mismatch");
    rows += p.dim(0);
  }
  Shape out_shape = tail;
  out_shape[0] = rows;
  std::vector<double> out;
  out.reserve(shape_numel(out_shape));
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_op_result(std::move(out_shape), std::move(out), parts, [](detail::TensorImpl& o) {
    std::size_t offset = 0;
    for (auto& inp : o.node->inputs) {
      auto& in = *inp;
      const std::size_t n = in.data.size();
      if (in.requires_grad || in.node) {
        in.ensure_grad();
        for (std::size_t i = 0; i < n; ++i) in.grad[i] += o.grad[offset + i];
      }
      offset += n;
    }
  });
}

// Concatenate rank-2 tensors along the feature axis.
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty input list");
  const std::size_t rows = parts[0].dim(0);
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != rows)
      throw std::invalid_argument("concat_cols: rank-2 tensors with equal row counts required");
    cols += p.dim(1);
  }
  std::vector<double> out(rows * cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t d = p.dim(1);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(p.data().begin() + r * d, d, out.begin() + r * cols + off);
    off += d;
  }
  return make_op_result({rows, cols}, std::move(out), parts, [rows, cols](detail::TensorImpl& o) {
    std::size_t off = 0;
    for (auto& inp : o.node->inputs) {
      auto& in = *inp;
      const std::size_t d = in.shape[1];
      if (in.requires_grad || in.node) {
        in.ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) in.grad[r * d + j] += o.grad[r * cols + off + j];
      }
      off += d;
    }
  });
}

inline Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count) {
  if (x.rank() < 1 || start + count > x.dim(0))
    throw std::invalid_argument("slice_rows: range out of bounds");
  const std::size_t row = x.numel() / x.dim(0);
  Shape out_shape = x.shape();
  out_shape[0] = count;
  std::vector<double> out(x.data().begin() + start * row,
                          x.data().begin() + (start + count) * row);
  return make_op_result(std::move(out_shape), std::move(out), {x},
                        [start, row](detail::TensorImpl& o) {
                          auto& in = *o.node->inputs[0];
                          in.ensure_grad();
                          for (std::size_t i = 0; i < o.grad.size(); ++i)
                            in.grad[start * row + i] += o.grad[i];
                        });
}

// out[i, ...] = x[index[i], ...]; duplicate indices accumulate on backprop.
inline Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& index) {
  if (x.rank() < 1) throw std::invalid_argument("gather_rows: rank >= 1 required");
  const std::size_t row = x.numel() / x.dim(0);
  for (auto i : index)
    if (i >= x.dim(0)) throw std::invalid_argument("gather_rows: index out of range");
  Shape out_shape = x.shape();
  out_shape[0] = index.size();
  std::vector<double> out(index.size() * row);
  const auto& dx = x.data();
  for (std::size_t i = 0; i < index.size(); ++i)
    std::copy_n(dx.begin() + index[i] * row, row, out.begin() + i * row);
  auto idx = std::make_shared<std::vector<std::size_t>>(index);
  return make_op_result(std::move(out_shape), std::move(out), {x},
                        [idx, row](detail::TensorImpl& o) {
                          auto& in = *o.node->inputs[0];
                          in.ensure_grad();
                          for (std::size_t i = 0; i < idx->size(); ++i)
                            for (std::size_t j = 0; j < row; ++j)
                              in.grad[(*idx)[i] * row + j] += o.grad[i * row + j];
                        });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_op_result({1}, {s}, {x}, [](detail::TensorImpl& o) {
    auto& in = *o.node->inputs[0];
    in.ensure_grad();
    for (auto& g : in.grad) g += o.grad[0];
  });
}

inline Tensor mean_all(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.numel());
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_op_result({1}, {s * inv}, {x}, [inv](detail::TensorImpl& o) {
    auto& in = *o.node->inputs[0];
    in.ensure_grad();
    for (auto& g : in.grad) g += o.grad[0] * inv;
  });
}

// [S, D] -> [1, D]
inline Tensor mean_rows(const Tensor& x) {
  if (x.rank() != 2) throw std::invalid_argument("mean_rows: rank-2 tensor required");
  const std::size_t s = x.dim(0), d = x.dim(1);
  const double inv = 1.0 / static_cast<double>(s);
  std::vector<double> out(d, 0.0);
  const auto& dx = x.data();
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += dx[i * d + j];
  for (auto& v : out) v *= inv;
  return make_op_result({1, d}, std::move(out), {x}, [s, d, inv](detail::TensorImpl& o) {
    auto& in = *o.node->inputs[0];
    in.ensure_grad();
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < d; ++j) in.grad[i * d + j] += o.grad[j] * inv;
  });
}

// [N, D] -> [N/g, D], mean over consecutive groups of g rows.
inline Tensor mean_pool_rows(const Tensor& x, std::size_t g) {
  if (x.rank() != 2) throw std::invalid_argument("mean_pool_rows: rank-2 tensor required");
  if (g == 0 || x.dim(0) % g != 0)
    throw std::invalid_argument("mean_pool_rows: group size must divide row count");
  const std::size_t n = x.dim(0) / g, d = x.dim(1);
  const double inv = 1.0 / static_cast<double>(g);
  std::vector<double> out(n * d, 0.0);
  const auto& dx = x.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < g; ++k)
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] += dx[(i * g + k) * d + j] * inv;
  return make_op_result({n, d}, std::move(out), {x}, [n, g, d, inv](detail::TensorImpl& o) {
    auto& in = *o.node->inputs[0];
    in.ensure_grad();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < g; ++k)
        for (std::size_t j = 0; j < d; ++j)
          in.grad[(i * g + k) * d + j] += o.grad[i * d + j] * inv;
  });
}

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

namespace detail {
// C[m x n] += A[m x k] * B[k x n]
inline void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                     std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}
// C[m x n] += A[m x k] * B^T (B is [n x k])
inline void gemm_bt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                        std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}
// C[k x n] += A^T (A is [m x k]) * B[m x n]
inline void gemm_at_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                        std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}
}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw std::invalid_argument("matmul: rank-2 tensors required");
  if (a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: inner dimensions disagree " + shape_str(a.shape()) +
                                " * " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  detail::gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_op_result({m, n}, std::move(out), {a, b}, [m, k, n](detail::TensorImpl& o) {
    auto& ia = *o.node->inputs[0];
    auto& ib = *o.node->inputs[1];
    if (ia.requires_grad || ia.node) {
      ia.ensure_grad();
      detail::gemm_bt_acc(o.grad.data(), ib.data.data(), ia.grad.data(), m, n, k);
    }
    if (ib.requires_grad || ib.node) {
      ib.ensure_grad();
      detail::gemm_at_acc(ia.data.data(), o.grad.data(), ib.grad.data(), m, k, n);
    }
  });
}

// Batched matmul: [B, m, k] x [B, k, n] -> [B, m, n]
inline Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3)
    throw std::invalid_argument("bmm: rank-3 tensors required");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
    throw std::invalid_argument("bmm: dimensions disagree " + shape_str(a.shape()) + " * " +
                                shape_str(b.shape()));
  const std::size_t bb = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  std::vector<double> out(bb * m * n, 0.0);
  for (std::size_t i = 0; i < bb; ++i)
    detail::gemm_acc(a.data().data() + i * m * k, b.data().data() + i * k * n,
                     out.data() + i * m * n, m, k, n);
  return make_op_result({bb, m, n}, std::move(out), {a, b},
                        [bb, m, k, n](detail::TensorImpl& o) {
                          auto& ia = *o.node->inputs[0];
                          auto& ib = *o.node->inputs[1];
                          if (ia.requires_grad || ia.node) {
                            ia.ensure_grad();
                            for (std::size_t i = 0; i < bb; ++i)
                              detail::gemm_bt_acc(o.grad.data() + i * m * n,
                                                  ib.data.data() + i * k * n,
                                                  ia.grad.data() + i * m * k, m, n, k);
                          }
                          if (ib.requires_grad || ib.node) {
                            ib.ensure_grad();
                            for (std::size_t i = 0; i < bb; ++i)
                              detail::gemm_at_acc(ia.data.data() + i * m * k,
                                                  o.grad.data() + i * m * n,
                                                  ib.grad.data() + i * k * n, m, k, n);
                          }
                        });
}

// x: [..., Din] * w: [Din, Dout] (+ optional bias [Dout]) -> [..., Dout]
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias = Tensor()) {
  if (w.rank() != 2 || x.rank() < 1 || x.shape().back() != w.dim(0))
    throw std::invalid_argument("linear: weight " + shape_str(w.shape()) +
                                " incompatible with input " + shape_str(x.shape()));
  const std::size_t din = w.dim(0), dout = w.dim(1);
  const std::size_t rows = x.numel() / din;
  std::vector<double> out(rows * dout, 0.0);
  detail::gemm_acc(x.data().data(), w.data().data(), out.data(), rows, din, dout);
  const bool with_bias = bias.defined();
  if (with_bias) {
    if (bias.rank() != 1 || bias.dim(0) != dout)
      throw std::invalid_argument("linear: bias shape mismatch");
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < dout; ++j) out[i * dout + j] += bias.data()[j];
  }
  Shape out_shape = x.shape();
  out_shape.back() = dout;
  std::vector<Tensor> inputs = {x, w};
  if (with_bias) inputs.push_back(bias);
  return make_op_result(
      std::move(out_shape), std::move(out), inputs,
      [rows, din, dout, with_bias](detail::TensorImpl& o) {
        auto& ix = *o.node->inputs[0];
        auto& iw = *o.node->inputs[1];
        if (ix.requires_grad || ix.node) {
          ix.ensure_grad();
          detail::gemm_bt_acc(o.grad.data(), iw.data.data(), ix.grad.data(), rows, dout, din);
        }
        if (iw.requires_grad || iw.node) {
          iw.ensure_grad();
          detail::gemm_at_acc(ix.data.data(), o.grad.data(), iw.grad.data(), rows, din, dout);
        }
        if (with_bias) {
          auto& ib = *o.node->inputs[2];
          if (ib.requires_grad || ib.node) {
            ib.ensure_grad();
            for (std::size_t i = 0; i < rows; ++i)
              for (std::size_t j = 0; j < dout; ++j) ib.grad[j] += o.grad[i * dout + j];
          }
        }
      });
}

}  // namespace beamsight
