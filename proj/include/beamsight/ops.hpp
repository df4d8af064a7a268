#pragma once

#include <cmath>
#include <limits>

#include "beamsight/tensor.hpp"

namespace beamsight {

// ---------------------------------------------------------------------------
// softmax
// ---------------------------------------------------------------------------

// Numerically stable softmax along `axis` (max subtraction per slice).
inline Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) throw std::invalid_argument("softmax: axis out of range");
  for (double v : x.data())
    if (std::isnan(v)) throw NumericError("softmax: NaN input");
  const auto& shape = x.shape();
  const std::size_t len = shape[axis];
  std::size_t inner = 1, outer = 1;
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];

  std::vector<double> out(x.numel());
  const auto& dx = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, dx[base + k * inner]);
      double sum = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        const double e = std::exp(dx[base + k * inner] - mx);
        out[base + k * inner] = e;
        sum += e;
      }
      const double inv = 1.0 / sum;
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] *= inv;
    }
  }
  return make_op_result(
      x.shape(), std::move(out), {x}, [len, inner, outer](detail::TensorImpl& o) {
        auto& in = *o.node->inputs[0];
        in.ensure_grad();
        for (std::size_t ou = 0; ou < outer; ++ou) {
          for (std::size_t ii = 0; ii < inner; ++ii) {
            const std::size_t base = ou * len * inner + ii;
            double dot = 0.0;
            for (std::size_t k = 0; k < len; ++k)
              dot += o.grad[base + k * inner] * o.data[base + k * inner];
            for (std::size_t k = 0; k < len; ++k) {
              const std::size_t idx = base + k * inner;
              in.grad[idx] += o.data[idx] * (o.grad[idx] - dot);
            }
          }
        }
      });
}

inline Tensor softmax_lastdim(const Tensor& x) { return softmax(x, x.rank() - 1); }

// ---------------------------------------------------------------------------
// layer_norm
// ---------------------------------------------------------------------------

// Standardizes the last axis, then applies per-feature gain and bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps = 1e-5) {
  if (x.rank() < 1) throw std::invalid_argument("layer_norm: rank >= 1 required");
  const std::size_t d = x.shape().back();
  if (d < 2) throw std::invalid_argument("layer_norm: normalized axis length must be >= 2");
  if (gain.rank() != 1 || gain.dim(0) != d || bias.rank() != 1 || bias.dim(0) != d)
    throw std::invalid_argument("layer_norm: gain/bias must be rank-1 of the feature size");
  const std::size_t rows = x.numel() / d;
  std::vector<double> out(x.numel());
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  const auto& dx = x.data();
  const auto& dg = gain.data();
  const auto& db = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = dx.data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = row[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (row[j] - mean) * is;
      (*xhat)[r * d + j] = xh;
      out[r * d + j] = dg[j] * xh + db[j];
    }
  }
  return make_op_result(
      x.shape(), std::move(out), {x, gain, bias},
      [rows, d, xhat, inv_std](detail::TensorImpl& o) {
        auto& ix = *o.node->inputs[0];
        auto& ig = *o.node->inputs[1];
        auto& ib = *o.node->inputs[2];
        const bool need_x = ix.requires_grad || ix.node;
        const bool need_g = ig.requires_grad || ig.node;
        const bool need_b = ib.requires_grad || ib.node;
        if (need_x) ix.ensure_grad();
        if (need_g) ig.ensure_grad();
        if (need_b) ib.ensure_grad();
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* go = o.grad.data() + r * d;
          const double* xh = xhat->data() + r * d;
          const double is = (*inv_std)[r];
          if (need_g)
            for (std::size_t j = 0; j < d; ++j) ig.grad[j] += go[j] * xh[j];
          if (need_b)
            for (std::size_t j = 0; j < d; ++j) ib.grad[j] += go[j];
          if (need_x) {
            // dxhat = g * gain; dx = is * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = go[j] * ig.data[j];
              m1 += dxh;
              m2 += dxh * xh[j];
            }
            m1 *= inv_d;
            m2 *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = go[j] * ig.data[j];
              ix.grad[r * d + j] += is * (dxh - m1 - xh[j] * m2);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// conv2d (cross-correlation semantics)
// ---------------------------------------------------------------------------

// x: [Cin, H, W], w: [Cout, Cin/groups, kh, kw], bias: [Cout] (optional).
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride_h,
                     std::size_t stride_w, std::size_t pad_h, std::size_t pad_w,
                     std::size_t groups = 1) {
  if (x.rank() != 3 || w.rank() != 4) throw std::invalid_argument("conv2d: x [C,H,W], w [O,I,kh,kw]");
  if (stride_h == 0 || stride_w == 0) throw std::invalid_argument("conv2d: stride must be >= 1");
  const std::size_t cin = x.dim(0), h = x.dim(1), ww = x.dim(2);
  const std::size_t cout = w.dim(0), cink = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  if (groups == 0 || cin % groups != 0 || cout % groups != 0 || cink != cin / groups)
    throw std::invalid_argument("conv2d: group/channel mismatch");
  if (h + 2 * pad_h < kh || ww + 2 * pad_w < kw)
    throw std::invalid_argument("conv2d: kernel larger than padded input");
  const std::size_t oh = (h + 2 * pad_h - kh) / stride_h + 1;
  const std::size_t ow = (ww + 2 * pad_w - kw) / stride_w + 1;
  const std::size_t cpg_in = cin / groups, cpg_out = cout / groups;

  std::vector<double> out(cout * oh * ow, 0.0);
  const auto& dx = x.data();
  const auto& dw = w.data();
  for (std::size_t oc = 0; oc < cout; ++oc) {
    const std::size_t g = oc / cpg_out;
    for (std::size_t ic = 0; ic < cpg_in; ++ic) {
      const double* xin = dx.data() + (g * cpg_in + ic) * h * ww;
      const double* ker = dw.data() + ((oc * cpg_in) + ic) * kh * kw;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double acc = 0.0;
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(oy * stride_h + ky) - static_cast<std::ptrdiff_t>(pad_h);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::ptrdiff_t ixp = static_cast<std::ptrdiff_t>(ox * stride_w + kx) -
                                         static_cast<std::ptrdiff_t>(pad_w);
              if (ixp < 0 || ixp >= static_cast<std::ptrdiff_t>(ww)) continue;
              acc += xin[iy * ww + ixp] * ker[ky * kw + kx];
            }
          }
          out[(oc * oh + oy) * ow + ox] += acc;
        }
      }
    }
  }
  const bool with_bias = bias.defined();
  if (with_bias) {
    if (bias.rank() != 1 || bias.dim(0) != cout)
      throw std::invalid_argument("conv2d: bias shape mismatch");
    for (std::size_t oc = 0; oc < cout; ++oc)
      for (std::size_t i = 0; i < oh * ow; ++i) out[oc * oh * ow + i] += bias.data()[oc];
  }

  std::vector<Tensor> inputs = {x, w};
  if (with_bias) inputs.push_back(bias);
  return make_op_result(
      {cout, oh, ow}, std::move(out), inputs,
      [=](detail::TensorImpl& o) {
        auto& ix = *o.node->inputs[0];
        auto& iw = *o.node->inputs[1];
        const bool need_x = ix.requires_grad || ix.node;
        const bool need_w = iw.requires_grad || iw.node;
        if (need_x) ix.ensure_grad();
        if (need_w) iw.ensure_grad();
        for (std::size_t oc = 0; oc < cout; ++oc) {
          const std::size_t g = oc / cpg_out;
          for (std::size_t ic = 0; ic < cpg_in; ++ic) {
            const std::size_t xoff = (g * cpg_in + ic) * h * ww;
            const std::size_t woff = ((oc * cpg_in) + ic) * kh * kw;
            for (std::size_t oy = 0; oy < oh; ++oy) {
              for (std::size_t ox = 0; ox < ow; ++ox) {
                const double go = o.grad[(oc * oh + oy) * ow + ox];
                if (go == 0.0) continue;
                for (std::size_t ky = 0; ky < kh; ++ky) {
                  const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride_h + ky) -
                                            static_cast<std::ptrdiff_t>(pad_h);
                  if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                  for (std::size_t kx = 0; kx < kw; ++kx) {
                    const std::ptrdiff_t ixp = static_cast<std::ptrdiff_t>(ox * stride_w + kx) -
                                               static_cast<std::ptrdiff_t>(pad_w);
                    if (ixp < 0 || ixp >= static_cast<std::ptrdiff_t>(ww)) continue;
                    if (need_x)
                      ix.grad[xoff + iy * ww + ixp] += go * iw.data[woff + ky * kw + kx];
                    if (need_w)
                      iw.grad[woff + ky * kw + kx] += go * ix.data[xoff + iy * ww + ixp];
                  }
                }
              }
            }
          }
        }
        if (with_bias) {
          auto& ib = *o.node->inputs[2];
          if (ib.requires_grad || ib.node) {
            ib.ensure_grad();
            for (std::size_t oc = 0; oc < cout; ++oc)
              for (std::size_t i = 0; i < oh * ow; ++i) ib.grad[oc] += o.grad[oc * oh * ow + i];
          }
        }
      });
}

inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
                     std::size_t pad, std::size_t groups = 1) {
  return conv2d(x, w, bias, stride, stride, pad, pad, groups);
}

// x: [C, H, W] scaled per channel by s: [1, C] (squeeze-excitation gating).
inline Tensor scale_channels(const Tensor& x, const Tensor& s) {
  if (x.rank() != 3 || s.rank() != 2 || s.dim(0) != 1 || s.dim(1) != x.dim(0))
    throw std::invalid_argument("scale_channels: x [C,H,W] with s [1,C] required");
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  std::vector<double> out(x.numel());
  const auto& dx = x.data();
  const auto& ds = s.data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < hw; ++i) out[ch * hw + i] = dx[ch * hw + i] * ds[ch];
  return make_op_result(x.shape(), std::move(out), {x, s}, [c, hw](detail::TensorImpl& o) {
    auto& ix = *o.node->inputs[0];
    auto& is = *o.node->inputs[1];
    if (ix.requires_grad || ix.node) {
      ix.ensure_grad();
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i)
          ix.grad[ch * hw + i] += o.grad[ch * hw + i] * is.data[ch];
    }
    if (is.requires_grad || is.node) {
      is.ensure_grad();
      for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t i = 0; i < hw; ++i) acc += o.grad[ch * hw + i] * ix.data[ch * hw + i];
        is.grad[ch] += acc;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

struct AttentionConfig {
  std::size_t model_dim = 64;
  std::size_t num_heads = 4;
  std::size_t head_dim = 16;

  void validate() const {
    if (model_dim == 0 || num_heads == 0 || head_dim == 0 ||
        model_dim != num_heads * head_dim)
      throw ConfigError("AttentionConfig: model_dim must equal num_heads * head_dim");
  }
};

// softmax(Q K^T * scaling) V for [S, d] or batched [B, S, d] inputs.
inline Tensor scaled_dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                           double scaling) {
  if (q.rank() != k.rank() || k.rank() != v.rank())
    throw std::invalid_argument("attention: rank mismatch");
  if (q.rank() == 2) {
    if (q.dim(1) != k.dim(1) || k.dim(0) != v.dim(0))
      throw std::invalid_argument("attention: Q/K feature dims or K/V lengths disagree");
    Tensor scores = scale(matmul(q, transpose(k)), scaling);
    Tensor weights = softmax_lastdim(scores);
    return matmul(weights, v);
  }
  if (q.rank() == 3) {
    if (q.dim(2) != k.dim(2) || k.dim(1) != v.dim(1) || q.dim(0) != k.dim(0) ||
        q.dim(0) != v.dim(0))
      throw std::invalid_argument("attention: batched dims disagree");
    Tensor scores = scale(bmm(q, permute(k, {0, 2, 1})), scaling);
    Tensor weights = softmax_lastdim(scores);
    return bmm(weights, v);
  }
  throw std::invalid_argument("attention: rank-2 or rank-3 tensors required");
}

// Weights for one multi-head attention: fused per-head projections.
struct MhaWeights {
  Tensor wq;  // [model_dim_q, num_heads * head_dim]
  Tensor wk;  // [model_dim_kv, num_heads * head_dim]
  Tensor wv;  // [model_dim_kv, num_heads * head_dim]
  Tensor wo;  // [num_heads * head_dim, out_dim]
};

namespace detail {
// [S, D] or [B, S, D] -> [B*h, S, d]
inline Tensor split_heads(const Tensor& x, std::size_t h, std::size_t d) {
  if (x.rank() == 2) {
    const std::size_t s = x.dim(0);
    Tensor y = reshape(x, {s, h, d});
    y = permute(y, {1, 0, 2});
    return reshape(y, {h, s, d});
  }
  const std::size_t b = x.dim(0), s = x.dim(1);
  Tensor y = reshape(x, {b, s, h, d});
  y = permute(y, {0, 2, 1, 3});
  return reshape(y, {b * h, s, d});
}

// [B*h, S, d] -> same layout as the rank given by `batched`
inline Tensor merge_heads(const Tensor& x, std::size_t b, std::size_t h, std::size_t d,
                          bool batched) {
  const std::size_t s = x.dim(1);
  Tensor y = reshape(x, {b, h, s, d});
  y = permute(y, {0, 2, 1, 3});
  if (batched) return reshape(y, {b, s, h * d});
  return reshape(y, {s, h * d});
}
}  // namespace detail

// h parallel heads on projected slices, concatenated and projected by wo.
// Accepts [S, D] or batched [B, S, D] inputs.
inline Tensor multi_head_attention(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in,
                                   const AttentionConfig& cfg, const MhaWeights& w) {
  cfg.validate();
  if (q_in.shape().back() != w.wq.dim(0) || k_in.shape().back() != w.wk.dim(0) ||
      v_in.shape().back() != w.wv.dim(0))
    throw std::invalid_argument("multi_head_attention: input dim does not match projections");
  if (w.wq.dim(1) != cfg.model_dim || w.wk.dim(1) != cfg.model_dim ||
      w.wv.dim(1) != cfg.model_dim || w.wo.dim(0) != cfg.model_dim)
    throw ConfigError("multi_head_attention: projection shapes disagree with config");
  const bool batched = q_in.rank() == 3;
  const std::size_t b = batched ? q_in.dim(0) : 1;
  Tensor q = linear(q_in, w.wq);
  Tensor k = linear(k_in, w.wk);
  Tensor v = linear(v_in, w.wv);
  q = detail::split_heads(q, cfg.num_heads, cfg.head_dim);
  k = detail::split_heads(k, cfg.num_heads, cfg.head_dim);
  v = detail::split_heads(v, cfg.num_heads, cfg.head_dim);
  const double sc = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim));
  Tensor heads = scaled_dot_product_attention(q, k, v, sc);
  Tensor merged = detail::merge_heads(heads, b, cfg.num_heads, cfg.head_dim, batched);
  return linear(merged, w.wo);
}

// ---------------------------------------------------------------------------
// cross_entropy
// ---------------------------------------------------------------------------

// Mean over the batch of -log softmax(logits)[label].
inline Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
  if (logits.rank() != 2) throw std::invalid_argument("cross_entropy: logits must be [N, K]");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) throw std::invalid_argument("cross_entropy: label count mismatch");
  for (auto l : labels)
    if (l >= k) throw std::invalid_argument("cross_entropy: label out of range");
  const auto& dl = logits.data();
  auto probs = std::make_shared<std::vector<double>>(n * k);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = dl.data() + i * k;
    double mx = row[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double e = std::exp(row[j] - mx);
      (*probs)[i * k + j] = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < k; ++j) (*probs)[i * k + j] *= inv;
    loss -= std::log((*probs)[i * k + labels[i]]);
  }
  loss /= static_cast<double>(n);
  auto lab = std::make_shared<std::vector<std::size_t>>(labels);
  return make_op_result({1}, {loss}, {logits}, [n, k, probs, lab](detail::TensorImpl& o) {
    auto& in = *o.node->inputs[0];
    in.ensure_grad();
    const double g = o.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < k; ++j) in.grad[i * k + j] += g * (*probs)[i * k + j];
      in.grad[i * k + (*lab)[i]] -= g;
    }
  });
}

}  // namespace beamsight
