#pragma once

#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "beamsight/checkpoint.hpp"
#include "beamsight/ops.hpp"
#include "beamsight/rng.hpp"
#include "beamsight/tensor.hpp"

namespace beamsight::encoders {

// ---------------------------------------------------------------------------
// Shared building blocks
// ---------------------------------------------------------------------------

struct LayerNormWeights {
  Tensor gain;
  Tensor bias;
};

struct FeedForwardWeights {
  Tensor w1, b1;
  Tensor w2, b2;
};

inline Tensor feed_forward(const Tensor& x, const FeedForwardWeights& w) {
  return linear(relu(linear(x, w.w1, w.b1)), w.w2, w.b2);
}

namespace detail {

inline double fan_in_scale(std::size_t fan_in) {
  return 1.0 / std::sqrt(static_cast<double>(fan_in));
}

inline LayerNormWeights make_ln(ParamStore& ps, const std::string& prefix, std::size_t dim) {
  return {ps.create_const(prefix + ".gain", {dim}, 1.0),
          ps.create_const(prefix + ".bias", {dim}, 0.0)};
}

inline MhaWeights make_mha(ParamStore& ps, const std::string& prefix, std::size_t q_dim,
                           std::size_t kv_dim, std::size_t model_dim, std::size_t out_dim,
                           Rng& rng) {
  MhaWeights w;
  w.wq = ps.create(prefix + ".wq", {q_dim, model_dim}, fan_in_scale(q_dim), rng);
  w.wk = ps.create(prefix + ".wk", {kv_dim, model_dim}, fan_in_scale(kv_dim), rng);
  w.wv = ps.create(prefix + ".wv", {kv_dim, model_dim}, fan_in_scale(kv_dim), rng);
  w.wo = ps.create(prefix + ".wo", {model_dim, out_dim}, fan_in_scale(model_dim), rng);
  return w;
}

inline FeedForwardWeights make_ff(ParamStore& ps, const std::string& prefix, std::size_t dim,
                                  std::size_t hidden, Rng& rng) {
  FeedForwardWeights w;
  w.w1 = ps.create(prefix + ".w1", {dim, hidden}, fan_in_scale(dim), rng);
  w.b1 = ps.create_const(prefix + ".b1", {hidden}, 0.0);
  w.w2 = ps.create(prefix + ".w2", {hidden, dim}, fan_in_scale(hidden), rng);
  w.b2 = ps.create_const(prefix + ".b2", {dim}, 0.0);
  return w;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Position encoder: embedding + stacked self-attention layers (post-norm)
// ---------------------------------------------------------------------------

struct PositionEncoderConfig {
  std::size_t embed_dim = 64;  // d_g
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t ff_dim = 256;

  void validate() const {
    if (embed_dim == 0 || n_heads == 0 || embed_dim % n_heads != 0)
      throw ConfigError("PositionEncoderConfig: embed_dim must be divisible by n_heads");
    if (n_layers == 0) throw ConfigError("PositionEncoderConfig: at least one layer");
  }
};

class PositionEncoder {
 public:
  PositionEncoder(const PositionEncoderConfig& cfg, ParamStore& ps, Rng& rng,
                  const std::string& prefix = "pos")
      : cfg_(cfg) {
    cfg.validate();
    w_embed_ = ps.create(prefix + ".embed.w", {2, cfg.embed_dim}, detail::fan_in_scale(2), rng);
    b_embed_ = ps.create_const(prefix + ".embed.b", {cfg.embed_dim}, 0.0);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      const std::string lp = prefix + ".layer" + std::to_string(l);
      Layer layer;
      layer.attn = detail::make_mha(ps, lp + ".attn", cfg.embed_dim, cfg.embed_dim,
                                    cfg.embed_dim, cfg.embed_dim, rng);
      layer.ln1 = detail::make_ln(ps, lp + ".ln1", cfg.embed_dim);
      layer.ff = detail::make_ff(ps, lp + ".ff", cfg.embed_dim, cfg.ff_dim, rng);
      layer.ln2 = detail::make_ln(ps, lp + ".ln2", cfg.embed_dim);
      layers_.push_back(std::move(layer));
    }
  }

  // gps_norm: [S, 2] token sequence (a single GPS reading is S = 1).
  Tensor encode(const Tensor& gps_norm) const {
    if (gps_norm.rank() != 2 || gps_norm.dim(1) != 2)
      throw std::invalid_argument("PositionEncoder: input must be [S, 2]");
    const AttentionConfig acfg{cfg_.embed_dim, cfg_.n_heads, cfg_.embed_dim / cfg_.n_heads};
    Tensor x = linear(gps_norm, w_embed_, b_embed_);
    for (const auto& l : layers_) {
      Tensor a = multi_head_attention(x, x, x, acfg, l.attn);
      x = layer_norm(add(x, a), l.ln1.gain, l.ln1.bias);
      Tensor f = feed_forward(x, l.ff);
      x = layer_norm(add(x, f), l.ln2.gain, l.ln2.bias);
    }
    return mean_rows(x);  // [1, d_g]
  }

  std::size_t out_dim() const { return cfg_.embed_dim; }
  const PositionEncoderConfig& config() const { return cfg_; }

  struct Layer {
    MhaWeights attn;
    LayerNormWeights ln1;
    FeedForwardWeights ff;
    LayerNormWeights ln2;
  };
  const Layer& layer(std::size_t i) const { return layers_.at(i); }
  const Tensor& embed_w() const { return w_embed_; }
  const Tensor& embed_b() const { return b_embed_; }

 private:
  PositionEncoderConfig cfg_;
  Tensor w_embed_, b_embed_;
  std::vector<Layer> layers_;
};

// ---------------------------------------------------------------------------
// Visual encoder: conv stem + stages of MBConv / block attention / grid
// attention with feed-forwards (post-norm residuals)
// ---------------------------------------------------------------------------

struct VisualEncoderConfig {
  std::size_t stem_channels = 4;
  std::size_t n_stages = 2;
  std::size_t window_size = 4;
  std::size_t grid_size = 4;
  std::size_t head_dim = 8;
  std::size_t mbconv_expansion = 4;
  std::size_t ff_ratio = 2;
  std::size_t se_reduction = 4;

  std::size_t stage_channels(std::size_t stage) const { return stem_channels << (stage + 1); }

  void validate() const {
    if (stem_channels == 0 || n_stages == 0 || window_size == 0 || grid_size == 0 ||
        head_dim == 0 || mbconv_expansion == 0 || ff_ratio == 0)
      throw ConfigError("VisualEncoderConfig: all sizes must be positive");
    for (std::size_t s = 0; s < n_stages; ++s)
      if (stage_channels(s) % head_dim != 0)
        throw ConfigError("VisualEncoderConfig: stage channels must be divisible by head_dim");
  }
};

// Map layout conversions between conv [C,H,W] and token [H,W,C] domains.
namespace detail {
inline Tensor chw_to_hwc(const Tensor& x) { return permute(x, {1, 2, 0}); }
inline Tensor hwc_to_chw(const Tensor& x) { return permute(x, {2, 0, 1}); }
}  // namespace detail

// Non-overlapping window self-attention on an [H, W, C] feature map.
inline Tensor block_attention(const Tensor& fmap, std::size_t window, const AttentionConfig& cfg,
                              const MhaWeights& w) {
  if (fmap.rank() != 3) throw std::invalid_argument("block_attention: [H,W,C] map required");
  const std::size_t h = fmap.dim(0), ww = fmap.dim(1), c = fmap.dim(2);
  if (window == 0 || h % window != 0 || ww % window != 0)
    throw std::invalid_argument("block_attention: window must divide both map sides");
  const std::size_t nh = h / window, nw = ww / window;
  Tensor x = reshape(fmap, {nh, window, nw, window, c});
  x = permute(x, {0, 2, 1, 3, 4});
  x = reshape(x, {nh * nw, window * window, c});
  x = multi_head_attention(x, x, x, cfg, w);
  x = reshape(x, {nh, nw, window, window, c});
  x = permute(x, {0, 2, 1, 3, 4});
  return reshape(x, {h, ww, c});
}

// Stride-g sparse grid self-attention: tokens g apart attend within each of
// the g*g offset groups.
inline Tensor grid_attention(const Tensor& fmap, std::size_t grid, const AttentionConfig& cfg,
                             const MhaWeights& w) {
  if (fmap.rank() != 3) throw std::invalid_argument("grid_attention: [H,W,C] map required");
  const std::size_t h = fmap.dim(0), ww = fmap.dim(1), c = fmap.dim(2);
  if (grid == 0 || h % grid != 0 || ww % grid != 0)
    throw std::invalid_argument("grid_attention: grid must divide both map sides");
  const std::size_t ph = h / grid, pw = ww / grid;
  Tensor x = reshape(fmap, {ph, grid, pw, grid, c});
  x = permute(x, {1, 3, 0, 2, 4});  // [g, g, H/g, W/g, C]
  x = reshape(x, {grid * grid, ph * pw, c});
  x = multi_head_attention(x, x, x, cfg, w);
  x = reshape(x, {grid, grid, ph, pw, c});
  x = permute(x, {2, 0, 3, 1, 4});
  return reshape(x, {h, ww, c});
}

struct MbconvWeights {
  Tensor expand_w, expand_b;    // 1x1
  Tensor dw_w, dw_b;            // 3x3 depthwise
  Tensor se_w1, se_b1;          // squeeze
  Tensor se_w2, se_b2;          // excite
  Tensor project_w, project_b;  // 1x1
  Tensor shortcut_w;            // 1x1 projection when in/out shapes differ
};

// Inverted residual: 1x1 expand -> 3x3 depthwise (stride here) -> SE channel
// gating -> 1x1 project -> skip (projection shortcut when shapes differ).
inline Tensor mbconv(const Tensor& x, const MbconvWeights& w, std::size_t stride) {
  Tensor h = relu(conv2d(x, w.expand_w, w.expand_b, 1, 0));
  const std::size_t expanded = h.dim(0);
  h = relu(conv2d(h, w.dw_w, w.dw_b, stride, 1, expanded));
  // squeeze-and-excitation: global-average channel gating
  Tensor pooled = mean_rows(transpose(reshape(h, {expanded, h.dim(1) * h.dim(2)})));  // [1, C]
  Tensor gate = sigmoid(linear(relu(linear(pooled, w.se_w1, w.se_b1)), w.se_w2, w.se_b2));
  h = scale_channels(h, gate);
  h = conv2d(h, w.project_w, w.project_b, 1, 0);
  Tensor skip = w.shortcut_w.defined() ? conv2d(x, w.shortcut_w, Tensor(), stride, 0) : x;
  return add(skip, h);
}

class VisualEncoder {
 public:
  VisualEncoder(const VisualEncoderConfig& cfg, std::size_t image_h, std::size_t image_w,
                ParamStore& ps, Rng& rng, const std::string& prefix = "vis")
      : cfg_(cfg), image_h_(image_h), image_w_(image_w) {
    cfg.validate();
    if (image_h % 2 != 0 || image_w % 2 != 0)
      throw ConfigError("VisualEncoder: even input sides required for the stride-2 stem");
    stem_w_ = ps.create(prefix + ".stem.w", {cfg.stem_channels, 3, 3, 3},
                        detail::fan_in_scale(27), rng);
    stem_b_ = ps.create_const(prefix + ".stem.b", {cfg.stem_channels}, 0.0);

    std::size_t side_h = image_h / 2, side_w = image_w / 2, in_ch = cfg.stem_channels;
    for (std::size_t s = 0; s < cfg.n_stages; ++s) {
      const std::size_t out_ch = cfg.stage_channels(s);
      const std::size_t stride = s == 0 ? 1 : 2;
      side_h /= stride;
      side_w /= stride;
      if (side_h % cfg.window_size != 0 || side_w % cfg.window_size != 0 ||
          side_h % cfg.grid_size != 0 || side_w % cfg.grid_size != 0)
        throw ConfigError("VisualEncoder: stage side not divisible by window/grid size");
      const std::string sp = prefix + ".stage" + std::to_string(s);
      Stage st;
      st.stride = stride;
      st.channels = out_ch;
      const std::size_t exp_ch = in_ch * cfg.mbconv_expansion;
      const std::size_t se_hidden = std::max<std::size_t>(1, exp_ch / cfg.se_reduction);
      st.mb.expand_w = ps.create(sp + ".mb.expand.w", {exp_ch, in_ch, 1, 1},
                                 detail::fan_in_scale(in_ch), rng);
      st.mb.expand_b = ps.create_const(sp + ".mb.expand.b", {exp_ch}, 0.0);
      st.mb.dw_w = ps.create(sp + ".mb.dw.w", {exp_ch, 1, 3, 3}, detail::fan_in_scale(9), rng);
      st.mb.dw_b = ps.create_const(sp + ".mb.dw.b", {exp_ch}, 0.0);
      st.mb.se_w1 = ps.create(sp + ".mb.se.w1", {exp_ch, se_hidden},
                              detail::fan_in_scale(exp_ch), rng);
      st.mb.se_b1 = ps.create_const(sp + ".mb.se.b1", {se_hidden}, 0.0);
      st.mb.se_w2 = ps.create(sp + ".mb.se.w2", {se_hidden, exp_ch},
                              detail::fan_in_scale(se_hidden), rng);
      st.mb.se_b2 = ps.create_const(sp + ".mb.se.b2", {exp_ch}, 0.0);
      st.mb.project_w = ps.create(sp + ".mb.project.w", {out_ch, exp_ch, 1, 1},
                                  detail::fan_in_scale(exp_ch), rng);
      st.mb.project_b = ps.create_const(sp + ".mb.project.b", {out_ch}, 0.0);
      st.mb.shortcut_w = ps.create(sp + ".mb.shortcut.w", {out_ch, in_ch, 1, 1},
                                   detail::fan_in_scale(in_ch), rng);

      const std::size_t heads = out_ch / cfg.head_dim;
      st.attn_cfg = AttentionConfig{out_ch, heads, cfg.head_dim};
      st.block_attn = detail::make_mha(ps, sp + ".block", out_ch, out_ch, out_ch, out_ch, rng);
      st.ln1 = detail::make_ln(ps, sp + ".ln1", out_ch);
      st.ff1 = detail::make_ff(ps, sp + ".ff1", out_ch, out_ch * cfg.ff_ratio, rng);
      st.ln2 = detail::make_ln(ps, sp + ".ln2", out_ch);
      st.grid_attn = detail::make_mha(ps, sp + ".grid", out_ch, out_ch, out_ch, out_ch, rng);
      st.ln3 = detail::make_ln(ps, sp + ".ln3", out_ch);
      st.ff2 = detail::make_ff(ps, sp + ".ff2", out_ch, out_ch * cfg.ff_ratio, rng);
      st.ln4 = detail::make_ln(ps, sp + ".ln4", out_ch);
      stages_.push_back(std::move(st));
      in_ch = out_ch;
    }
    final_ln_ = detail::make_ln(ps, prefix + ".final_ln", in_ch);
    final_side_h_ = side_h;
    final_side_w_ = side_w;
  }

  // Final [H', W', C] feature map in the token domain. Attention and
  // feed-forward sub-layers use pre-norm residuals (the MaxViT convention);
  // the last stage ends with a normalization ahead of pooling.
  Tensor forward_map(const Tensor& image) const {
    if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != image_h_ ||
        image.dim(2) != image_w_)
      throw std::invalid_argument("VisualEncoder: input must be [3," +
                                  std::to_string(image_h_) + "," + std::to_string(image_w_) + "]");
    Tensor x = relu(conv2d(image, stem_w_, stem_b_, 2, 1));
    for (const auto& st : stages_) {
      x = mbconv(x, st.mb, st.stride);
      const std::size_t h = x.dim(1), w = x.dim(2), c = x.dim(0);
      Tensor t = detail::chw_to_hwc(x);
      Tensor normed = layer_norm(t, st.ln1.gain, st.ln1.bias);
      t = add(t, block_attention(normed, cfg_.window_size, st.attn_cfg, st.block_attn));
      Tensor tokens = reshape(t, {h * w, c});
      tokens = add(tokens, feed_forward(layer_norm(tokens, st.ln2.gain, st.ln2.bias), st.ff1));
      t = reshape(tokens, {h, w, c});
      normed = layer_norm(t, st.ln3.gain, st.ln3.bias);
      t = add(t, grid_attention(normed, cfg_.grid_size, st.attn_cfg, st.grid_attn));
      tokens = reshape(t, {h * w, c});
      tokens = add(tokens, feed_forward(layer_norm(tokens, st.ln4.gain, st.ln4.bias), st.ff2));
      x = detail::hwc_to_chw(reshape(tokens, {h, w, c}));
    }
    Tensor out = detail::chw_to_hwc(x);
    return layer_norm(out, final_ln_.gain, final_ln_.bias);
  }

  // Global average pooling of the final map.
  Tensor encode(const Tensor& image) const {
    Tensor m = forward_map(image);
    return mean_rows(reshape(m, {m.dim(0) * m.dim(1), m.dim(2)}));
  }

  // Final map pooled to tokens_side x tokens_side spatial tokens.
  Tensor encode_tokens(const Tensor& image, std::size_t tokens_side) const {
    Tensor m = forward_map(image);
    const std::size_t h = m.dim(0), w = m.dim(1), c = m.dim(2);
    if (tokens_side == 0 || h % tokens_side != 0 || w % tokens_side != 0)
      throw ConfigError("VisualEncoder: tokens_side must divide the final map side");
    const std::size_t bh = h / tokens_side, bw = w / tokens_side;
    Tensor x = reshape(m, {tokens_side, bh, tokens_side, bw, c});
    x = permute(x, {0, 2, 1, 3, 4});
    x = reshape(x, {tokens_side * tokens_side * bh * bw, c});
    return mean_pool_rows(x, bh * bw);  // [tokens_side^2, C]
  }

  std::size_t out_dim() const { return stages_.back().channels; }
  std::size_t final_tokens() const { return final_side_h_ * final_side_w_; }
  const VisualEncoderConfig& config() const { return cfg_; }

  struct Stage {
    std::size_t stride = 1;
    std::size_t channels = 0;
    MbconvWeights mb;
    AttentionConfig attn_cfg;
    MhaWeights block_attn;
    LayerNormWeights ln1;
    FeedForwardWeights ff1;
    LayerNormWeights ln2;
    MhaWeights grid_attn;
    LayerNormWeights ln3;
    FeedForwardWeights ff2;
    LayerNormWeights ln4;
  };
  const Stage& stage(std::size_t i) const { return stages_.at(i); }
  const Tensor& stem_w() const { return stem_w_; }
  const Tensor& stem_b() const { return stem_b_; }
  const LayerNormWeights& final_ln() const { return final_ln_; }

 private:
  VisualEncoderConfig cfg_;
  std::size_t image_h_, image_w_;
  std::size_t final_side_h_ = 0, final_side_w_ = 0;
  Tensor stem_w_, stem_b_;
  LayerNormWeights final_ln_;
  std::vector<Stage> stages_;
};

// ---------------------------------------------------------------------------
// Point encoder: z-order serialization + embedding + conditional positional
// encoding + grid pooling + patch attention blocks
// ---------------------------------------------------------------------------

enum class Curve { ZOrder, TransposeZ };

inline Curve other_curve(Curve c) { return c == Curve::ZOrder ? Curve::TransposeZ : Curve::ZOrder; }

namespace detail {

// Interleave the low `bits` bits of quantized coordinates; the transpose curve
// swaps the x/y bit lanes.
inline std::uint64_t interleave3(std::uint32_t a, std::uint32_t b, std::uint32_t c,
                                 std::size_t bits) {
  std::uint64_t code = 0;
  for (std::size_t i = 0; i < bits; ++i) {
    code |= (static_cast<std::uint64_t>((a >> i) & 1u) << (3 * i + 2)) |
            (static_cast<std::uint64_t>((b >> i) & 1u) << (3 * i + 1)) |
            (static_cast<std::uint64_t>((c >> i) & 1u) << (3 * i));
  }
  return code;
}

inline std::uint32_t quantize_coord(double v, double bound, std::size_t bits) {
  const double span = 2.0 * bound;
  const double unit = std::clamp((v + bound) / span, 0.0, 1.0);
  const std::uint32_t maxv = (1u << bits) - 1u;
  return std::min<std::uint32_t>(static_cast<std::uint32_t>(unit * static_cast<double>(maxv + 1u)),
                                 maxv);
}

inline std::uint64_t curve_code(double x, double y, double z, Curve curve, double bound,
                                std::size_t bits) {
  const std::uint32_t qx = quantize_coord(x, bound, bits);
  const std::uint32_t qy = quantize_coord(y, bound, bits);
  const std::uint32_t qz = quantize_coord(z, bound, bits);
  return curve == Curve::ZOrder ? interleave3(qx, qy, qz, bits) : interleave3(qy, qx, qz, bits);
}

}  // namespace detail

// Sort permutation by interleaved-bit code over a 2^bits grid; stable for
// equal codes.
inline std::vector<std::size_t> serialize_points(const Tensor& points, Curve curve,
                                                 std::size_t quant_bits = 10,
                                                 double bound = 64.0) {
  if (points.rank() != 2 || points.dim(1) != 3)
    throw std::invalid_argument("serialize_points: [N,3] tensor required");
  if (quant_bits == 0 || quant_bits > 21)
    throw ConfigError("serialize_points: quant_bits must be in [1,21]");
  const std::size_t n = points.dim(0);
  std::vector<std::uint64_t> codes(n);
  const auto& d = points.data();
  for (std::size_t i = 0; i < n; ++i)
    codes[i] = detail::curve_code(d[i * 3], d[i * 3 + 1], d[i * 3 + 2], curve, bound, quant_bits);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(),
                   [&](std::size_t a, std::size_t b) { return codes[a] < codes[b]; });
  return perm;
}

struct PointEncoderConfig {
  std::size_t embed_dim = 16;
  std::size_t patch_size = 16;
  std::size_t n_blocks = 2;
  std::size_t n_heads = 2;
  std::size_t grid_pool = 4;
  Curve curve = Curve::ZOrder;
  std::size_t quant_bits = 10;
  double bound = 64.0;  // sensor coordinate range for quantization

  void validate() const {
    if (embed_dim == 0 || patch_size == 0 || n_blocks == 0 || n_heads == 0 || grid_pool == 0)
      throw ConfigError("PointEncoderConfig: all sizes must be positive");
    if (embed_dim % n_heads != 0)
      throw ConfigError("PointEncoderConfig: embed_dim must be divisible by n_heads");
  }
};

class PointEncoder {
 public:
  PointEncoder(const PointEncoderConfig& cfg, std::size_t n_points, ParamStore& ps, Rng& rng,
               const std::string& prefix = "pts")
      : cfg_(cfg), n_points_(n_points) {
    cfg.validate();
    if (n_points % cfg.grid_pool != 0)
      throw ConfigError("PointEncoder: grid_pool must divide the padded point count");
    if ((n_points / cfg.grid_pool) % cfg.patch_size != 0)
      throw ConfigError("PointEncoder: patch_size must divide the pooled sequence length");
    w_embed_ = ps.create(prefix + ".embed.w", {3, cfg.embed_dim}, detail::fan_in_scale(3), rng);
    b_embed_ = ps.create_const(prefix + ".embed.b", {cfg.embed_dim}, 0.0);
    cpe_w_ = ps.create(prefix + ".cpe.w", {cfg.embed_dim, 1, 3, 1}, detail::fan_in_scale(3), rng);
    cpe_b_ = ps.create_const(prefix + ".cpe.b", {cfg.embed_dim}, 0.0);
    for (std::size_t b = 0; b < cfg.n_blocks; ++b) {
      const std::string bp = prefix + ".block" + std::to_string(b);
      Block blk;
      blk.attn = detail::make_mha(ps, bp + ".attn", cfg.embed_dim, cfg.embed_dim, cfg.embed_dim,
                                  cfg.embed_dim, rng);
      blk.ln = detail::make_ln(ps, bp + ".ln", cfg.embed_dim);
      blk.ff = detail::make_ff(ps, bp + ".ff", cfg.embed_dim, cfg.embed_dim * 2, rng);
      blocks_.push_back(std::move(blk));
    }
  }

  // Final token sequence [n_points / grid_pool, E].
  Tensor forward_tokens(const Tensor& points) const {
    if (points.rank() != 2 || points.dim(1) != 3 || points.dim(0) != n_points_)
      throw std::invalid_argument("PointEncoder: input must be [" + std::to_string(n_points_) +
                                  ",3]");
    auto perm = serialize_points(points, cfg_.curve, cfg_.quant_bits, cfg_.bound);
    Tensor serialized = gather_rows(points, perm);

    // raw metric coordinates feed the embedding; the block layer norms rescale
    // them and the large token contrasts sharpen patch attention early
    Tensor x = linear(serialized, w_embed_, b_embed_);  // [n, E]
    // conditional positional encoding: depthwise 1-D conv over the sequence
    Tensor seq = reshape(transpose(x), {cfg_.embed_dim, n_points_, 1});
    Tensor cpe = conv2d(seq, cpe_w_, cpe_b_, 1, 1, 1, 0, cfg_.embed_dim);
    x = add(x, transpose(reshape(cpe, {cfg_.embed_dim, n_points_})));

    x = mean_pool_rows(x, cfg_.grid_pool);  // [n/g, E]
    // pooled token centroids travel with the sequence for later re-ordering
    std::vector<std::array<double, 3>> centroids(x.dim(0), {0, 0, 0});
    {
      const auto& sd = serialized.data();
      for (std::size_t t = 0; t < centroids.size(); ++t)
        for (std::size_t j = 0; j < cfg_.grid_pool; ++j)
          for (std::size_t a = 0; a < 3; ++a)
            centroids[t][a] += sd[(t * cfg_.grid_pool + j) * 3 + a] /
                               static_cast<double>(cfg_.grid_pool);
    }

    const AttentionConfig acfg{cfg_.embed_dim, cfg_.n_heads, cfg_.embed_dim / cfg_.n_heads};
    Curve current = cfg_.curve;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      const Curve want = (b % 2 == 0) ? cfg_.curve : other_curve(cfg_.curve);
      if (want != current) {
        // order shuffling: re-serialize the pooled tokens by their centroids
        std::vector<std::uint64_t> codes(centroids.size());
        for (std::size_t t = 0; t < centroids.size(); ++t)
          codes[t] = detail::curve_code(centroids[t][0], centroids[t][1], centroids[t][2], want,
                                        cfg_.bound, cfg_.quant_bits);
        std::vector<std::size_t> tperm(centroids.size());
        std::iota(tperm.begin(), tperm.end(), 0);
        std::stable_sort(tperm.begin(), tperm.end(),
                         [&](std::size_t i, std::size_t j) { return codes[i] < codes[j]; });
        x = gather_rows(x, tperm);
        std::vector<std::array<double, 3>> nc(centroids.size());
        for (std::size_t t = 0; t < tperm.size(); ++t) nc[t] = centroids[tperm[t]];
        centroids = std::move(nc);
        current = want;
      }
      const auto& blk = blocks_[b];
      const std::size_t s = x.dim(0);
      Tensor patches = reshape(x, {s / cfg_.patch_size, cfg_.patch_size, cfg_.embed_dim});
      Tensor a = multi_head_attention(patches, patches, patches, acfg, blk.attn);
      x = add(x, reshape(a, {s, cfg_.embed_dim}));
      x = layer_norm(x, blk.ln.gain, blk.ln.bias);  // normalization ahead of the feed-forward
      x = add(x, feed_forward(x, blk.ff));
    }
    return x;
  }

  Tensor encode(const Tensor& points) const { return mean_rows(forward_tokens(points)); }

  Tensor encode_tokens(const Tensor& points, std::size_t token_count) const {
    Tensor t = forward_tokens(points);
    if (token_count == 0 || t.dim(0) % token_count != 0)
      throw ConfigError("PointEncoder: token_count must divide the pooled sequence length");
    return mean_pool_rows(t, t.dim(0) / token_count);
  }

  std::size_t out_dim() const { return cfg_.embed_dim; }
  const PointEncoderConfig& config() const { return cfg_; }

  struct Block {
    MhaWeights attn;
    LayerNormWeights ln;
    FeedForwardWeights ff;
  };
  const Block& block(std::size_t i) const { return blocks_.at(i); }
  const Tensor& embed_w() const { return w_embed_; }
  const Tensor& embed_b() const { return b_embed_; }
  const Tensor& cpe_w() const { return cpe_w_; }
  const Tensor& cpe_b() const { return cpe_b_; }

 private:
  PointEncoderConfig cfg_;
  std::size_t n_points_;
  Tensor w_embed_, b_embed_;
  Tensor cpe_w_, cpe_b_;
  std::vector<Block> blocks_;
};

}  // namespace beamsight::encoders
