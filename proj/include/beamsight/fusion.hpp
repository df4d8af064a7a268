#pragma once

#include <algorithm>
#include <numeric>
#include <utility>
#include <vector>

#include "beamsight/checkpoint.hpp"
#include "beamsight/encoders.hpp"
#include "beamsight/ops.hpp"

namespace beamsight::fusion {

struct FusionConfig {
  std::size_t d_z = 32;        // shared fusion dimension
  std::size_t n_heads = 4;
  std::size_t mlp_hidden1 = 256;
  std::size_t mlp_hidden2 = 256;
  std::size_t n_beams = 64;
  std::size_t token_count = 16;  // sequence length entering cross attention

  void validate() const {
    if (d_z == 0 || n_heads == 0 || d_z % n_heads != 0)
      throw ConfigError("FusionConfig: d_z must be divisible by n_heads");
    if (n_beams < 1) throw ConfigError("FusionConfig: n_beams must be >= 1");
  }
};

// Probability vector over the codebook plus its ordered top-k view.
struct BeamPrediction {
  std::vector<double> probs;

  // Descending probability; ties break toward the lowest beam index, so
  // topk(j) is always a prefix of topk(j+1).
  std::vector<std::size_t> topk(std::size_t k) const {
    if (k < 1 || k > probs.size()) throw ConfigError("BeamPrediction::topk: k out of range");
    std::vector<std::size_t> idx(probs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
    idx.resize(k);
    return idx;
  }
};

inline BeamPrediction prediction_from_logits(const std::vector<double>& logits) {
  BeamPrediction p;
  p.probs.resize(logits.size());
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p.probs[i] = std::exp(logits[i] - mx);
    sum += p.probs[i];
  }
  for (auto& v : p.probs) v /= sum;
  return p;
}

enum class CrossDirection { PointToVisual, VisualToPoint };

struct CrossModalWeights {
  Tensor wv_embed, bv_embed;  // Z_v -> d_z
  Tensor wp_embed, bp_embed;  // Z_p -> d_z
  MhaWeights p_to_v;          // queries from the visual side
  MhaWeights v_to_p;          // queries from the point side
  encoders::LayerNormWeights fuse_ln;
};

inline CrossModalWeights make_cross_modal_weights(const FusionConfig& cfg, std::size_t v_dim,
                                                  std::size_t p_dim, ParamStore& ps, Rng& rng,
                                                  const std::string& prefix = "fusion") {
  cfg.validate();
  CrossModalWeights w;
  w.wv_embed = ps.create(prefix + ".embed_v.w", {v_dim, cfg.d_z},
                         encoders::detail::fan_in_scale(v_dim), rng);
  w.bv_embed = ps.create_const(prefix + ".embed_v.b", {cfg.d_z}, 0.0);
  w.wp_embed = ps.create(prefix + ".embed_p.w", {p_dim, cfg.d_z},
                         encoders::detail::fan_in_scale(p_dim), rng);
  w.bp_embed = ps.create_const(prefix + ".embed_p.b", {cfg.d_z}, 0.0);
  w.p_to_v = encoders::detail::make_mha(ps, prefix + ".p_to_v", cfg.d_z, cfg.d_z, cfg.d_z,
                                        cfg.d_z, rng);
  w.v_to_p = encoders::detail::make_mha(ps, prefix + ".v_to_p", cfg.d_z, cfg.d_z, cfg.d_z,
                                        cfg.d_z, rng);
  w.fuse_ln = encoders::detail::make_ln(ps, prefix + ".fuse_ln", 2 * cfg.d_z);
  return w;
}

// Project both modality features to the shared fusion dimension.
inline std::pair<Tensor, Tensor> embed_for_fusion(const Tensor& z_v, const Tensor& z_p,
                                                  const CrossModalWeights& w) {
  return {linear(z_v, w.wv_embed, w.bv_embed), linear(z_p, w.wp_embed, w.bp_embed)};
}

// One cross-attention direction: queries from query_feat, keys/values from
// kv_feat. Inputs are [S, d_z] sequences (length 1 collapses to vectors).
inline Tensor cross_modal_mha(const Tensor& query_feat, const Tensor& kv_feat,
                              const FusionConfig& cfg, const CrossModalWeights& w,
                              CrossDirection dir) {
  cfg.validate();
  const AttentionConfig acfg{cfg.d_z, cfg.n_heads, cfg.d_z / cfg.n_heads};
  const MhaWeights& mw = dir == CrossDirection::PointToVisual ? w.p_to_v : w.v_to_p;
  return multi_head_attention(query_feat, kv_feat, kv_feat, acfg, mw);
}

// Z_vp = LayerNorm(Concat(F_{p->v}, F_{v->p})); sequence outputs are pooled
// before concatenation so the fused feature is always [1, 2*d_z].
inline Tensor fuse(const Tensor& zv_embedded, const Tensor& zp_embedded, const FusionConfig& cfg,
                   const CrossModalWeights& w) {
  Tensor f_pv = cross_modal_mha(zv_embedded, zp_embedded, cfg, w, CrossDirection::PointToVisual);
  Tensor f_vp = cross_modal_mha(zp_embedded, zv_embedded, cfg, w, CrossDirection::VisualToPoint);
  Tensor cat = concat_cols({mean_rows(f_pv), mean_rows(f_vp)});
  return layer_norm(cat, w.fuse_ln.gain, w.fuse_ln.bias);
}

struct HeadWeights {
  Tensor w1, b1;
  encoders::LayerNormWeights ln1;
  Tensor w2, b2;
  encoders::LayerNormWeights ln2;
  Tensor w3, b3;
};

inline HeadWeights make_head_weights(const FusionConfig& cfg, std::size_t input_dim,
                                     ParamStore& ps, Rng& rng,
                                     const std::string& prefix = "head") {
  HeadWeights w;
  w.w1 = ps.create(prefix + ".w1", {input_dim, cfg.mlp_hidden1},
                   encoders::detail::fan_in_scale(input_dim), rng);
  w.b1 = ps.create_const(prefix + ".b1", {cfg.mlp_hidden1}, 0.0);
  w.ln1 = encoders::detail::make_ln(ps, prefix + ".ln1", cfg.mlp_hidden1);
  w.w2 = ps.create(prefix + ".w2", {cfg.mlp_hidden1, cfg.mlp_hidden2},
                   encoders::detail::fan_in_scale(cfg.mlp_hidden1), rng);
  w.b2 = ps.create_const(prefix + ".b2", {cfg.mlp_hidden2}, 0.0);
  w.ln2 = encoders::detail::make_ln(ps, prefix + ".ln2", cfg.mlp_hidden2);
  w.w3 = ps.create(prefix + ".w3", {cfg.mlp_hidden2, cfg.n_beams},
                   encoders::detail::fan_in_scale(cfg.mlp_hidden2), rng);
  w.b3 = ps.create_const(prefix + ".b3", {cfg.n_beams}, 0.0);
  return w;
}

// Two hidden layers of ReLU(LayerNorm(x W + b)) and a final affine to K
// logits over the concatenated features.
inline Tensor head_logits(const std::vector<Tensor>& features, const HeadWeights& w) {
  Tensor z = features.size() == 1 ? features[0] : concat_cols(features);
  Tensor h1 = relu(layer_norm(linear(z, w.w1, w.b1), w.ln1.gain, w.ln1.bias));
  Tensor h2 = relu(layer_norm(linear(h1, w.w2, w.b2), w.ln2.gain, w.ln2.bias));
  return linear(h2, w.w3, w.b3);
}

// beam_head per the module contract: position features plus fused features.
inline Tensor beam_head(const Tensor& z_g, const Tensor& z_vp, const HeadWeights& w) {
  return head_logits({z_g, z_vp}, w);
}

}  // namespace beamsight::fusion
