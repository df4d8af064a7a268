#pragma once

#include <memory>
#include <string>

#include "beamsight/encoders.hpp"
#include "beamsight/fusion.hpp"
#include "beamsight/preprocess.hpp"

namespace beamsight::model {

enum class Variant { Proposed, Baseline1PositionOnly, Baseline2ConcatFusion };

inline std::string variant_str(Variant v) {
  switch (v) {
    case Variant::Proposed: return "proposed";
    case Variant::Baseline1PositionOnly: return "baseline1_position_only";
    case Variant::Baseline2ConcatFusion: return "baseline2_concat_fusion";
  }
  return "?";
}

inline Variant variant_from_str(const std::string& s) {
  if (s == "proposed") return Variant::Proposed;
  if (s == "baseline1" || s == "baseline1_position_only") return Variant::Baseline1PositionOnly;
  if (s == "baseline2" || s == "baseline2_concat_fusion") return Variant::Baseline2ConcatFusion;
  throw ConfigError("unknown model variant '" + s + "'");
}

struct ModelConfig {
  Variant variant = Variant::Proposed;
  encoders::PositionEncoderConfig pos;
  encoders::VisualEncoderConfig vis;
  encoders::PointEncoderConfig pts;
  fusion::FusionConfig fus;
  std::size_t image_h = 32;
  std::size_t image_w = 32;
  std::size_t n_points = 256;
  std::uint64_t init_seed = 1;

  json to_json() const {
    return json{{"variant", variant_str(variant)},
                {"pos",
                 {{"embed_dim", pos.embed_dim},
                  {"n_layers", pos.n_layers},
                  {"n_heads", pos.n_heads},
                  {"ff_dim", pos.ff_dim}}},
                {"vis",
                 {{"stem_channels", vis.stem_channels},
                  {"n_stages", vis.n_stages},
                  {"window_size", vis.window_size},
                  {"grid_size", vis.grid_size},
                  {"head_dim", vis.head_dim},
                  {"mbconv_expansion", vis.mbconv_expansion},
                  {"ff_ratio", vis.ff_ratio},
                  {"se_reduction", vis.se_reduction}}},
                {"pts",
                 {{"embed_dim", pts.embed_dim},
                  {"patch_size", pts.patch_size},
                  {"n_blocks", pts.n_blocks},
                  {"n_heads", pts.n_heads},
                  {"grid_pool", pts.grid_pool},
                  {"curve", pts.curve == encoders::Curve::ZOrder ? "z-order" : "transpose-z"},
                  {"quant_bits", pts.quant_bits},
                  {"bound", pts.bound}}},
                {"fus",
                 {{"d_z", fus.d_z},
                  {"n_heads", fus.n_heads},
                  {"mlp_hidden1", fus.mlp_hidden1},
                  {"mlp_hidden2", fus.mlp_hidden2},
                  {"n_beams", fus.n_beams},
                  {"token_count", fus.token_count}}},
                {"image_h", image_h},
                {"image_w", image_w},
                {"n_points", n_points},
                {"init_seed", init_seed}};
  }

  static ModelConfig from_json(const json& j) {
    ModelConfig c;
    c.variant = variant_from_str(j.at("variant").get<std::string>());
    const auto& p = j.at("pos");
    c.pos = {p.at("embed_dim"), p.at("n_layers"), p.at("n_heads"), p.at("ff_dim")};
    const auto& v = j.at("vis");
    c.vis = {v.at("stem_channels"), v.at("n_stages"),        v.at("window_size"),
             v.at("grid_size"),     v.at("head_dim"),        v.at("mbconv_expansion"),
             v.at("ff_ratio"),      v.at("se_reduction")};
    const auto& q = j.at("pts");
    c.pts.embed_dim = q.at("embed_dim");
    c.pts.patch_size = q.at("patch_size");
    c.pts.n_blocks = q.at("n_blocks");
    c.pts.n_heads = q.at("n_heads");
    c.pts.grid_pool = q.at("grid_pool");
    c.pts.curve = q.at("curve").get<std::string>() == "transpose-z"
                      ? encoders::Curve::TransposeZ
                      : encoders::Curve::ZOrder;
    c.pts.quant_bits = q.at("quant_bits");
    c.pts.bound = q.at("bound");
    const auto& f = j.at("fus");
    c.fus = {f.at("d_z"),    f.at("n_heads"), f.at("mlp_hidden1"),
             f.at("mlp_hidden2"), f.at("n_beams"), f.at("token_count")};
    c.image_h = j.at("image_h");
    c.image_w = j.at("image_w");
    c.n_points = j.at("n_points");
    c.init_seed = j.at("init_seed");
    return c;
  }
};

// The full predictor. Weights register in a single ordered store so that
// checkpoints, Adam state, and snapshots all share one layout.
class BeamModel {
 public:
  explicit BeamModel(const ModelConfig& cfg) : cfg_(cfg) {
    Rng rng(cfg.init_seed);
    pos_ = std::make_unique<encoders::PositionEncoder>(cfg.pos, store_, rng);
    if (cfg.variant != Variant::Baseline1PositionOnly) {
      vis_ = std::make_unique<encoders::VisualEncoder>(cfg.vis, cfg.image_h, cfg.image_w, store_,
                                                       rng);
      pts_ = std::make_unique<encoders::PointEncoder>(cfg.pts, cfg.n_points, store_, rng);
    }
    std::size_t head_in = cfg.pos.embed_dim;
    if (cfg.variant == Variant::Proposed) {
      cross_ = fusion::make_cross_modal_weights(cfg.fus, vis_->out_dim(), pts_->out_dim(), store_,
                                                rng);
      head_in += 2 * cfg.fus.d_z;
    } else if (cfg.variant == Variant::Baseline2ConcatFusion) {
      head_in += vis_->out_dim() + pts_->out_dim();
    }
    head_ = fusion::make_head_weights(cfg.fus, head_in, store_, rng);
  }

  Tensor forward_logits(const preprocess::PreprocessedSample& s) const {
    Tensor gps = Tensor::from({1, 2}, {s.gps_norm[0], s.gps_norm[1]});
    Tensor z_g = pos_->encode(gps);
    switch (cfg_.variant) {
      case Variant::Baseline1PositionOnly:
        return fusion::head_logits({z_g}, head_);
      case Variant::Baseline2ConcatFusion: {
        Tensor z_v = vis_->encode(s.image_tensor);
        Tensor z_p = pts_->encode(s.points_tensor);
        return fusion::head_logits({z_g, z_v, z_p}, head_);
      }
      case Variant::Proposed:
      default: {
        const std::size_t side = token_side();
        Tensor v_tokens = vis_->encode_tokens(s.image_tensor, side);
        Tensor p_tokens = pts_->encode_tokens(s.points_tensor, side * side);
        auto [zv, zp] = fusion::embed_for_fusion(v_tokens, p_tokens, cross_);
        Tensor z_vp = fusion::fuse(zv, zp, cfg_.fus, cross_);
        return fusion::beam_head(z_g, z_vp, head_);
      }
    }
  }

  fusion::BeamPrediction predict(const preprocess::PreprocessedSample& s) const {
    NoGradGuard ng;
    Tensor logits = forward_logits(s);
    return fusion::prediction_from_logits(logits.data());
  }

  std::vector<std::size_t> predict_topk(const preprocess::PreprocessedSample& s,
                                        std::size_t k) const {
    return predict(s).topk(k);
  }

  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const ModelConfig& config() const { return cfg_; }

  void save(const std::string& path, std::uint64_t seed, const json& extra = json::object()) const {
    save_checkpoint(path, store_.entries(), cfg_.to_json(), seed, extra);
  }

  static BeamModel load(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    BeamModel m(ModelConfig::from_json(ck.header.at("config")));
    load_into(ck, m.store_);
    return m;
  }

 private:
  std::size_t token_side() const {
    // square token grid whose count matches the fusion config
    std::size_t side = 1;
    while (side * side < cfg_.fus.token_count) ++side;
    if (side * side != cfg_.fus.token_count)
      throw ConfigError("BeamModel: fusion token_count must be a perfect square");
    return side;
  }

  ModelConfig cfg_;
  ParamStore store_;
  std::unique_ptr<encoders::PositionEncoder> pos_;
  std::unique_ptr<encoders::VisualEncoder> vis_;
  std::unique_ptr<encoders::PointEncoder> pts_;
  fusion::CrossModalWeights cross_;
  fusion::HeadWeights head_;
};

// Spec surface: full forward pass returning the ordered top-k list.
inline std::vector<std::size_t> predict_topk(const BeamModel& m,
                                             const preprocess::PreprocessedSample& s,
                                             std::size_t k) {
  return m.predict_topk(s, k);
}

}  // namespace beamsight::model
