// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failed criteria. Run with --only N to execute a single criterion.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "beamsight/cli.hpp"
#include "beamsight/nrlatency.hpp"
#include "beamsight/training.hpp"
#include "test_util.hpp"

using namespace beamsight;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

#ifndef BEAMSIGHT_CLI_PATH
#define BEAMSIGHT_CLI_PATH "beamsight"
#endif

struct Criterion {
  int id;
  std::string name;
  std::function<bool(std::string&)> run;
};

bool nearly(double a, double b, double tol) { return std::abs(a - b) <= tol; }

// ---------------------------------------------------------------------------
// shared tiny model/config helpers
// ---------------------------------------------------------------------------

model::ModelConfig tiny_model_cfg(model::Variant v, std::uint64_t seed) {
  model::ModelConfig cfg;
  cfg.variant = v;
  cfg.pos = {8, 1, 2, 16};
  cfg.vis.stem_channels = 2;
  cfg.vis.head_dim = 4;
  cfg.vis.mbconv_expansion = 2;
  cfg.vis.ff_ratio = 2;
  cfg.pts.embed_dim = 8;
  cfg.pts.patch_size = 4;
  cfg.pts.n_blocks = 2;
  cfg.pts.n_heads = 2;
  cfg.pts.grid_pool = 2;
  cfg.fus = {8, 2, 16, 16, 16, 4};
  cfg.image_h = 16;
  cfg.image_w = 16;
  cfg.n_points = 16;
  cfg.init_seed = seed;
  return cfg;
}

preprocess::PreprocessedSample random_sample(Rng& rng, std::size_t n_beams) {
  preprocess::PreprocessedSample s;
  s.gps_norm = {rng.uniform(), rng.uniform()};
  s.image_tensor = testutil::random_tensor({3, 16, 16}, rng, -2.0, 2.0);
  s.points_tensor = testutil::random_tensor({16, 3}, rng, -40.0, 40.0);
  s.label = rng.uniform_index(n_beams);
  return s;
}

// ---------------------------------------------------------------------------
// criterion 1 and 2: the 5G-NR timing model
// ---------------------------------------------------------------------------

bool crit1(std::string& msg) {
  nrlatency::NrTimingConfig cfg;
  bool ok = true;
  const double sweep15 = nrlatency::sweep_time_topk(15, cfg);
  const double total15 = nrlatency::end_to_end_latency(15, cfg);
  ok &= sweep15 == 2.34375;
  ok &= total15 == 3.44375;
  auto rep = nrlatency::overhead_report(64, {15}, cfg, 26.1);
  ok &= nearly(rep.rows[0].latency_reduction_pct, 86.81, 0.05);
  ok &= rep.rows[0].search_fraction_pct == 23.4375;
  ok &= rep.rows[0].search_reduction_pct == 76.5625;
  std::ostringstream os;
  os << "sweep(15)=" << sweep15 << "ms total(15)=" << total15
     << "ms latency_reduction=" << rep.rows[0].latency_reduction_pct
     << "% search_fraction=" << rep.rows[0].search_fraction_pct << "%";
  msg = os.str();
  return ok;
}

bool crit2(std::string& msg) {
  nrlatency::NrTimingConfig cfg;
  bool ok = true;
  ok &= nrlatency::sweep_time_exhaustive(64, cfg) == 25.0;
  ok &= nrlatency::sweep_time_exhaustive(32, cfg) == 5.0;
  ok &= nrlatency::sweep_time_exhaustive(33, cfg) == 25.0;
  ok &= nrlatency::sweep_time_topk(32, cfg) == 5.0;
  ok &= nrlatency::sweep_time_topk(33, cfg) == 20.15625;
  msg = "T_sp(64)=25ms, burst boundaries at K,k in {32,33} match hand evaluation";
  return ok;
}

// ---------------------------------------------------------------------------
// criterion 3: finite-difference gradient suite (20 seeds)
// ---------------------------------------------------------------------------

bool crit3(std::string& msg) {
  double worst = 0.0;
  // kernel ops on random small shapes
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(1000 + seed);
    Tensor a = testutil::random_tensor({3, 4}, rng, -1, 1, true);
    Tensor b = testutil::random_tensor({4, 2}, rng, -1, 1, true);
    worst = std::max(worst,
                     testutil::max_grad_error({a, b}, [&] { return sum_all(matmul(a, b)); }));

    Tensor x = testutil::random_tensor({3, 6}, rng, -2, 2, true);
    Tensor pr = testutil::random_tensor({3, 6}, rng);
    worst = std::max(worst, testutil::max_grad_error(
                                {x}, [&] { return sum_all(mul(softmax(x, 1), pr)); }));

    Tensor g = testutil::random_tensor({6}, rng, 0.5, 1.5, true);
    Tensor bi = testutil::random_tensor({6}, rng, -0.5, 0.5, true);
    worst = std::max(worst, testutil::max_grad_error({x, g, bi}, [&] {
      return sum_all(mul(layer_norm(x, g, bi), pr));
    }));

    Tensor img = testutil::random_tensor({2, 5, 5}, rng, -1, 1, true);
    Tensor ker = testutil::random_tensor({3, 2, 3, 3}, rng, -1, 1, true);
    Tensor kb = testutil::random_tensor({3}, rng, -1, 1, true);
    worst = std::max(worst, testutil::max_grad_error({img, ker, kb}, [&] {
      return mean_all(conv2d(img, ker, kb, 2, 1));
    }));

    Tensor dwk = testutil::random_tensor({2, 1, 3, 3}, rng, -1, 1, true);
    worst = std::max(worst, testutil::max_grad_error({img, dwk}, [&] {
      return mean_all(conv2d(img, dwk, Tensor(), 1, 1, 2));
    }));

    Tensor q = testutil::random_tensor({3, 4}, rng, -1, 1, true);
    Tensor k = testutil::random_tensor({5, 4}, rng, -1, 1, true);
    Tensor v = testutil::random_tensor({5, 4}, rng, -1, 1, true);
    Tensor apr = testutil::random_tensor({3, 4}, rng);
    worst = std::max(worst, testutil::max_grad_error({q, k, v}, [&] {
      return sum_all(mul(scaled_dot_product_attention(q, k, v, 0.5), apr));
    }));

    AttentionConfig acfg{4, 2, 2};
    MhaWeights w{testutil::random_tensor({4, 4}, rng, -1, 1, true),
                 testutil::random_tensor({4, 4}, rng, -1, 1, true),
                 testutil::random_tensor({4, 4}, rng, -1, 1, true),
                 testutil::random_tensor({4, 4}, rng, -1, 1, true)};
    Tensor seq = testutil::random_tensor({4, 4}, rng, -1, 1, true);
    Tensor mpr = testutil::random_tensor({4, 4}, rng);
    worst = std::max(worst,
                     testutil::max_grad_error({seq, w.wq, w.wk, w.wv, w.wo}, [&] {
                       return sum_all(mul(multi_head_attention(seq, seq, seq, acfg, w), mpr));
                     }));

    Tensor logits = testutil::random_tensor({3, 5}, rng, -2, 2, true);
    worst = std::max(worst, testutil::max_grad_error(
                                {logits}, [&] { return cross_entropy(logits, {1, 4, 0}); }));

    Tensor gate_in = testutil::random_tensor({1, 3}, rng, -1, 1, true);
    Tensor fmap = testutil::random_tensor({3, 4, 4}, rng, -1, 1, true);
    worst = std::max(worst, testutil::max_grad_error({gate_in, fmap}, [&] {
      return mean_all(scale_channels(fmap, sigmoid(gate_in)));
    }));
  }
  const double op_worst = worst;

  // each full model variant on a 2-sample batch, 20 seeds
  double model_worst = 0.0;
  for (auto variant : {model::Variant::Proposed, model::Variant::Baseline1PositionOnly,
                       model::Variant::Baseline2ConcatFusion}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      model::BeamModel m(tiny_model_cfg(variant, 50 + seed));
      auto params = m.params().tensors();
      Rng jit(900 + seed);
      testutil::jitter_params(params, jit);
      Rng rng(300 + seed);
      auto s1 = random_sample(rng, 16);
      auto s2 = random_sample(rng, 16);
      auto loss_fn = [&] {
        return cross_entropy(concat_rows({m.forward_logits(s1), m.forward_logits(s2)}),
                             {s1.label, s2.label});
      };
      Rng pick(700 + seed);
      model_worst = std::max(model_worst,
                             testutil::max_grad_error(params, loss_fn, 1e-4, 1, &pick));
    }
  }
  std::ostringstream os;
  os << "op FD worst rel err=" << op_worst << ", model FD worst rel err=" << model_worst
     << " (20 seeds, tol 1e-3)";
  msg = os.str();
  return op_worst < 1e-3 && model_worst < 1e-3;
}

// ---------------------------------------------------------------------------
// criterion 4: oracle equivalence on >= 100 random instances
// ---------------------------------------------------------------------------

bool crit4(std::string& msg) {
  Rng rng(4040);
  double worst = 0.0;
  bool exact_ok = true;

  // optimal_beam vs linear scan
  for (int i = 0; i < 100; ++i) {
    channel::PowerVector p(1 + rng.uniform_index(40));
    for (auto& v : p) v = rng.uniform(0.0, 3.0);
    std::size_t best = 0;
    for (std::size_t j = 1; j < p.size(); ++j)
      if (p[j] > p[best]) best = j;
    exact_ok &= channel::optimal_beam(p) == best;
  }

  // scaled dot-product attention vs the unfused oracle
  for (int i = 0; i < 100; ++i) {
    const std::size_t sq = 1 + rng.uniform_index(5), sk = 1 + rng.uniform_index(6);
    const std::size_t d = 2 + rng.uniform_index(4);
    Tensor q = testutil::random_tensor({sq, d}, rng);
    Tensor k = testutil::random_tensor({sk, d}, rng);
    Tensor v = testutil::random_tensor({sk, d}, rng);
    const double sc = 1.0 / std::sqrt(static_cast<double>(d));
    Tensor got = scaled_dot_product_attention(q, k, v, sc);
    for (std::size_t r = 0; r < sq; ++r) {
      std::vector<double> score(sk);
      double mx = -1e300;
      for (std::size_t c = 0; c < sk; ++c) {
        double s = 0;
        for (std::size_t t = 0; t < d; ++t) s += q.data()[r * d + t] * k.data()[c * d + t];
        score[c] = s * sc;
        mx = std::max(mx, score[c]);
      }
      double sum = 0;
      for (auto& s : score) {
        s = std::exp(s - mx);
        sum += s;
      }
      for (auto& s : score) s /= sum;
      for (std::size_t t = 0; t < d; ++t) {
        double expect = 0;
        for (std::size_t c = 0; c < sk; ++c) expect += score[c] * v.data()[c * d + t];
        worst = std::max(worst, std::abs(got.data()[r * d + t] - expect));
      }
    }
  }

  // multi-head attention vs the per-head oracle
  for (int i = 0; i < 100; ++i) {
    const std::size_t h = 1 + rng.uniform_index(3);
    const std::size_t hd = 2 + rng.uniform_index(3);
    const std::size_t dm = h * hd;
    const std::size_t s = 2 + rng.uniform_index(5);
    AttentionConfig cfg{dm, h, hd};
    MhaWeights w{testutil::random_tensor({dm, dm}, rng), testutil::random_tensor({dm, dm}, rng),
                 testutil::random_tensor({dm, dm}, rng), testutil::random_tensor({dm, dm}, rng)};
    Tensor x = testutil::random_tensor({s, dm}, rng);
    Tensor got = multi_head_attention(x, x, x, cfg, w);
    auto cols = [&](const Tensor& m2, std::size_t head) {
      Tensor out = Tensor::zeros({m2.dim(0), hd});
      for (std::size_t r = 0; r < m2.dim(0); ++r)
        for (std::size_t c = 0; c < hd; ++c)
          out.data()[r * hd + c] = m2.data()[r * dm + head * hd + c];
      return out;
    };
    std::vector<double> concat(s * dm);
    for (std::size_t head = 0; head < h; ++head) {
      Tensor oh = scaled_dot_product_attention(cols(matmul(x, w.wq), head),
                                               cols(matmul(x, w.wk), head),
                                               cols(matmul(x, w.wv), head),
                                               1.0 / std::sqrt(static_cast<double>(hd)));
      for (std::size_t r = 0; r < s; ++r)
        for (std::size_t c = 0; c < hd; ++c) concat[r * dm + head * hd + c] = oh.data()[r * hd + c];
    }
    Tensor expect = matmul(Tensor::from({s, dm}, concat), w.wo);
    for (std::size_t j = 0; j < expect.numel(); ++j)
      worst = std::max(worst, std::abs(got.data()[j] - expect.data()[j]));
  }

  // window and grid partitioning vs explicit loop oracles
  {
    AttentionConfig cfg{4, 2, 2};
    for (int i = 0; i < 100; ++i) {
      MhaWeights w{testutil::random_tensor({4, 4}, rng), testutil::random_tensor({4, 4}, rng),
                   testutil::random_tensor({4, 4}, rng), testutil::random_tensor({4, 4}, rng)};
      Tensor fmap = testutil::random_tensor({8, 8, 4}, rng);
      Tensor bg = encoders::block_attention(fmap, 4, cfg, w);
      for (std::size_t wy = 0; wy < 2; ++wy)
        for (std::size_t wx = 0; wx < 2; ++wx) {
          Tensor win = Tensor::zeros({16, 4});
          for (std::size_t y = 0; y < 4; ++y)
            for (std::size_t x = 0; x < 4; ++x)
              for (std::size_t c = 0; c < 4; ++c)
                win.data()[(y * 4 + x) * 4 + c] =
                    fmap.data()[((wy * 4 + y) * 8 + wx * 4 + x) * 4 + c];
          Tensor ref = multi_head_attention(win, win, win, cfg, w);
          for (std::size_t y = 0; y < 4; ++y)
            for (std::size_t x = 0; x < 4; ++x)
              for (std::size_t c = 0; c < 4; ++c)
                worst = std::max(worst,
                                 std::abs(bg.data()[((wy * 4 + y) * 8 + wx * 4 + x) * 4 + c] -
                                          ref.data()[(y * 4 + x) * 4 + c]));
        }
      Tensor gg = encoders::grid_attention(fmap, 4, cfg, w);
      for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = 0; b < 4; ++b) {
          Tensor grp = Tensor::zeros({4, 4});
          std::size_t t = 0;
          for (std::size_t p = 0; p < 2; ++p)
            for (std::size_t q = 0; q < 2; ++q, ++t)
              for (std::size_t c = 0; c < 4; ++c)
                grp.data()[t * 4 + c] = fmap.data()[((p * 4 + a) * 8 + q * 4 + b) * 4 + c];
          Tensor ref = multi_head_attention(grp, grp, grp, cfg, w);
          t = 0;
          for (std::size_t p = 0; p < 2; ++p)
            for (std::size_t q = 0; q < 2; ++q, ++t)
              for (std::size_t c = 0; c < 4; ++c)
                worst = std::max(worst,
                                 std::abs(gg.data()[((p * 4 + a) * 8 + q * 4 + b) * 4 + c] -
                                          ref.data()[t * 4 + c]));
        }
    }
  }

  // z-order serialization vs brute-force code-and-sort
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = 4 + rng.uniform_index(20);
    Tensor pts = testutil::random_tensor({n, 3}, rng, -64.0, 64.0);
    for (auto curve : {encoders::Curve::ZOrder, encoders::Curve::TransposeZ}) {
      auto got = encoders::serialize_points(pts, curve, 10, 64.0);
      std::vector<std::uint64_t> codes(n);
      for (std::size_t j = 0; j < n; ++j) {
        auto q = [&](double vv) {
          const double unit = std::clamp((vv + 64.0) / 128.0, 0.0, 1.0);
          return std::min<std::uint32_t>(static_cast<std::uint32_t>(unit * 1024.0), 1023u);
        };
        std::uint32_t qx = q(pts.data()[j * 3]), qy = q(pts.data()[j * 3 + 1]),
                      qz = q(pts.data()[j * 3 + 2]);
        if (curve == encoders::Curve::TransposeZ) std::swap(qx, qy);
        std::uint64_t code = 0;
        for (std::size_t bit = 10; bit-- > 0;)
          code = code * 8 + ((((qx >> bit) & 1u) << 2) | (((qy >> bit) & 1u) << 1) |
                             ((qz >> bit) & 1u));
        codes[j] = code;
      }
      std::vector<std::size_t> expect(n);
      std::iota(expect.begin(), expect.end(), 0);
      std::stable_sort(expect.begin(), expect.end(),
                       [&](std::size_t a, std::size_t b) { return codes[a] < codes[b]; });
      exact_ok &= got == expect;
    }
  }

  // MLP head vs the layer-by-layer oracle
  {
    fusion::FusionConfig fcfg;
    fcfg.d_z = 8;
    fcfg.n_heads = 2;
    fcfg.mlp_hidden1 = 12;
    fcfg.mlp_hidden2 = 10;
    fcfg.n_beams = 16;
    for (int i = 0; i < 100; ++i) {
      ParamStore ps;
      Rng wr(5000 + i);
      auto hw = fusion::make_head_weights(fcfg, 14, ps, wr, "h");
      Tensor zg = testutil::random_tensor({1, 6}, rng);
      Tensor zvp = testutil::random_tensor({1, 8}, rng);
      Tensor got = fusion::beam_head(zg, zvp, hw);
      Tensor z = concat_cols({zg, zvp});
      Tensor h1 = relu(layer_norm(add_bias(matmul(z, hw.w1), hw.b1), hw.ln1.gain, hw.ln1.bias));
      Tensor h2 = relu(layer_norm(add_bias(matmul(h1, hw.w2), hw.b2), hw.ln2.gain, hw.ln2.bias));
      Tensor expect = add_bias(matmul(h2, hw.w3), hw.b3);
      for (std::size_t j = 0; j < expect.numel(); ++j)
        worst = std::max(worst, std::abs(got.data()[j] - expect.data()[j]));
    }
  }

  std::ostringstream os;
  os << "max |impl - oracle| = " << worst << " over >=100 instances per kernel (tol 1e-10)";
  msg = os.str();
  return exact_ok && worst < 1e-10;
}

// ---------------------------------------------------------------------------
// criterion 5: metric identities
// ---------------------------------------------------------------------------

bool crit5(std::string& msg) {
  bool ok = true;
  Rng rng(5050);
  // perfect predictor
  std::vector<fusion::BeamPrediction> perfect;
  std::vector<std::size_t> labels;
  std::vector<channel::PowerVector> pv(200);
  std::vector<const channel::PowerVector*> powers;
  for (std::size_t i = 0; i < 200; ++i) {
    pv[i].resize(64);
    for (auto& v : pv[i]) v = rng.uniform(0.1, 2.0);
    const std::size_t lab = channel::optimal_beam(pv[i]);
    labels.push_back(lab);
    fusion::BeamPrediction p;
    p.probs.assign(64, 1e-9);
    p.probs[lab] = 1.0;
    perfect.push_back(std::move(p));
    powers.push_back(&pv[i]);
  }
  for (std::size_t k : {1ul, 5ul, 9ul, 11ul, 15ul}) {
    ok &= training::topk_accuracy(perfect, labels, k) == 1.0;
    ok &= training::average_power_loss(perfect, powers, labels, k) == 0.0;
  }

  // random predictor at k=1 within 3 sigma of 1/64 on 1000 samples
  std::vector<fusion::BeamPrediction> rand_preds;
  std::vector<std::size_t> rand_labels;
  for (std::size_t i = 0; i < 1000; ++i) {
    fusion::BeamPrediction p;
    p.probs.resize(64);
    double sum = 0;
    for (auto& v : p.probs) {
      v = rng.uniform(0.0, 1.0);
      sum += v;
    }
    for (auto& v : p.probs) v /= sum;
    rand_preds.push_back(std::move(p));
    rand_labels.push_back(rng.uniform_index(64));
  }
  const double acc1 = training::topk_accuracy(rand_preds, rand_labels, 1);
  const double pexp = 1.0 / 64.0;
  const double sigma = std::sqrt(pexp * (1 - pexp) / 1000.0);
  ok &= std::abs(acc1 - pexp) <= 3.0 * sigma;

  // monotonicity on a generic evaluation
  std::vector<fusion::BeamPrediction> preds;
  std::vector<std::size_t> lab2;
  std::vector<channel::PowerVector> pv2(150);
  std::vector<const channel::PowerVector*> pw2;
  for (std::size_t i = 0; i < 150; ++i) {
    pv2[i].resize(64);
    for (auto& v : pv2[i]) v = rng.uniform(0.05, 2.0);
    lab2.push_back(channel::optimal_beam(pv2[i]));
    pw2.push_back(&pv2[i]);
    fusion::BeamPrediction p;
    p.probs.resize(64);
    double sum = 0;
    for (auto& v : p.probs) {
      v = rng.uniform(0.0, 1.0);
      sum += v;
    }
    for (auto& v : p.probs) v /= sum;
    preds.push_back(std::move(p));
  }
  double prev_acc = -1, prev_apl = 1e300;
  for (std::size_t k = 1; k <= 64; ++k) {
    const double a = training::topk_accuracy(preds, lab2, k);
    const double l = training::average_power_loss(preds, pw2, lab2, k);
    ok &= a >= prev_acc - 1e-15;
    ok &= l <= prev_apl + 1e-12;
    prev_acc = a;
    prev_apl = l;
  }
  std::ostringstream os;
  os << "perfect: acc=1, APL=0 dB; random top-1=" << acc1 << " (expect " << pexp << " +-"
     << 3 * sigma << "); monotone over k=1..64";
  msg = os.str();
  return ok;
}

// ---------------------------------------------------------------------------
// criterion 6 and 8: desk-scale learning and loss-curve sanity
// ---------------------------------------------------------------------------

struct LearningArtifacts {
  bool ran = false;
  std::vector<double> primary_train_loss;
  std::vector<double> primary_val_loss;
};
LearningArtifacts g_learning;

model::ModelConfig desk_model_cfg(model::Variant v, std::uint64_t init_seed) {
  model::ModelConfig cfg;  // desk defaults from the headers
  cfg.variant = v;
  cfg.init_seed = init_seed;
  return cfg;
}

bool crit6(std::string& msg) {
  const std::size_t n = 2000;
  scenegen::Scene scene = scenegen::make_scene("v2i-day", n, 7);
  scenegen::GenConfig gcfg = scenegen::default_gen_config("v2i-day");
  scenegen::ChannelSetup ch;
  auto samples = scenegen::generate_samples(scene, n, ch, gcfg);

  const std::vector<std::size_t> ks = {1, 5, 9, 11, 15};
  std::ostringstream os;
  bool primary_ok = false;
  int gap_hits = 0;
  double b2_top1 = 0.0, b2_apl15 = 0.0;

  const std::uint64_t seeds[3] = {7, 8, 9};
  for (int run = 0; run < 3; ++run) {
    const std::uint64_t seed = seeds[run];
    training::TrainConfig tc;
    tc.seed = seed;
    auto split = training::split_dataset(n, tc.split_ratio, tc.seed);
    preprocess::PreprocConfig pcfg;
    pcfg.downsample_seed = seed;
    preprocess::fit_gps_range(samples, split.train, pcfg);
    std::vector<preprocess::PreprocessedSample> data;
    data.reserve(n);
    for (const auto& s : samples) data.push_back(preprocess::preprocess_sample(s, pcfg));

    auto train_variant = [&](model::Variant v) {
      model::BeamModel m(desk_model_cfg(v, seed * 1000 + 1));
      auto out = training::train(m, data, split, tc);
      m.params().restore(out.best_weights);
      auto rep = training::evaluate(m, data, samples, split.test, ks);
      return std::make_pair(out, rep);
    };

    auto [p_out, p_rep] = train_variant(model::Variant::Proposed);
    auto [b1_out, b1_rep] = train_variant(model::Variant::Baseline1PositionOnly);

    const bool gap = p_rep.topk_acc[1] > b1_rep.topk_acc[1] &&
                     p_rep.apl_db[15] <= b1_rep.apl_db[15] + 1e-12;
    gap_hits += gap ? 1 : 0;
    os << "\n    seed " << seed << ": proposed top1=" << p_rep.topk_acc[1]
       << " top15=" << p_rep.topk_acc[15] << " apl15=" << p_rep.apl_db[15]
       << " | baseline1 top1=" << b1_rep.topk_acc[1] << " apl15=" << b1_rep.apl_db[15]
       << (gap ? "  [gap ok]" : "  [gap MISSED]");

    if (run == 0) {
      primary_ok = p_rep.topk_acc[1] >= 0.60 && p_rep.topk_acc[15] >= 0.95;
      g_learning.primary_train_loss = p_out.train_loss;
      g_learning.primary_val_loss = p_out.val_loss;
      g_learning.ran = true;
      // baseline2 once on the primary seed for the full ordering report
      auto [b2_out, b2_rep] = train_variant(model::Variant::Baseline2ConcatFusion);
      (void)b2_out;
      b2_top1 = b2_rep.topk_acc[1];
      b2_apl15 = b2_rep.apl_db[15];
      os << "\n    seed " << seed << ": baseline2 top1=" << b2_top1 << " apl15=" << b2_apl15;
    }
  }
  os << "\n    gap (b,c) held in " << gap_hits << "/3 seeded reruns";
  msg = os.str();
  return primary_ok && gap_hits >= 2;
}

bool crit8(std::string& msg) {
  if (!g_learning.ran) {
    msg = "criterion 6 artifacts unavailable (run criterion 6 first)";
    return false;
  }
  const auto& tl = g_learning.primary_train_loss;
  const auto& vl = g_learning.primary_val_loss;
  const double first = tl.front(), last = tl.back();
  double vmin = vl[0];
  for (double v : vl) vmin = std::min(vmin, v);
  const bool ok = last < 0.5 * first && vl.back() <= 1.2 * vmin;
  std::ostringstream os;
  os << "train e1=" << first << " e" << tl.size() << "=" << last << " (<50%: "
     << (last < 0.5 * first ? "yes" : "NO") << "); val final=" << vl.back()
     << " min=" << vmin << " (<=1.2x: " << (vl.back() <= 1.2 * vmin ? "yes" : "NO") << ")";
  msg = os.str();
  return ok;
}

// ---------------------------------------------------------------------------
// criterion 7: end-to-end determinism through the CLI binary
// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

bool crit7(std::string& msg) {
  const fs::path root = fs::temp_directory_path() / "bs_accept_det";
  fs::remove_all(root);
  // a reduced config keeps the double pipeline cheap; determinism is
  // config-independent
  const fs::path cfg = root / "config.json";
  fs::create_directories(root);
  {
    json j;
    j["n_samples"] = 120;
    j["channel"] = {{"n_beams", 32}};
    j["gen"] = {{"lidar_azimuth_rays", 48}, {"lidar_elevation_rays", 3}};
    j["preproc"] = {{"image_h", 16}, {"image_w", 16}, {"n_points", 64}};
    j["model"] = {{"pos", {{"embed_dim", 16}, {"n_layers", 1}, {"n_heads", 2}, {"ff_dim", 32}}},
                  {"vis", {{"stem_channels", 2}, {"head_dim", 4}, {"mbconv_expansion", 2}}},
                  {"pts", {{"embed_dim", 8}, {"patch_size", 4}, {"n_blocks", 2},
                           {"n_heads", 2}, {"grid_pool", 2}}},
                  {"fus", {{"d_z", 8}, {"n_heads", 2}, {"mlp_hidden1", 32},
                           {"mlp_hidden2", 32}, {"token_count", 16}}}};
    j["train"] = {{"epochs", 3}, {"batch_size", 4}};
    std::ofstream out(cfg);
    out << j.dump(2);
  }
  auto pipeline = [&](const fs::path& dir) {
    fs::create_directories(dir / "data");
    fs::create_directories(dir / "train");
    fs::create_directories(dir / "eval");
    const std::string base = std::string(BEAMSIGHT_CLI_PATH) + " ";
    const std::string common = " --config " + cfg.string() + " --seed 21 ";
    int rcode = std::system((base + "gen-data" + common + "--out " + (dir / "data").string() +
                             " > /dev/null 2>&1")
                                .c_str());
    if (WEXITSTATUS(rcode) != 0) return false;
    rcode = std::system((base + "train" + common + "--data " + (dir / "data").string() +
                         " --out " + (dir / "train").string() + " > /dev/null 2>&1")
                            .c_str());
    if (WEXITSTATUS(rcode) != 0) return false;
    rcode = std::system((base + "eval" + common + "--data " + (dir / "data").string() +
                         " --checkpoint " + (dir / "train" / "best.bsw").string() + " --out " +
                         (dir / "eval").string() + " > /dev/null 2>&1")
                            .c_str());
    return WEXITSTATUS(rcode) == 0;
  };
  if (!pipeline(root / "a") || !pipeline(root / "b")) {
    msg = "pipeline run failed";
    return false;
  }
  bool ok = true;
  std::vector<std::string> same;
  for (const std::string rel :
       {"data/samples.bin", "data/manifest.json", "data/labels.csv", "train/loss_curves.csv",
        "train/best.bsw", "train/eval_report.json", "eval/eval_report.json",
        "eval/predictions.csv"}) {
    const bool eq = slurp(root / "a" / rel) == slurp(root / "b" / rel);
    ok &= eq;
    if (!eq) same.push_back(rel);
  }
  msg = ok ? "gen-data -> train -> eval twice: identical dataset bytes, loss curves, reports"
           : "mismatched artifacts: " + [&] {
               std::string s;
               for (const auto& r : same) s += r + " ";
               return s;
             }();
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i)
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) only = std::atoi(argv[i + 1]);

  std::vector<Criterion> criteria = {
      {1, "latency model exact values", crit1},
      {2, "Eq. sweep-time regression at burst boundaries", crit2},
      {3, "finite-difference gradient suite", crit3},
      {4, "oracle equivalence", crit4},
      {5, "metric identities", crit5},
      {6, "desk-scale learning vs baselines", crit6},
      {7, "end-to-end determinism", crit7},
      {8, "loss-curve sanity", crit8},
  };

  int failures = 0;
  for (auto& c : criteria) {
    if (only != 0 && c.id != only && !(only == 6 && c.id == 8)) continue;
    const auto t0 = Clock::now();
    std::string msg;
    bool ok = false;
    try {
      ok = c.run(msg);
    } catch (const std::exception& e) {
      msg = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    std::printf("[%s] criterion %d: %s (%.1fs) %s\n", ok ? "PASS" : "FAIL", c.id,
                c.name.c_str(), secs, msg.c_str());
    std::fflush(stdout);
    failures += ok ? 0 : 1;
  }
  return failures;
}
