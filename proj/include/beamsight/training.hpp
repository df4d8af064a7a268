#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "beamsight/adam.hpp"
#include "beamsight/model.hpp"
#include "beamsight/preprocess.hpp"
#include "beamsight/scenegen.hpp"

namespace beamsight::training {

struct TrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 4;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  std::array<std::size_t, 3> split_ratio{6, 2, 2};
  std::uint64_t seed = 7;
  model::Variant variant = model::Variant::Proposed;

  void validate() const {
    if (split_ratio[0] + split_ratio[1] + split_ratio[2] != 10)
      throw ConfigError("TrainConfig: split ratios must sum to 10");
    if (epochs < 1 || batch_size < 1) throw ConfigError("TrainConfig: epochs/batch_size >= 1");
  }
};

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

// Seeded shuffle, then contiguous cuts at the ratio boundaries.
inline SplitIndices split_dataset(std::size_t n, const std::array<std::size_t, 3>& ratios,
                                  std::uint64_t seed) {
  if (ratios[0] + ratios[1] + ratios[2] != 10)
    throw ConfigError("split_dataset: ratios must sum to 10");
  if (n < 10) throw DataError("split_dataset: at least 10 samples required");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);
  const std::size_t n_train = n * ratios[0] / 10;
  const std::size_t n_val = n * ratios[1] / 10;
  SplitIndices s;
  s.train.assign(idx.begin(), idx.begin() + n_train);
  s.val.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
  s.test.assign(idx.begin() + n_train + n_val, idx.end());
  return s;
}

// Fraction of samples whose true beam appears in the model's top-k list.
inline double topk_accuracy(const std::vector<fusion::BeamPrediction>& predictions,
                            const std::vector<std::size_t>& labels, std::size_t k) {
  if (predictions.size() != labels.size())
    throw DataError("topk_accuracy: prediction/label count mismatch");
  if (predictions.empty()) throw DataError("topk_accuracy: empty evaluation set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    auto top = predictions[i].topk(k);
    for (auto b : top)
      if (b == labels[i]) {
        ++hits;
        break;
      }
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

// APL = -10 log10( mean( (p_hat - p_o) / (p_gt - p_o) ) ), where p_hat is the
// best received power among the k predicted beams.
inline double average_power_loss(const std::vector<fusion::BeamPrediction>& predictions,
                                 const std::vector<const channel::PowerVector*>& powers,
                                 const std::vector<std::size_t>& labels, std::size_t k,
                                 double p_o = 0.0) {
  if (predictions.size() != powers.size() || predictions.size() != labels.size())
    throw DataError("average_power_loss: input sizes disagree");
  if (predictions.empty()) throw DataError("average_power_loss: empty evaluation set");
  double acc = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& pv = *powers[i];
    const double p_gt = pv[labels[i]];
    if (!(p_gt > p_o))
      throw DataError("average_power_loss: ground-truth power does not exceed the noise floor");
    double p_hat = -std::numeric_limits<double>::infinity();
    for (auto b : predictions[i].topk(k)) p_hat = std::max(p_hat, pv[b]);
    acc += (p_hat - p_o) / (p_gt - p_o);
  }
  const double apl = -10.0 * std::log10(acc / static_cast<double>(predictions.size()));
  return apl == 0.0 ? 0.0 : apl;  // keep a perfect score at +0
}

struct EvalReport {
  std::vector<std::size_t> ks;
  std::map<std::size_t, double> topk_acc;
  std::map<std::size_t, double> apl_db;
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::size_t n_test = 0;
  std::string variant;

  json to_json() const {
    json j;
    j["variant"] = variant;
    j["n_test"] = n_test;
    j["k"] = ks;
    json acc = json::object(), apl = json::object();
    for (auto& [k, v] : topk_acc) acc[std::to_string(k)] = v;
    for (auto& [k, v] : apl_db) apl[std::to_string(k)] = v;
    j["topk_accuracy"] = acc;
    j["apl_db"] = apl;
    j["train_loss"] = train_loss;
    j["val_loss"] = val_loss;
    return j;
  }
};

inline std::string loss_curve_csv(const std::vector<double>& train,
                                  const std::vector<double>& val) {
  std::ostringstream out;
  out << std::setprecision(17) << "epoch,train_loss,val_loss\n";
  for (std::size_t e = 0; e < train.size(); ++e)
    out << (e + 1) << "," << train[e] << "," << (e < val.size() ? val[e] : 0.0) << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainOutcome {
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_loss;
  std::size_t best_epoch = 0;  // 1-based
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_weights;
};

inline double mean_validation_loss(const model::BeamModel& m,
                                   const std::vector<preprocess::PreprocessedSample>& data,
                                   const std::vector<std::size_t>& val_idx) {
  NoGradGuard ng;
  double acc = 0.0;
  for (auto i : val_idx) {
    Tensor logits = m.forward_logits(data[i]);
    acc += cross_entropy(logits, {data[i].label}).value();
  }
  return acc / static_cast<double>(val_idx.size());
}

// Epoch-indexed minibatch Adam. The per-epoch sample order derives from
// (seed, epoch), so resuming at epoch E reproduces the uninterrupted run
// exactly given the same weights and optimizer state.
inline TrainOutcome train(model::BeamModel& m,
                          const std::vector<preprocess::PreprocessedSample>& data,
                          const SplitIndices& split, const TrainConfig& cfg,
                          AdamState* state = nullptr, std::size_t start_epoch = 0,
                          const TrainOutcome* prior = nullptr) {
  cfg.validate();
  if (split.train.empty() || split.val.empty())
    throw DataError("train: empty train or validation split");
  auto params = m.params().tensors();
  AdamState local;
  AdamState& opt = state ? *state : local;
  if (opt.m.size() != params.size()) opt.init(params);
  const AdamConfig acfg{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};

  TrainOutcome out;
  if (prior) out = *prior;
  if (out.best_weights.empty()) {
    out.best_weights = m.params().snapshot();
    out.best_val = std::numeric_limits<double>::infinity();
  }

  for (std::size_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = split.train;
    Rng shuffle_rng = Rng(cfg.seed).fork(0xE70C + epoch);
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t take = std::min(cfg.batch_size, order.size() - b);
      std::vector<Tensor> logits;
      std::vector<std::size_t> labels;
      logits.reserve(take);
      for (std::size_t j = 0; j < take; ++j) {
        const auto& s = data[order[b + j]];
        logits.push_back(m.forward_logits(s));
        labels.push_back(s.label);
      }
      Tensor loss = cross_entropy(concat_rows(logits), labels);
      const double lv = loss.value();
      if (!std::isfinite(lv)) throw NumericError("train: loss diverged (non-finite)");
      epoch_loss += lv * static_cast<double>(take);
      m.params().zero_grad();
      backward(loss);
      adam_step(params, opt, acfg);
    }
    out.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));

    const double vl = mean_validation_loss(m, data, split.val);
    if (!std::isfinite(vl)) throw NumericError("train: validation loss diverged");
    out.val_loss.push_back(vl);
    if (vl < out.best_val) {
      out.best_val = vl;
      out.best_epoch = epoch + 1;
      out.best_weights = m.params().snapshot();
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

// Inference fans out across workers on the frozen weights; slots are written
// by index, so the merged result is identical for any worker count.
inline EvalReport evaluate(const model::BeamModel& m,
                           const std::vector<preprocess::PreprocessedSample>& data,
                           const std::vector<scenegen::Sample>& raw,
                           const std::vector<std::size_t>& test_idx,
                           const std::vector<std::size_t>& ks, double p_o = 0.0,
                           std::size_t n_workers = 1) {
  EvalReport rep;
  rep.ks = ks;
  rep.n_test = test_idx.size();
  rep.variant = model::variant_str(m.config().variant);
  std::vector<fusion::BeamPrediction> preds(test_idx.size());
  std::vector<std::size_t> labels(test_idx.size());
  std::vector<const channel::PowerVector*> powers(test_idx.size());
  n_workers = std::max<std::size_t>(1, std::min(n_workers, test_idx.size()));
  auto worker = [&](std::size_t w) {
    for (std::size_t j = w; j < test_idx.size(); j += n_workers) {
      const std::size_t i = test_idx[j];
      preds[j] = m.predict(data[i]);
      labels[j] = data[i].label;
      powers[j] = &raw[i].powers;
    }
  };
  if (n_workers == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker, w);
    for (auto& t : pool) t.join();
  }
  for (auto k : ks) {
    rep.topk_acc[k] = topk_accuracy(preds, labels, k);
    rep.apl_db[k] = average_power_loss(preds, powers, labels, k, p_o);
  }
  return rep;
}

// Prediction dump: sample_index, label, then the K probabilities.
inline std::string predictions_csv(const model::BeamModel& m,
                                   const std::vector<preprocess::PreprocessedSample>& data,
                                   const std::vector<std::size_t>& test_idx) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "sample_index,label";
  const std::size_t k_total = m.config().fus.n_beams;
  for (std::size_t k = 0; k < k_total; ++k) out << ",p" << k;
  out << "\n";
  for (auto i : test_idx) {
    auto pred = m.predict(data[i]);
    out << i << "," << data[i].label;
    for (double p : pred.probs) out << "," << p;
    out << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Baselines: identical training budget across the three variants
// ---------------------------------------------------------------------------

struct BaselineRun {
  EvalReport report;
  std::size_t param_count = 0;
};

inline std::map<std::string, BaselineRun> run_baselines(
    const model::ModelConfig& base_cfg, const std::vector<preprocess::PreprocessedSample>& data,
    const std::vector<scenegen::Sample>& raw, const SplitIndices& split, const TrainConfig& cfg,
    const std::vector<std::size_t>& ks, double p_o = 0.0) {
  std::map<std::string, BaselineRun> out;
  for (auto variant : {model::Variant::Proposed, model::Variant::Baseline1PositionOnly,
                       model::Variant::Baseline2ConcatFusion}) {
    model::ModelConfig mc = base_cfg;
    mc.variant = variant;
    model::BeamModel m(mc);
    TrainConfig tc = cfg;
    tc.variant = variant;
    TrainOutcome outcome = train(m, data, split, tc);
    m.params().restore(outcome.best_weights);
    BaselineRun run;
    run.report = evaluate(m, data, raw, split.test, ks, p_o);
    run.report.train_loss = outcome.train_loss;
    run.report.val_loss = outcome.val_loss;
    run.param_count = m.params().param_count();
    out[model::variant_str(variant)] = run;
  }
  return out;
}

}  // namespace beamsight::training
