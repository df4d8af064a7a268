#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "beamsight/nrlatency.hpp"
#include "beamsight/training.hpp"

namespace beamsight::cli {

namespace fs = std::filesystem;

// Fully resolved run parameters. Precedence: built-in defaults, then the
// --config file, then explicit command-line flags; the resolved document is
// echoed into every output artifact.
struct RunConfig {
  std::string command;
  std::string config_path;
  std::string out_dir;
  std::string data_dir;
  std::string checkpoint_path;
  std::string resume_dir;
  std::string scenario = "v2i-day";
  std::string variant = "proposed";
  std::size_t n_samples = 2000;
  std::uint64_t seed = 7;
  std::vector<std::size_t> k_list = {1, 5, 9, 11, 15};
  std::size_t k_total = 64;
  double exhaustive_total_ms = 26.1;
  double noise_floor_power = 0.0;

  scenegen::ChannelSetup channel;
  scenegen::GenConfig gen;
  preprocess::PreprocConfig preproc;
  model::ModelConfig model_cfg;
  training::TrainConfig train;
  nrlatency::NrTimingConfig timing;

  // flags the caller explicitly supplied (to give them final precedence)
  std::vector<std::string> overridden;

  bool was_set(const std::string& name) const {
    return std::find(overridden.begin(), overridden.end(), name) != overridden.end();
  }
};

inline std::size_t worker_cap() {
  if (const char* env = std::getenv("BEAMSIGHT_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<std::size_t>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

// ---------------------------------------------------------------------------
// Config file merge
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void merge_config_file(RunConfig& rc) {
  if (rc.config_path.empty()) return;
  std::ifstream in(rc.config_path);
  if (!in) throw ConfigError("cannot open config file: " + rc.config_path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config file parse error: ") + e.what());
  }
  if (!rc.was_set("seed")) maybe(j, "seed", rc.seed);
  if (!rc.was_set("scenario")) maybe(j, "scenario", rc.scenario);
  if (!rc.was_set("n")) maybe(j, "n_samples", rc.n_samples);
  if (!rc.was_set("variant")) maybe(j, "variant", rc.variant);
  if (j.contains("channel")) {
    const auto& c = j["channel"];
    maybe(c, "n_rx", rc.channel.codebook.n_rx);
    maybe(c, "n_beams", rc.channel.codebook.n_beams);
    maybe(c, "wavelength", rc.channel.codebook.wavelength);
    maybe(c, "spacing", rc.channel.codebook.spacing);
    maybe(c, "n_subcarriers", rc.channel.ofdm.n_subcarriers);
    maybe(c, "symbol_period_s", rc.channel.ofdm.symbol_period_s);
    maybe(c, "noise_variance", rc.channel.ofdm.noise_variance);
    maybe(c, "symbol_power", rc.channel.ofdm.symbol_power);
  }
  if (j.contains("gen")) {
    const auto& g = j["gen"];
    maybe(g, "gps_sigma_m", rc.gen.gps_sigma_m);
    maybe(g, "image_w", rc.gen.camera.width);
    maybe(g, "image_h", rc.gen.camera.height);
    maybe(g, "focal_px", rc.gen.camera.focal_px);
    maybe(g, "lidar_azimuth_rays", rc.gen.lidar.n_azimuth_rays);
    maybe(g, "lidar_elevation_rays", rc.gen.lidar.n_elevation_rays);
    maybe(g, "max_reflections", rc.gen.max_reflections);
    maybe(g, "day_pixel_noise_sigma", rc.gen.day_pixel_noise_sigma);
  }
  if (j.contains("preproc")) {
    const auto& p = j["preproc"];
    maybe(p, "image_h", rc.preproc.image_h);
    maybe(p, "image_w", rc.preproc.image_w);
    maybe(p, "n_points", rc.preproc.n_points);
  }
  if (j.contains("model")) {
    // partial overrides onto the desk defaults
    json m = rc.model_cfg.to_json();
    m.merge_patch(j["model"]);
    rc.model_cfg = model::ModelConfig::from_json(m);
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    if (!rc.was_set("epochs")) maybe(t, "epochs", rc.train.epochs);
    if (!rc.was_set("batch-size")) maybe(t, "batch_size", rc.train.batch_size);
    if (!rc.was_set("lr")) maybe(t, "lr", rc.train.lr);
    if (!rc.was_set("weight-decay")) maybe(t, "weight_decay", rc.train.weight_decay);
  }
  if (j.contains("latency")) {
    const auto& l = j["latency"];
    maybe(l, "t_bs_ms", rc.timing.t_bs_ms);
    maybe(l, "T_ssb_ms", rc.timing.t_ssb_period_ms);
    maybe(l, "blocks_per_burst", rc.timing.blocks_per_burst);
    maybe(l, "T_prc_plus_fb_ms", rc.timing.t_prc_plus_fb_ms);
    maybe(l, "T_inf_ms", rc.timing.t_inf_ms);
    if (!rc.was_set("exhaustive-ms")) maybe(l, "exhaustive_total_ms", rc.exhaustive_total_ms);
    if (!rc.was_set("K")) maybe(l, "K", rc.k_total);
  }
}

inline json resolved_config(const RunConfig& rc) {
  json j;
  j["command"] = rc.command;
  j["seed"] = rc.seed;
  j["scenario"] = rc.scenario;
  j["n_samples"] = rc.n_samples;
  j["variant"] = rc.variant;
  j["k_list"] = rc.k_list;
  j["channel"] = {{"n_rx", rc.channel.codebook.n_rx},
                  {"n_beams", rc.channel.codebook.n_beams},
                  {"wavelength", rc.channel.codebook.wavelength},
                  {"spacing", rc.channel.codebook.spacing},
                  {"n_subcarriers", rc.channel.ofdm.n_subcarriers},
                  {"noise_variance", rc.channel.ofdm.noise_variance},
                  {"symbol_power", rc.channel.ofdm.symbol_power}};
  j["gen"] = {{"gps_sigma_m", rc.gen.gps_sigma_m},
              {"image_w", rc.gen.camera.width},
              {"image_h", rc.gen.camera.height},
              {"max_reflections", rc.gen.max_reflections}};
  j["preproc"] = {{"image_h", rc.preproc.image_h},
                  {"image_w", rc.preproc.image_w},
                  {"n_points", rc.preproc.n_points}};
  j["model"] = rc.model_cfg.to_json();
  j["train"] = {{"epochs", rc.train.epochs},
                {"batch_size", rc.train.batch_size},
                {"lr", rc.train.lr},
                {"weight_decay", rc.train.weight_decay},
                {"split_ratio", rc.train.split_ratio}};
  j["latency"] = {{"t_bs_ms", rc.timing.t_bs_ms},
                  {"T_ssb_ms", rc.timing.t_ssb_period_ms},
                  {"blocks_per_burst", rc.timing.blocks_per_burst},
                  {"T_prc_plus_fb_ms", rc.timing.t_prc_plus_fb_ms},
                  {"T_inf_ms", rc.timing.t_inf_ms},
                  {"K", rc.k_total},
                  {"exhaustive_total_ms", rc.exhaustive_total_ms}};
  return j;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

struct LoadedDataset {
  std::vector<scenegen::Sample> samples;
  training::SplitIndices split;
  preprocess::PreprocConfig preproc;
  std::vector<preprocess::PreprocessedSample> data;
};

inline LoadedDataset load_and_preprocess(const RunConfig& rc) {
  scenegen::DatasetReader reader(rc.data_dir);
  LoadedDataset out;
  out.samples = reader.read_all();
  if (out.samples.empty()) throw DataError("dataset is empty: " + rc.data_dir);
  out.split = training::split_dataset(out.samples.size(), rc.train.split_ratio, rc.seed);
  out.preproc = rc.preproc;
  out.preproc.downsample_seed = rc.seed;
  preprocess::fit_gps_range(out.samples, out.split.train, out.preproc);
  out.data.reserve(out.samples.size());
  for (const auto& s : out.samples)
    out.data.push_back(preprocess::preprocess_sample(s, out.preproc));
  return out;
}

inline double label_entropy_bits(const std::vector<scenegen::Sample>& samples,
                                 std::size_t k_total) {
  std::vector<double> hist(k_total, 0.0);
  for (const auto& s : samples) hist[s.label] += 1.0;
  double ent = 0.0;
  for (double c : hist) {
    if (c == 0.0) continue;
    const double p = c / static_cast<double>(samples.size());
    ent -= p * std::log2(p);
  }
  return ent;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline int cmd_gen_data(RunConfig& rc) {
  detail::merge_config_file(rc);
  if (rc.out_dir.empty()) throw ConfigError("gen-data: --out is required");
  if (!fs::is_directory(rc.out_dir))
    throw DataError("gen-data: output directory does not exist: " + rc.out_dir);
  scenegen::Scene scene = scenegen::make_scene(rc.scenario, rc.n_samples, rc.seed, rc.gen.dt_s);
  auto man = scenegen::generate_dataset(scene, rc.n_samples, rc.channel, rc.gen, rc.out_dir);
  channel::dump_codebook_csv(channel::make_codebook(rc.channel.codebook),
                             (fs::path(rc.out_dir) / "codebook.csv").string());
  detail::write_text(fs::path(rc.out_dir) / "run_config.json",
                     detail::resolved_config(rc).dump(2) + "\n");
  scenegen::DatasetReader reader(rc.out_dir, /*validate=*/false);
  std::cout << "gen-data: n=" << man.n_samples << " scenario=" << man.scenario
            << " label_entropy_bits=" << detail::label_entropy_bits(reader.read_all(),
                                                                    rc.channel.codebook.n_beams)
            << " seed=" << rc.seed << "\n";
  return 0;
}

inline int cmd_train(RunConfig& rc) {
  detail::merge_config_file(rc);
  if (rc.data_dir.empty()) throw ConfigError("train: --data is required");
  if (rc.out_dir.empty()) throw ConfigError("train: --out is required");
  if (!fs::is_directory(rc.out_dir))
    throw DataError("train: output directory does not exist: " + rc.out_dir);
  auto ds = detail::load_and_preprocess(rc);

  model::ModelConfig mc = rc.model_cfg;
  mc.variant = model::variant_from_str(rc.variant);
  mc.fus.n_beams = rc.channel.codebook.n_beams;
  mc.image_h = rc.preproc.image_h;
  mc.image_w = rc.preproc.image_w;
  mc.n_points = rc.preproc.n_points;
  mc.init_seed = rc.seed * 1000 + 1;
  training::TrainConfig tc = rc.train;
  tc.seed = rc.seed;
  tc.variant = mc.variant;

  model::BeamModel m(mc);
  AdamState opt;
  std::size_t start_epoch = 0;
  training::TrainOutcome prior;
  bool resuming = false;
  if (!rc.resume_dir.empty()) {
    // last.bsw carries weights + moments; its header carries the loop state
    Checkpoint last = load_checkpoint((fs::path(rc.resume_dir) / "last.bsw").string());
    const auto& params = m.params().entries();
    if (last.tensors.size() != params.size() * 3)
      throw DataError("train: resume checkpoint does not match the model layout");
    opt.init(m.params().tensors());
    for (std::size_t i = 0; i < params.size(); ++i) {
      const_cast<Tensor&>(params[i].second).data() = last.tensors[i].second.data();
      opt.m[i] = last.tensors[params.size() + i].second.data();
      opt.v[i] = last.tensors[2 * params.size() + i].second.data();
    }
    const auto& st = last.header.at("train_state");
    opt.step = st.at("adam_step").get<std::int64_t>();
    start_epoch = st.at("next_epoch").get<std::size_t>();
    prior.train_loss = st.at("train_loss").get<std::vector<double>>();
    prior.val_loss = st.at("val_loss").get<std::vector<double>>();
    prior.best_epoch = st.at("best_epoch").get<std::size_t>();
    prior.best_val = st.at("best_val").get<double>();
    Checkpoint best = load_checkpoint((fs::path(rc.resume_dir) / "best.bsw").string());
    for (const auto& [name, t] : best.tensors) prior.best_weights.push_back(t.data());
    resuming = true;
  }

  auto outcome = training::train(m, ds.data, ds.split, tc, &opt, start_epoch,
                                 resuming ? &prior : nullptr);

  json echo = detail::resolved_config(rc);
  // the scenario-specific normalization constants fitted on the train split
  echo["preproc"]["gps_range"] = {{"min_lat", ds.preproc.gps_min_lat},
                                  {"max_lat", ds.preproc.gps_max_lat},
                                  {"min_lon", ds.preproc.gps_min_lon},
                                  {"max_lon", ds.preproc.gps_max_lon}};
  // best checkpoint: plain weights at the best validation epoch
  {
    auto last_weights = m.params().snapshot();
    m.params().restore(outcome.best_weights);
    m.save((fs::path(rc.out_dir) / "best.bsw").string(), rc.seed,
           json{{"run_config", echo},
                {"best_epoch", outcome.best_epoch},
                {"best_val_loss", outcome.best_val}});
    m.params().restore(last_weights);
  }
  // resumable checkpoint: weights + Adam moments + loop state
  {
    std::vector<std::pair<std::string, Tensor>> tensors = m.params().entries();
    const auto& params = m.params().entries();
    for (std::size_t i = 0; i < params.size(); ++i)
      tensors.emplace_back("adam.m." + params[i].first,
                           Tensor::from(params[i].second.shape(), opt.m[i]));
    for (std::size_t i = 0; i < params.size(); ++i)
      tensors.emplace_back("adam.v." + params[i].first,
                           Tensor::from(params[i].second.shape(), opt.v[i]));
    save_checkpoint((fs::path(rc.out_dir) / "last.bsw").string(), tensors, mc.to_json(), rc.seed,
                    json{{"run_config", echo},
                         {"train_state",
                          {{"adam_step", opt.step},
                           {"next_epoch", tc.epochs},
                           {"train_loss", outcome.train_loss},
                           {"val_loss", outcome.val_loss},
                           {"best_epoch", outcome.best_epoch},
                           {"best_val", outcome.best_val}}}});
  }
  detail::write_text(fs::path(rc.out_dir) / "loss_curves.csv",
                     training::loss_curve_csv(outcome.train_loss, outcome.val_loss));

  // validation-split report from the best checkpoint
  m.params().restore(outcome.best_weights);
  auto rep = training::evaluate(m, ds.data, ds.samples, ds.split.val, rc.k_list,
                                rc.noise_floor_power);
  rep.train_loss = outcome.train_loss;
  rep.val_loss = outcome.val_loss;
  json rj = rep.to_json();
  rj["split"] = "validation";
  rj["run_config"] = echo;
  detail::write_text(fs::path(rc.out_dir) / "eval_report.json", rj.dump(2) + "\n");
  detail::write_text(fs::path(rc.out_dir) / "run_config.json", echo.dump(2) + "\n");

  std::cout << "train: variant=" << rc.variant << " epochs=" << tc.epochs
            << " best_epoch=" << outcome.best_epoch << " best_val_loss=" << outcome.best_val
            << " seed=" << rc.seed << "\n";
  return 0;
}

inline int cmd_eval(RunConfig& rc) {
  detail::merge_config_file(rc);
  if (rc.data_dir.empty()) throw ConfigError("eval: --data is required");
  if (rc.checkpoint_path.empty()) throw ConfigError("eval: --checkpoint is required");
  if (rc.out_dir.empty()) throw ConfigError("eval: --out is required");
  if (!fs::is_directory(rc.out_dir))
    throw DataError("eval: output directory does not exist: " + rc.out_dir);
  model::BeamModel m = model::BeamModel::load(rc.checkpoint_path);
  auto ds = detail::load_and_preprocess(rc);
  if (m.config().fus.n_beams != ds.samples[0].powers.size())
    throw ConfigError("eval: checkpoint beam count disagrees with the dataset");

  std::vector<std::size_t> ks = rc.k_list;
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());

  // noise-floor estimate: the minimum observed power over the test split
  double p_o = rc.noise_floor_power;
  if (rc.was_set("estimate-noise-floor")) {
    p_o = std::numeric_limits<double>::infinity();
    for (auto i : ds.split.test)
      for (double v : ds.samples[i].powers) p_o = std::min(p_o, v);
  }

  auto rep = training::evaluate(m, ds.data, ds.samples, ds.split.test, ks, p_o, worker_cap());
  json rj = rep.to_json();
  rj["split"] = "test";
  rj["noise_floor_power"] = p_o;
  rj["run_config"] = detail::resolved_config(rc);
  detail::write_text(fs::path(rc.out_dir) / "eval_report.json", rj.dump(2) + "\n");

  std::ostringstream csv;
  csv << std::setprecision(17) << "k,topk_accuracy,apl_db\n";
  for (auto k : ks) csv << k << "," << rep.topk_acc[k] << "," << rep.apl_db[k] << "\n";
  detail::write_text(fs::path(rc.out_dir) / "eval_report.csv", csv.str());
  detail::write_text(fs::path(rc.out_dir) / "predictions.csv",
                     training::predictions_csv(m, ds.data, ds.split.test));

  std::cout << "eval: n_test=" << rep.n_test;
  for (auto k : ks) std::cout << " top" << k << "=" << rep.topk_acc[k];
  std::cout << " seed=" << rc.seed << "\n";
  return 0;
}

inline int cmd_latency_report(RunConfig& rc) {
  detail::merge_config_file(rc);
  if (rc.out_dir.empty()) throw ConfigError("latency-report: --out is required");
  if (!fs::is_directory(rc.out_dir))
    throw DataError("latency-report: output directory does not exist: " + rc.out_dir);
  auto rep = nrlatency::overhead_report(rc.k_total, rc.k_list, rc.timing,
                                        rc.exhaustive_total_ms);
  json j = nrlatency::report_json(rep);
  j["run_config"] = detail::resolved_config(rc);
  detail::write_text(fs::path(rc.out_dir) / "latency_report.json", j.dump(2) + "\n");
  detail::write_text(fs::path(rc.out_dir) / "latency_report.csv", nrlatency::report_csv(rep));
  std::cout << "latency-report: K=" << rc.k_total
            << " exhaustive_model_ms=" << rep.sweep_exhaustive_ms
            << " baseline_ms=" << rep.exhaustive_total_ms << "\n";
  for (const auto& r : rep.rows)
    std::cout << "  k=" << r.k << " T_sp_mm=" << r.sweep_topk_ms << "ms total=" << r.total_ms
              << "ms latency_reduction=" << r.latency_reduction_pct
              << "% search_fraction=" << r.search_fraction_pct << "%\n";
  return 0;
}

// Maps the error taxonomy onto process exit codes.
inline int dispatch(RunConfig& rc) {
  try {
    if (rc.command == "gen-data") return cmd_gen_data(rc);
    if (rc.command == "train") return cmd_train(rc);
    if (rc.command == "eval") return cmd_eval(rc);
    if (rc.command == "latency-report") return cmd_latency_report(rc);
    throw ConfigError("unknown command '" + rc.command + "'");
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace beamsight::cli
