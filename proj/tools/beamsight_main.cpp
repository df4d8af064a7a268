#include <CLI11.hpp>

#include "beamsight/cli.hpp"

using beamsight::cli::RunConfig;

int main(int argc, char** argv) {
  CLI::App app{"beamsight: multimodal mmWave beam selection pipeline"};
  app.require_subcommand(1);

  RunConfig rc;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", rc.config_path, "JSON config file (defaults < file < flags)");
    sub->add_option("--seed", rc.seed, "global seed recorded in every output");
    sub->add_option("--out", rc.out_dir, "output directory (must exist)");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic multimodal dataset");
  add_common(gen);
  gen->add_option("--scenario", rc.scenario, "v2i-day | v2i-night | v2v-day | v2v-night");
  gen->add_option("--n", rc.n_samples, "number of samples");

  CLI::App* train = app.add_subcommand("train", "train a beam-selection model");
  add_common(train);
  train->add_option("--data", rc.data_dir, "dataset directory from gen-data");
  train->add_option("--variant", rc.variant, "proposed | baseline1 | baseline2");
  train->add_option("--epochs", rc.train.epochs, "training epochs");
  train->add_option("--batch-size", rc.train.batch_size, "minibatch size");
  train->add_option("--lr", rc.train.lr, "Adam learning rate");
  train->add_option("--weight-decay", rc.train.weight_decay, "L2 weight decay");
  train->add_option("--resume", rc.resume_dir, "resume from a previous --out directory");

  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common(ev);
  ev->add_option("--data", rc.data_dir, "dataset directory");
  ev->add_option("--checkpoint", rc.checkpoint_path, "model checkpoint (best.bsw)");
  ev->add_option("--k", rc.k_list, "top-k values to report");
  bool est_noise = false;
  ev->add_flag("--estimate-noise-floor", est_noise,
               "estimate p_o as the minimum observed test-split power");

  CLI::App* lat = app.add_subcommand("latency-report", "emit the 5G-NR sweep latency table");
  add_common(lat);
  lat->add_option("--K", rc.k_total, "codebook size");
  lat->add_option("--k", rc.k_list, "top-k values to report");
  lat->add_option("--exhaustive-ms", rc.exhaustive_total_ms,
                  "end-to-end exhaustive baseline in milliseconds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  rc.command = sub->get_name();
  for (const auto* opt : sub->get_options())
    if (opt->count() > 0) rc.overridden.push_back(opt->get_lnames().front());
  if (est_noise) rc.overridden.push_back("estimate-noise-floor");

  return beamsight::cli::dispatch(rc);
}
