// Command-line driver: supervised training with metric exports, the
// injected-noise study, the explanation speed benchmark, the drifting-stream
// protocol, and attribution exports. A JSON config file seeds every run and
// flags override individual fields. Exit codes: 0 success, 2 configuration
// errors, 3 data/IO errors, 4 numeric failures.
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "shapnn/config.hpp"

namespace {

using shapnn::config::RunConfig;

RunConfig load_config(const std::string& path) {
  return path.empty() ? RunConfig{} : RunConfig::load_file(path);
}

void print_train(const shapnn::config::TrainOutcome& out) {
  std::printf("%-14s %6s %9s %11s %9s\n", "model", "seed", "auroc",
              "auroc_soft", "accuracy");
  for (const auto& sm : out.per_seed)
    for (const auto& [name, rep] : sm.by_model)
      std::printf("%-14s %6llu %9.4f %11.4f %9.4f\n", name.c_str(),
                  static_cast<unsigned long long>(sm.seed), rep.auroc,
                  rep.auroc_soft, rep.accuracy);
  std::printf("median auroc: shapnn %.4f vs mlp %.4f\n",
              out.shapnn_median_auroc, out.mlp_median_auroc);
  std::printf("outputs in %s\n", out.run_dir.c_str());
}

void print_noise(const shapnn::config::NoiseStudyOutcome& out) {
  std::printf("%8s %-8s %9s %14s %14s\n", "fraction", "model", "accuracy",
              "real_phi", "synth_phi");
  for (const auto& row : out.summary)
    std::printf("%8.2f %-8s %9.4f %14.4f %14.4f\n", row.fraction,
                row.model.c_str(), row.accuracy, row.real_abs_phi,
                row.synthetic_abs_phi);
  std::printf("curves in %s\n", out.csv_path.c_str());
}

void print_speed(const shapnn::config::SpeedBenchOutcome& out) {
  std::printf("single-pass explanation: %.1f +/- %.1f us per sample\n",
              out.explain_mean_us, out.explain_std_us);
  std::printf("kernelshap (%zu subsets): %.1f +/- %.1f us per sample\n",
              out.subset_budget, out.kernel_mean_us, out.kernel_std_us);
  std::printf("speedup: %.1fx over %zu samples\n", out.speedup, out.n_samples);
  std::printf("outputs in %s\n", out.run_dir.c_str());
}

void print_stream(const shapnn::config::StreamOutcome& out) {
  for (std::size_t i = 0; i < out.per_seed.size(); ++i) {
    const auto& res = out.per_seed[i];
    std::printf("seed %llu: forward auroc shapnn %.4f +/- %.4f | baseline "
                "%.4f +/- %.4f\n",
                static_cast<unsigned long long>(out.seeds[i]),
                res.shapnn.mean_forward, res.shapnn.std_forward,
                res.baseline.mean_forward, res.baseline.std_forward);
    for (const auto& [t, retro] : res.shapnn.retro)
      std::printf("  retro@%d: shapnn %.4f | baseline %.4f\n", t, retro,
                  res.baseline.retro.at(t));
  }
  std::printf("outputs in %s\n", out.run_dir.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shapnn: tabular prediction with built-in Shapley-style "
               "attributions"};
  app.require_subcommand(1);

  std::string config_path, out_dir, csv_path, label_column, kind;
  std::vector<std::uint64_t> seeds;
  std::size_t max_rows = 0;
  int epochs = 0, steps = 0, drift_period = 0;
  double alpha = 0.0, rho = 0.0, noise_fraction = 0.0;
  std::vector<int> checkpoints;
  std::vector<double> fractions{0.0, 0.25, 0.5, 0.75, 1.0};
  std::size_t samples = 100, budget = 128;
  std::string checkpoint_file;
  std::vector<std::size_t> ids;
  bool population = false;
  int exit_code = 0;

  // Shared dataset/training overrides; each returns the option so the
  // subcommand callback can tell "explicitly passed" from "default".
  struct DatasetOpts {
    CLI::Option *out, *csv, *label, *rows, *noise, *seeds_opt, *epochs_opt;
  };
  auto add_dataset_opts = [&](CLI::App* sub) {
    DatasetOpts o;
    sub->add_option("-c,--config", config_path, "JSON run configuration file");
    o.out = sub->add_option("-o,--out", out_dir, "output directory");
    o.csv = sub->add_option("--csv", csv_path, "dataset CSV path");
    o.label = sub->add_option("--label", label_column, "label column name");
    o.rows = sub->add_option("--max-rows", max_rows,
                             "stratified row cap (0 keeps everything)");
    o.noise = sub->add_option("--noise-fraction", noise_fraction,
                              "injected synthetic-player fraction");
    o.seeds_opt = sub->add_option("--seeds", seeds, "training seeds")
                      ->delimiter(',');
    o.epochs_opt = sub->add_option("--epochs", epochs, "training epoch cap");
    return o;
  };
  auto apply_dataset_opts = [&](RunConfig& cfg, const DatasetOpts& o) {
    if (o.out->count()) cfg.output_dir = out_dir;
    if (o.csv->count()) {
      cfg.dataset.csv_path = csv_path;
      cfg.dataset.synthetic.rows = 0;
    }
    if (o.label->count()) cfg.dataset.label_column = label_column;
    if (o.rows->count()) cfg.dataset.max_rows = max_rows;
    if (o.noise->count()) cfg.dataset.noise_fraction = noise_fraction;
    if (o.seeds_opt->count()) cfg.training.seeds = seeds;
    if (o.epochs_opt->count()) cfg.training.max_epochs = epochs;
  };

  {
    auto* sub = app.add_subcommand(
        "train", "train priors, surrogates, and the joint model");
    auto opts = add_dataset_opts(sub);
    sub->callback([&, opts]() {
      RunConfig cfg = load_config(config_path);
      apply_dataset_opts(cfg, opts);
      print_train(shapnn::config::cmd_train(cfg));
    });
  }
  {
    auto* sub = app.add_subcommand(
        "noise-study", "accuracy and attribution mass vs injected features");
    auto opts = add_dataset_opts(sub);
    sub->add_option("--fractions", fractions, "noise fractions to sweep")
        ->delimiter(',');
    sub->callback([&, opts]() {
      RunConfig cfg = load_config(config_path);
      apply_dataset_opts(cfg, opts);
      print_noise(
          shapnn::config::cmd_noise_study(cfg, fractions, cfg.training.seeds));
    });
  }
  {
    auto* sub = app.add_subcommand(
        "speed-bench", "single-pass explanation vs per-sample kernelshap");
    auto opts = add_dataset_opts(sub);
    sub->add_option("--samples", samples, "timed samples (plus 10 warm-up)");
    sub->add_option("--budget", budget, "kernelshap coalition budget");
    sub->callback([&, opts]() {
      RunConfig cfg = load_config(config_path);
      apply_dataset_opts(cfg, opts);
      print_speed(shapnn::config::cmd_speed_bench(cfg, samples, budget));
    });
  }
  {
    auto* sub = app.add_subcommand(
        "stream", "continual protocol and baseline on a drifting stream");
    sub->add_option("-c,--config", config_path, "JSON run configuration file");
    auto* o_out = sub->add_option("-o,--out", out_dir, "output directory");
    auto* o_kind =
        sub->add_option("--kind", kind, "stream kind: sta, sea, or rot");
    auto* o_steps = sub->add_option("--steps", steps, "stream length");
    auto* o_drift =
        sub->add_option("--drift-period", drift_period, "steps per concept");
    auto* o_alpha = sub->add_option("--alpha", alpha, "mixup weight");
    auto* o_rho = sub->add_option("--rho", rho, "retention discount");
    auto* o_ckpt =
        sub->add_option("--checkpoints", checkpoints, "retrospective steps")
            ->delimiter(',');
    auto* o_seeds =
        sub->add_option("--seeds", seeds, "stream seeds")->delimiter(',');
    sub->callback([&, o_out, o_kind, o_steps, o_drift, o_alpha, o_rho, o_ckpt,
                   o_seeds]() {
      RunConfig cfg = load_config(config_path);
      if (o_out->count()) cfg.output_dir = out_dir;
      if (o_kind->count()) {
        cfg.stream.kind = shapnn::data::stream_kind_from_name(kind);
        // Re-resolve the per-kind preset when only the kind changed.
        auto preset = shapnn::continual::stream_preset(cfg.stream.kind);
        if (!o_alpha->count()) cfg.stream.alpha = preset.alpha;
        if (!o_drift->count())
          cfg.stream.drift_period =
              shapnn::data::stream_drift_period(cfg.stream.kind);
        cfg.stream.update_epochs = preset.update_epochs;
      }
      if (o_steps->count()) cfg.stream.steps = steps;
      if (o_drift->count()) cfg.stream.drift_period = drift_period;
      if (o_alpha->count()) cfg.stream.alpha = alpha;
      if (o_rho->count()) cfg.stream.rho = rho;
      if (o_ckpt->count()) cfg.stream.retro_checkpoints = checkpoints;
      if (o_seeds->count()) cfg.stream.seeds = seeds;
      print_stream(shapnn::config::cmd_stream(cfg));
    });
  }
  {
    auto* sub = app.add_subcommand(
        "explain", "export attributions from a trained checkpoint bundle");
    sub->add_option("-c,--config", config_path, "JSON run configuration file");
    auto* o_out = sub->add_option("-o,--out", out_dir, "output directory");
    sub->add_option("--checkpoint", checkpoint_file,
                    "bundle written by the train command")
        ->required();
    sub->add_option("--ids", ids, "row ids of the loaded dataset")
        ->delimiter(',');
    sub->add_flag("--population", population,
                  "summarize the whole test split instead of single rows");
    sub->callback([&, o_out]() {
      RunConfig cfg = load_config(config_path);
      if (o_out->count()) cfg.output_dir = out_dir;
      auto out =
          shapnn::config::cmd_explain(cfg, checkpoint_file, ids, population);
      std::printf("wrote %zu attribution rows under %s\n", out.rows_written,
                  out.run_dir.c_str());
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const shapnn::shapley::SurrogateDivergence& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    exit_code = 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    exit_code = 2;
  } catch (const std::runtime_error& e) {
    std::string msg = e.what();
    bool numeric = msg.find("non-finite") != std::string::npos;
    std::cerr << (numeric ? "numeric error: " : "data error: ") << msg << "\n";
    exit_code = numeric ? 4 : 3;
  }
  return exit_code;
}
