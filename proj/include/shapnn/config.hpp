#pragma once
// Run configuration and the experiment commands behind the CLI: supervised
// training runs, the injected-noise study, the explanation speed benchmark,
// drifting-stream evaluation, and attribution exports. Each command writes
// its outputs under one run directory together with a manifest that
// reproduces the run bit for bit under the same configuration and seeds.
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "shapnn/continual.hpp"
#include "shapnn/data.hpp"
#include "shapnn/gbdt.hpp"
#include "shapnn/metrics.hpp"
#include "shapnn/model.hpp"
#include "shapnn/stream.hpp"
#include "shapnn/surrogate.hpp"

namespace shapnn::config {

inline constexpr const char* kVersion = "0.1.0";

// Gaussian class blobs used when no CSV is given (benchmarks, fallbacks).
struct SyntheticSpec {
  std::size_t rows = 0;  // 0 means "no synthetic source configured"
  std::size_t features = 8;
  int classes = 2;
  double spread = 1.0;  // class-center scale relative to unit noise
  std::uint64_t seed = 1;
};

struct DatasetSpec {
  std::string csv_path;
  std::string label_column = "label";
  double noise_fraction = 0.0;  // synthetic uniform players appended pre-split
  double train_fraction = 0.7;
  double val_fraction = 0.15;
  double test_fraction = 0.15;
  std::size_t max_rows = 0;  // 0 keeps all rows; else stratified subsample
  SyntheticSpec synthetic;

  bool has_csv() const { return !csv_path.empty(); }
  bool has_synthetic() const { return synthetic.rows > 0; }
};

struct ModelSpec {
  std::vector<std::size_t> backbone_hidden = {512, 512, 512};
  std::vector<std::size_t> explainer_hidden = {512};
};

// Prior ensemble: one GBDT per member (distilled into its own surrogate),
// combined with the given weights. Defaults to a shallow and a deep GBDT
// with uniform weights.
struct PriorSpec {
  std::vector<prior::GBDTConfig> members;
  std::vector<double> weights;  // empty -> uniform
  shapley::SurrogateConfig surrogate;

  PriorSpec();
};

struct TrainingSpec {
  double lr = 0.05;
  int max_epochs = 60;  // 0 skips training entirely (untrained evaluation)
  int batch_size = 32;
  int patience = 16;
  int n_subsets = 8;
  double shap_loss_weight = 1.0;
  bool ce_through_explainer = true;
  std::vector<std::uint64_t> seeds = {0};  // one full pipeline per seed
};

// Drifting-stream protocol. Drift cadence, mixup strength, and per-step
// epochs default to the per-kind presets when the config file leaves them
// out.
struct StreamSpec {
  data::StreamKind kind = data::StreamKind::kSTA;
  int steps = 50;
  int batch_size = 200;
  int drift_period = 4;
  double label_noise = 0.0;
  std::vector<std::size_t> backbone_hidden = {256, 256};
  std::vector<std::size_t> explainer_hidden = {256};
  double lr = 0.4;
  int minibatch = 32;  // within-step update minibatch, not the stream batch
  int update_epochs = 5;
  int n_subsets = 8;
  double alpha = 0.6;
  double rho = 0.5;
  double retention_weight = 0.1;
  std::size_t history_cap = 50;
  std::vector<int> retro_checkpoints = {10, 50};
  std::vector<std::uint64_t> seeds = {0};

  continual::ContinualConfig continual_config(std::uint64_t seed) const;
};

struct RunConfig {
  DatasetSpec dataset;
  ModelSpec model;
  PriorSpec prior;
  TrainingSpec training;
  StreamSpec stream;
  std::string output_dir = "runs/out";

  // Throws std::invalid_argument on the first inconsistent field. Dataset
  // sources are checked for shape only; missing files surface at load time.
  void validate() const;

  nlohmann::json to_json() const;
  // Strict: unknown keys are rejected so typos cannot silently fall back to
  // defaults. The result is validated.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load_file(const std::string& path);
};

// Loads, optionally subsamples, and noise-injects the configured source.
// CSV schemas are inferred from the file; synthetic sources are labeled
// Gaussian blobs. The seed drives subsampling and noise injection only.
data::EncodedDataset load_dataset(const DatasetSpec& spec, std::uint64_t seed);

// Everything one seed of the supervised pipeline produces: the splits, the
// trained priors with their surrogate ensemble, and both networks. With
// max_epochs == 0 the networks stay at their freshly initialized weights.
struct TrainedPipeline {
  data::EncodedDataset train, val, test;
  std::vector<prior::GBDTModel> gbdts;
  model::PriorEnsemble ensemble;
  model::SHAPNNModel shapnn;
  model::FitResult shapnn_fit;
  model::MlpFitResult mlp_fit;  // mlp_fit.model is the baseline network
};

TrainedPipeline run_pipeline(const RunConfig& cfg, std::uint64_t seed);

// Test-split reports per model name ("gbdt", "logistic", "random_forest",
// "mlp", "shapnn") for one seed.
struct SeedMetrics {
  std::uint64_t seed = 0;
  std::map<std::string, metrics::MetricReport> by_model;
};

struct TrainOutcome {
  std::vector<SeedMetrics> per_seed;
  double shapnn_median_auroc = 0.0;  // hard-prediction protocol, test split
  double mlp_median_auroc = 0.0;
  std::string run_dir;
};

// Trains priors -> surrogates -> joint model per seed, evaluates every
// model on the test split, and writes metrics.csv, per-seed checkpoint
// bundles, and the manifest.
TrainOutcome cmd_train(const RunConfig& cfg);

struct NoiseStudyRow {
  double fraction = 0.0;
  std::string model;
  double accuracy = 0.0;
  // Mean |phi| over real and injected players ("shapnn" rows only; NaN
  // elsewhere, and NaN for the synthetic side when nothing was injected).
  double real_abs_phi = std::numeric_limits<double>::quiet_NaN();
  double synthetic_abs_phi = std::numeric_limits<double>::quiet_NaN();
};

struct NoiseStudyOutcome {
  std::vector<NoiseStudyRow> summary;  // per (fraction, model), seed-averaged
  std::string csv_path;
  std::string run_dir;
};

// Sweeps injected-noise fractions over GBDT, the plain MLP, and the joint
// model; exports accuracy and attribution-mass curves to noise_study.csv.
NoiseStudyOutcome cmd_noise_study(const RunConfig& cfg,
                                  const std::vector<double>& fractions,
                                  const std::vector<std::uint64_t>& seeds);

struct SpeedBenchOutcome {
  std::size_t n_samples = 0;
  std::size_t subset_budget = 0;
  double explain_mean_us = 0.0;  // single-pass explanation, per sample
  double explain_std_us = 0.0;
  double kernel_mean_us = 0.0;  // sampled-regression explanation, per sample
  double kernel_std_us = 0.0;
  double speedup = 0.0;  // kernel_mean_us / explain_mean_us
  std::string run_dir;
};

// Times the amortized explanation against per-sample KernelSHAP with the
// same surrogate value function; 10 warm-up samples are excluded and both
// sides run single-threaded. Writes timing.csv.
SpeedBenchOutcome cmd_speed_bench(const RunConfig& cfg, std::size_t n_samples,
                                  std::size_t subset_budget);

struct StreamOutcome {
  std::vector<std::uint64_t> seeds;
  std::vector<continual::OnlineAdaptationResult> per_seed;
  std::string run_dir;
};

// Generates the configured stream per seed, runs the continual protocol and
// its vanilla baseline, and writes stream_metrics.csv plus one checkpoint
// per retained step of the final joint-model state.
StreamOutcome cmd_stream(const RunConfig& cfg);

struct ExplainOutcome {
  std::size_t rows_written = 0;
  std::string run_dir;
};

// Loads a checkpoint bundle written by cmd_train and exports attributions:
// ranked per-sample lists for explicit row ids, or the population summary
// (attributions.csv + points.csv) over the test split when population is
// set. Exactly one of the two modes must be selected.
ExplainOutcome cmd_explain(const RunConfig& cfg,
                           const std::string& checkpoint_path,
                           const std::vector<std::size_t>& sample_ids,
                           bool population);

}  // namespace shapnn::config
