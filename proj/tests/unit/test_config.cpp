#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "shapnn/config.hpp"

using namespace shapnn;
using namespace shapnn::config;

namespace fs = std::filesystem;

namespace {

std::string data_path(const std::string& name) {
  const char* dir = std::getenv("SHAPNN_DATA_DIR");
  return std::string(dir ? dir : "data") + "/" + name;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

std::string first_line(const std::string& text) {
  return text.substr(0, text.find('\n'));
}

// Small but complete Iris pipeline: one shallow prior, short surrogate
// distillation, a few joint epochs.
RunConfig tiny_iris_cfg(const std::string& out) {
  RunConfig cfg;
  cfg.dataset.csv_path = data_path("iris.csv");
  cfg.dataset.label_column = "species";
  cfg.model.backbone_hidden = {16, 16};
  cfg.model.explainer_hidden = {8};
  cfg.prior.members.resize(1);
  cfg.prior.members[0].n_trees = 20;
  cfg.prior.surrogate.hidden = {16, 16};
  cfg.prior.surrogate.target_steps = 600;
  cfg.training.max_epochs = 8;
  cfg.training.patience = 8;
  cfg.training.batch_size = 16;
  cfg.training.seeds = {0, 1};
  cfg.output_dir = out;
  return cfg;
}

struct TrainFixture {
  RunConfig cfg = tiny_iris_cfg("cfg_runs/train_fix");
  TrainOutcome out = cmd_train(cfg);
};

TrainFixture& train_fixture() {
  static TrainFixture f;
  return f;
}

const NoiseStudyRow* find_row(const std::vector<NoiseStudyRow>& rows, double f,
                              const std::string& model) {
  for (const auto& r : rows)
    if (r.fraction == f && r.model == model) return &r;
  return nullptr;
}

}  // namespace

TEST_CASE("config JSON round-trips exactly") {
  RunConfig cfg;
  cfg.dataset.csv_path = "somewhere.csv";
  cfg.dataset.label_column = "target";
  cfg.dataset.max_rows = 500;
  cfg.model.backbone_hidden = {32, 16};
  cfg.prior.weights = {0.7, 0.3};
  cfg.training.seeds = {3, 4};
  cfg.stream.kind = data::StreamKind::kROT;
  cfg.stream.alpha = 0.42;
  cfg.stream.retro_checkpoints = {5, 9};
  cfg.stream.steps = 9;
  cfg.output_dir = "elsewhere";

  auto j = cfg.to_json();
  auto back = RunConfig::from_json(j);
  CHECK(back.to_json() == j);
  CHECK(back.to_json().dump() == j.dump());
}

TEST_CASE("from_json rejects unknown keys and malformed values") {
  auto base = RunConfig{}.to_json();

  auto j = base;
  j["bogus"] = 1;
  CHECK_THROWS_AS(RunConfig::from_json(j), std::invalid_argument);

  j = base;
  j["training"]["bogus"] = 1;
  CHECK_THROWS_AS(RunConfig::from_json(j), std::invalid_argument);

  j = base;
  j["training"]["lr"] = "fast";
  CHECK_THROWS_AS(RunConfig::from_json(j), std::invalid_argument);

  j = base;
  j["dataset"]["split"] = {0.5, 0.5};
  CHECK_THROWS_AS(RunConfig::from_json(j), std::invalid_argument);

  j = base;
  j["stream"]["kind"] = "mystery";
  CHECK_THROWS_AS(RunConfig::from_json(j), std::invalid_argument);

  j = base;
  j["prior"]["gbdt"] = 7;
  CHECK_THROWS_AS(RunConfig::from_json(j), std::invalid_argument);
}

TEST_CASE("stream sections resolve per-kind presets before overrides") {
  nlohmann::json j;
  j["stream"]["kind"] = "sea";
  auto cfg = RunConfig::from_json(j);
  CHECK(cfg.stream.alpha == 0.6);
  CHECK(cfg.stream.update_epochs == 8);
  CHECK(cfg.stream.drift_period == 5);
  CHECK(cfg.stream.history_cap == 50);

  j["stream"]["alpha"] = 0.9;
  cfg = RunConfig::from_json(j);
  CHECK(cfg.stream.alpha == 0.9);
  CHECK(cfg.stream.update_epochs == 8);

  // Default section: the STAGGER-style preset.
  RunConfig defaults;
  CHECK(defaults.stream.alpha == 0.6);
  CHECK(defaults.stream.update_epochs == 5);
  CHECK(defaults.stream.drift_period == 4);

  auto cc = cfg.stream.continual_config(7);
  CHECK(cc.alpha == 0.9);
  CHECK(cc.update_epochs == 8);
  CHECK(cc.batch_size == cfg.stream.minibatch);
  CHECK(cc.input_scale == data::stream_input_scale(data::StreamKind::kSEA));
  CHECK(cc.seed == 7);
}

TEST_CASE("validate flags inconsistent settings") {
  RunConfig good;
  CHECK_NOTHROW(good.validate());

  auto bad = good;
  bad.dataset.val_fraction = 0.5;  // fractions no longer sum to 1
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = good;
  bad.dataset.csv_path = "a.csv";
  bad.dataset.synthetic.rows = 10;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = good;
  bad.model.backbone_hidden.clear();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = good;
  bad.prior.members.clear();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = good;
  bad.prior.weights = {1.0};  // two members, one weight
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = good;
  bad.training.lr = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = good;
  bad.training.seeds.clear();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = good;
  bad.training.max_epochs = -1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = good;
  bad.stream.retro_checkpoints = {60};  // beyond the 50-step stream
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = good;
  bad.stream.alpha = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = good;
  bad.output_dir.clear();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("synthetic blobs are deterministic, balanced, and seed-stable") {
  DatasetSpec spec;
  spec.synthetic.rows = 90;
  spec.synthetic.features = 5;
  spec.synthetic.classes = 3;
  spec.synthetic.seed = 4;

  auto ds = load_dataset(spec, 0);
  CHECK(ds.n() == 90);
  CHECK(ds.n_encoded() == 5);
  CHECK(ds.n_players() == 5);
  CHECK(ds.n_classes == 3);
  std::vector<int> counts(3, 0);
  for (int y : ds.y) counts[static_cast<std::size_t>(y)]++;
  for (int c : counts) CHECK(c == 30);

  // The run seed drives subsampling/noise, not the blob content itself.
  auto ds2 = load_dataset(spec, 99);
  CHECK(ds.X.a == ds2.X.a);
}

TEST_CASE("load_dataset demands exactly one source") {
  DatasetSpec both;
  both.csv_path = "a.csv";
  both.synthetic.rows = 10;
  CHECK_THROWS_AS(load_dataset(both, 0), std::invalid_argument);
  DatasetSpec neither;
  CHECK_THROWS_AS(load_dataset(neither, 0), std::invalid_argument);
}

TEST_CASE("max_rows takes a deterministic stratified subsample") {
  DatasetSpec spec;
  spec.csv_path = data_path("iris.csv");
  spec.label_column = "species";
  spec.max_rows = 60;

  auto ds = load_dataset(spec, 0);
  CHECK(ds.n() == 60);
  std::vector<int> counts(3, 0);
  for (int y : ds.y) counts[static_cast<std::size_t>(y)]++;
  for (int c : counts) CHECK(c == 20);  // proportional to the 50/50/50 source

  auto again = load_dataset(spec, 0);
  CHECK(ds.X.a == again.X.a);
  auto other = load_dataset(spec, 1);
  CHECK(ds.X.a != other.X.a);
}

TEST_CASE("noise_fraction appends synthetic players through load_dataset") {
  DatasetSpec spec;
  spec.csv_path = data_path("iris.csv");
  spec.label_column = "species";
  spec.noise_fraction = 0.5;
  auto ds = load_dataset(spec, 0);
  CHECK(ds.n_players() == 6);
  CHECK(ds.players[4].synthetic);
  CHECK(ds.players[5].synthetic);
  CHECK_FALSE(ds.players[0].synthetic);
}

TEST_CASE("run_pipeline trains every stage deterministically") {
  auto cfg = tiny_iris_cfg("cfg_runs/pipe");
  auto p = run_pipeline(cfg, 0);
  CHECK(p.train.n() + p.val.n() + p.test.n() == 150);
  CHECK(p.gbdts.size() == 1);
  CHECK(p.ensemble.size() == 1);
  CHECK(p.shapnn.n_players == 4);
  CHECK(p.shapnn.player_names.size() == 4);
  CHECK(p.shapnn.player_names[0] == "sepal_length");
  CHECK(!p.shapnn_fit.history.empty());
  CHECK(!p.mlp_fit.history.empty());

  auto p2 = run_pipeline(cfg, 0);
  CHECK(p.shapnn.to_json() == p2.shapnn.to_json());
  CHECK(p.mlp_fit.model.net.to_json() == p2.mlp_fit.model.net.to_json());
}

TEST_CASE("a zero-epoch run evaluates untrained networks without crashing") {
  auto cfg = tiny_iris_cfg("cfg_runs/zero");
  cfg.training.max_epochs = 0;
  auto p = run_pipeline(cfg, 0);
  CHECK(p.shapnn_fit.history.empty());
  CHECK(p.mlp_fit.history.empty());

  auto probs = model::predict_proba_batch(p.shapnn, p.test.X, p.ensemble);
  auto rep = metrics::evaluate(probs, p.test.y, 0);
  CHECK(rep.auroc > 0.2);  // chance-level, not a trained model
  CHECK(rep.auroc < 0.8);
  auto mlp_rep =
      metrics::evaluate(p.mlp_fit.model.predict_proba_batch(p.test.X),
                        p.test.y, 0);
  CHECK(mlp_rep.auroc > 0.2);
  CHECK(mlp_rep.auroc < 0.8);
}

TEST_CASE("cmd_train writes metrics, bundles, and medians") {
  auto& f = train_fixture();
  REQUIRE(f.out.per_seed.size() == 2);
  for (const auto& sm : f.out.per_seed) {
    REQUIRE(sm.by_model.size() == 5);
    for (const auto& [name, rep] : sm.by_model) {
      CHECK(rep.sample_count > 0);
      CHECK(rep.auroc >= 0.0);
      CHECK(rep.auroc <= 1.0);
      (void)name;
    }
  }
  double lo = std::min(f.out.per_seed[0].by_model.at("shapnn").auroc,
                       f.out.per_seed[1].by_model.at("shapnn").auroc);
  double hi = std::max(f.out.per_seed[0].by_model.at("shapnn").auroc,
                       f.out.per_seed[1].by_model.at("shapnn").auroc);
  CHECK(f.out.shapnn_median_auroc == 0.5 * (lo + hi));

  CHECK(fs::exists(fs::path(f.out.run_dir) / "manifest.json"));
  CHECK(fs::exists(fs::path(f.out.run_dir) / "checkpoints" /
                   "bundle_seed0.json"));
  CHECK(fs::exists(fs::path(f.out.run_dir) / "checkpoints" /
                   "bundle_seed1.json"));
  auto metrics_text = slurp(f.out.run_dir + "/metrics.csv");
  CHECK(first_line(metrics_text) ==
        "model,seed,auroc,auroc_soft,accuracy,samples");
  CHECK(line_count(metrics_text) == 1 + 2 * 5);
}

TEST_CASE("cmd_train reruns byte-identically and manifests round-trip") {
  auto& f = train_fixture();
  auto cfg2 = f.cfg;
  cfg2.output_dir = "cfg_runs/train_again";
  auto out2 = cmd_train(cfg2);
  CHECK(slurp(f.out.run_dir + "/metrics.csv") ==
        slurp(out2.run_dir + "/metrics.csv"));

  auto manifest = nlohmann::json::parse(slurp(f.out.run_dir +
                                              "/manifest.json"));
  CHECK(manifest.at("format") == "shapnn-run-v1");
  CHECK(manifest.at("command") == "train");
  auto cfg3 = RunConfig::from_json(manifest.at("config"));
  CHECK(cfg3.to_json() == f.cfg.to_json());
}

TEST_CASE("the noise study agrees with cmd_train at fraction zero") {
  auto& f = train_fixture();
  auto cfg = f.cfg;
  cfg.output_dir = "cfg_runs/noise";
  auto res = cmd_noise_study(cfg, {0.0, 1.0}, {0});
  REQUIRE(res.summary.size() == 6);

  const auto* clean_shapnn = find_row(res.summary, 0.0, "shapnn");
  const auto* clean_mlp = find_row(res.summary, 0.0, "mlp");
  const auto* clean_gbdt = find_row(res.summary, 0.0, "gbdt");
  REQUIRE(clean_shapnn != nullptr);
  REQUIRE(clean_mlp != nullptr);
  REQUIRE(clean_gbdt != nullptr);
  const auto& trained = f.out.per_seed[0].by_model;
  CHECK(clean_shapnn->accuracy == trained.at("shapnn").accuracy);
  CHECK(clean_mlp->accuracy == trained.at("mlp").accuracy);
  CHECK(clean_gbdt->accuracy == trained.at("gbdt").accuracy);
  CHECK(std::isfinite(clean_shapnn->real_abs_phi));
  CHECK(std::isnan(clean_shapnn->synthetic_abs_phi));  // nothing injected
  CHECK(std::isnan(clean_mlp->real_abs_phi));

  const auto* noisy_shapnn = find_row(res.summary, 1.0, "shapnn");
  REQUIRE(noisy_shapnn != nullptr);
  CHECK(std::isfinite(noisy_shapnn->synthetic_abs_phi));

  auto text = slurp(res.csv_path);
  CHECK(first_line(text) ==
        "fraction,model,seed,accuracy,real_abs_phi,synthetic_abs_phi");
  CHECK(line_count(text) == 1 + 2 * 3);

  CHECK_THROWS_AS(cmd_noise_study(cfg, {}, {0}), std::invalid_argument);
  CHECK_THROWS_AS(cmd_noise_study(cfg, {-0.5}, {0}), std::invalid_argument);
  CHECK_THROWS_AS(cmd_noise_study(cfg, {0.0}, {}), std::invalid_argument);
}

TEST_CASE("cmd_speed_bench times both explainers and reports the ratio") {
  RunConfig cfg;
  cfg.dataset.synthetic.rows = 300;
  cfg.dataset.synthetic.features = 8;
  cfg.dataset.synthetic.seed = 5;
  cfg.model.backbone_hidden = {16, 16};
  cfg.model.explainer_hidden = {8};
  cfg.prior.members.resize(1);
  cfg.prior.members[0].n_trees = 15;
  cfg.prior.surrogate.hidden = {16};
  cfg.prior.surrogate.target_steps = 300;
  cfg.training.max_epochs = 2;
  cfg.training.patience = 2;
  cfg.output_dir = "cfg_runs/speed";

  auto res = cmd_speed_bench(cfg, 10, 16);
  CHECK(res.n_samples == 10);
  CHECK(res.subset_budget == 16);
  CHECK(res.explain_mean_us > 0.0);
  CHECK(res.kernel_mean_us > 0.0);
  CHECK(res.speedup ==
        doctest::Approx(res.kernel_mean_us / res.explain_mean_us));

  auto text = slurp(res.run_dir + "/timing.csv");
  CHECK(first_line(text) ==
        "method,samples,subset_budget,mean_microseconds,std_microseconds,"
        "speedup_vs_kernelshap");
  CHECK(line_count(text) == 3);

  CHECK_THROWS_AS(cmd_speed_bench(cfg, 0, 16), std::invalid_argument);
  CHECK_THROWS_AS(cmd_speed_bench(cfg, 10, 0), std::invalid_argument);
}

TEST_CASE("cmd_stream exports the per-step series and retained checkpoints") {
  RunConfig cfg;
  cfg.stream.kind = data::StreamKind::kSEA;
  cfg.stream.steps = 5;
  cfg.stream.batch_size = 40;
  cfg.stream.drift_period = 2;
  cfg.stream.backbone_hidden = {16};
  cfg.stream.explainer_hidden = {8};
  cfg.stream.update_epochs = 1;
  cfg.stream.history_cap = 5;
  cfg.stream.retro_checkpoints = {3, 5};
  cfg.output_dir = "cfg_runs/stream";

  auto res = cmd_stream(cfg);
  REQUIRE(res.per_seed.size() == 1);
  const auto& run = res.per_seed[0];
  CHECK(run.shapnn.steps.size() == 5);
  CHECK(run.baseline.steps.size() == 5);
  CHECK(run.shapnn.retro.count(3) == 1);
  CHECK(run.shapnn.retro.count(5) == 1);
  CHECK(run.baseline.retro.count(3) == 1);

  auto text = slurp(res.run_dir + "/stream_metrics.csv");
  CHECK(first_line(text) ==
        "model,seed,t,concept_id,forward_auroc,ce,retention,retro_auroc");
  CHECK(line_count(text) == 1 + 2 * 5);
  for (int t = 0; t < 5; ++t)
    CHECK(fs::exists(fs::path(res.run_dir) / "checkpoints" /
                     ("seed0_step" + std::to_string(t) + ".json")));

  // The manifest alone reproduces the series.
  auto manifest = nlohmann::json::parse(slurp(res.run_dir + "/manifest.json"));
  auto cfg2 = RunConfig::from_json(manifest.at("config"));
  cfg2.output_dir = "cfg_runs/stream_again";
  auto res2 = cmd_stream(cfg2);
  CHECK(slurp(res.run_dir + "/stream_metrics.csv") ==
        slurp(res2.run_dir + "/stream_metrics.csv"));
}

TEST_CASE("cmd_explain ranks single samples from a trained bundle") {
  auto& f = train_fixture();
  auto cfg = f.cfg;
  cfg.output_dir = "cfg_runs/explain";
  std::string bundle = f.out.run_dir + "/checkpoints/bundle_seed0.json";

  auto res = cmd_explain(cfg, bundle, {0, 77}, false);
  CHECK(res.rows_written == 2 * 4);
  auto text = slurp(cfg.output_dir + "/attributions.csv");
  CHECK(first_line(text) == "sample,rank,player,name,class,phi,polarity");
  CHECK(line_count(text) == 1 + 8);

  // Ranks are ordered by |phi| within each sample.
  std::istringstream lines(text);
  std::string line;
  std::getline(lines, line);  // header
  double prev = std::numeric_limits<double>::infinity();
  int seen = 0;
  while (std::getline(lines, line)) {
    std::size_t rank_pos = line.find(',') + 1;
    int rank = std::stoi(line.substr(rank_pos));
    std::size_t phi_pos = 0;
    for (int c = 0; c < 5; ++c) phi_pos = line.find(',', phi_pos) + 1;
    double phi = std::stod(line.substr(phi_pos));
    if (rank == 1) prev = std::numeric_limits<double>::infinity();
    CHECK(std::fabs(phi) <= prev);
    prev = std::fabs(phi);
    ++seen;
  }
  CHECK(seen == 8);
}

TEST_CASE("cmd_explain exports the population summary") {
  auto& f = train_fixture();
  auto cfg = f.cfg;
  cfg.output_dir = "cfg_runs/explain_pop";
  std::string bundle = f.out.run_dir + "/checkpoints/bundle_seed0.json";

  auto res = cmd_explain(cfg, bundle, {}, true);
  CHECK(res.rows_written > 4);
  auto summary = slurp(cfg.output_dir + "/attributions.csv");
  CHECK(first_line(summary) == "player,name,mean_abs_phi");
  CHECK(line_count(summary) == 1 + 4);
  auto points = slurp(cfg.output_dir + "/points.csv");
  CHECK(first_line(points) == "sample,player,feature_value,phi");
  CHECK(line_count(points) == 1 + res.rows_written - 4);
}

TEST_CASE("cmd_explain validates its selection and checkpoint") {
  auto& f = train_fixture();
  auto cfg = f.cfg;
  cfg.output_dir = "cfg_runs/explain_bad";
  std::string bundle = f.out.run_dir + "/checkpoints/bundle_seed0.json";

  CHECK_THROWS_AS(cmd_explain(cfg, bundle, {}, false), std::invalid_argument);
  CHECK_THROWS_AS(cmd_explain(cfg, bundle, {1}, true), std::invalid_argument);
  CHECK_THROWS_AS(cmd_explain(cfg, bundle, {9999}, false),
                  std::invalid_argument);
  CHECK_THROWS_AS(cmd_explain(cfg, "cfg_runs/absent.json", {0}, false),
                  std::runtime_error);

  fs::create_directories("cfg_runs");
  std::ofstream bogus("cfg_runs/bogus_bundle.json");
  bogus << "{\"format\": \"something-else\"}\n";
  bogus.close();
  CHECK_THROWS_AS(cmd_explain(cfg, "cfg_runs/bogus_bundle.json", {0}, false),
                  std::invalid_argument);
}
