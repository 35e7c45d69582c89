#include "shapnn/config.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "shapnn/baselines.hpp"

namespace fs = std::filesystem;

namespace shapnn::config {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Strict object reader: every key must be consumed, so a typo in a config
// file fails loudly instead of silently falling back to a default.
class ObjReader {
 public:
  ObjReader(const nlohmann::json& j, std::string where)
      : j_(j), where_(std::move(where)) {
    if (!j_.is_object())
      throw std::invalid_argument("RunConfig: " + where_ +
                                  " must be a JSON object");
  }

  bool has(const std::string& key) {
    seen_.push_back(key);
    return j_.contains(key);
  }

  const nlohmann::json& at(const std::string& key) { return j_.at(key); }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (has(key)) out = j_.at(key).get<T>();
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      (void)value;
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end())
        throw std::invalid_argument("RunConfig: unknown key \"" + key +
                                    "\" in " + where_);
    }
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::vector<std::string> seen_;
};

// Shortest round-trippable decimal; NaN becomes an empty CSV cell.
std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double median(std::vector<double> v) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

void write_text(const fs::path& path, const std::string& body) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file " + path.string());
  out << body;
}

void write_manifest(const fs::path& dir, const std::string& command,
                    const RunConfig& cfg, const nlohmann::json& arguments,
                    const std::vector<std::string>& outputs) {
  nlohmann::json j{{"format", "shapnn-run-v1"},
                   {"version", kVersion},
                   {"command", command},
                   {"config", cfg.to_json()},
                   {"arguments", arguments},
                   {"outputs", outputs}};
  write_text(dir / "manifest.json", j.dump(2) + "\n");
}

fs::path prepare_run_dir(const RunConfig& cfg, bool with_checkpoints) {
  fs::path dir(cfg.output_dir);
  fs::create_directories(with_checkpoints ? dir / "checkpoints" : dir);
  return dir;
}

data::EncodedDataset make_blobs(const SyntheticSpec& s) {
  Rng rng(s.seed);
  std::vector<std::vector<double>> centers(static_cast<std::size_t>(s.classes),
                                           std::vector<double>(s.features));
  for (auto& c : centers)
    for (double& v : c) v = s.spread * rng.normal();

  Matrix X(s.rows, s.features);
  std::vector<int> y(s.rows);
  for (std::size_t i = 0; i < s.rows; ++i) {
    int cls = static_cast<int>(i % static_cast<std::size_t>(s.classes));
    y[i] = cls;
    const auto& c = centers[static_cast<std::size_t>(cls)];
    for (std::size_t j = 0; j < s.features; ++j) X(i, j) = c[j] + rng.normal();
  }
  std::vector<std::string> names;
  names.reserve(s.features);
  for (std::size_t j = 0; j < s.features; ++j)
    names.push_back("f" + std::to_string(j));
  return data::from_arrays(std::move(X), std::move(y), s.classes, names);
}

// Proportional per-class subsample: floor shares first, remainder filled
// from a shuffled pool so the total lands exactly on k.
data::EncodedDataset stratified_subsample(const data::EncodedDataset& ds,
                                          std::size_t k, Rng& rng) {
  std::vector<std::vector<std::size_t>> per_class(
      static_cast<std::size_t>(ds.n_classes));
  for (std::size_t i = 0; i < ds.n(); ++i)
    per_class[static_cast<std::size_t>(ds.y[i])].push_back(i);

  std::vector<std::size_t> chosen, pool;
  for (auto& rows : per_class) {
    rng.shuffle(rows);
    std::size_t take = rows.size() * k / ds.n();
    chosen.insert(chosen.end(), rows.begin(), rows.begin() + take);
    pool.insert(pool.end(), rows.begin() + take, rows.end());
  }
  rng.shuffle(pool);
  for (std::size_t i = 0; chosen.size() < k; ++i) chosen.push_back(pool[i]);
  std::sort(chosen.begin(), chosen.end());
  return data::take_rows(ds, chosen);
}

DatasetSpec dataset_from_json(const nlohmann::json& j) {
  DatasetSpec d;
  ObjReader r(j, "dataset");
  r.read("csv", d.csv_path);
  r.read("label", d.label_column);
  r.read("noise_fraction", d.noise_fraction);
  if (r.has("split")) {
    auto v = r.at("split").get<std::vector<double>>();
    if (v.size() != 3)
      throw std::invalid_argument(
          "RunConfig: dataset.split must be [train, val, test]");
    d.train_fraction = v[0];
    d.val_fraction = v[1];
    d.test_fraction = v[2];
  }
  r.read("max_rows", d.max_rows);
  if (r.has("synthetic")) {
    ObjReader s(r.at("synthetic"), "dataset.synthetic");
    s.read("rows", d.synthetic.rows);
    s.read("features", d.synthetic.features);
    s.read("classes", d.synthetic.classes);
    s.read("spread", d.synthetic.spread);
    s.read("seed", d.synthetic.seed);
    s.finish();
  }
  r.finish();
  return d;
}

ModelSpec model_from_json(const nlohmann::json& j) {
  ModelSpec m;
  ObjReader r(j, "model");
  r.read("backbone", m.backbone_hidden);
  r.read("explainer", m.explainer_hidden);
  r.finish();
  return m;
}

PriorSpec prior_from_json(const nlohmann::json& j) {
  PriorSpec p;
  ObjReader r(j, "prior");
  if (r.has("gbdt")) {
    const auto& arr = r.at("gbdt");
    if (!arr.is_array())
      throw std::invalid_argument("RunConfig: prior.gbdt must be an array");
    p.members.clear();
    for (const auto& gj : arr) {
      ObjReader g(gj, "prior.gbdt entry");
      prior::GBDTConfig gc;
      g.read("trees", gc.n_trees);
      g.read("depth", gc.max_depth);
      g.read("lr", gc.learning_rate);
      g.read("min_leaf", gc.min_leaf);
      g.finish();
      p.members.push_back(gc);
    }
  }
  r.read("weights", p.weights);
  if (r.has("surrogate")) {
    ObjReader s(r.at("surrogate"), "prior.surrogate");
    s.read("hidden", p.surrogate.hidden);
    s.read("lr", p.surrogate.lr);
    s.read("epochs", p.surrogate.epochs);
    s.read("target_steps", p.surrogate.target_steps);
    s.read("batch", p.surrogate.batch_size);
    s.read("val_fraction", p.surrogate.val_fraction);
    s.read("seed", p.surrogate.seed);
    s.finish();
  }
  r.finish();
  return p;
}

TrainingSpec training_from_json(const nlohmann::json& j) {
  TrainingSpec t;
  ObjReader r(j, "training");
  r.read("lr", t.lr);
  r.read("epochs", t.max_epochs);
  r.read("batch", t.batch_size);
  r.read("patience", t.patience);
  r.read("subsets", t.n_subsets);
  r.read("shap_weight", t.shap_loss_weight);
  r.read("ce_through_explainer", t.ce_through_explainer);
  r.read("seeds", t.seeds);
  r.finish();
  return t;
}

StreamSpec stream_from_json(const nlohmann::json& j) {
  ObjReader r(j, "stream");
  StreamSpec s;
  if (r.has("kind"))
    s.kind = data::stream_kind_from_name(r.at("kind").get<std::string>());
  // Per-kind calibrated defaults apply first, explicit keys override.
  auto preset = continual::stream_preset(s.kind);
  s.drift_period = data::stream_drift_period(s.kind);
  s.backbone_hidden = preset.backbone_hidden;
  s.explainer_hidden = preset.explainer_hidden;
  s.lr = preset.lr;
  s.minibatch = preset.batch_size;
  s.update_epochs = preset.update_epochs;
  s.n_subsets = preset.n_subsets;
  s.alpha = preset.alpha;
  s.rho = preset.rho;
  s.retention_weight = preset.retention_weight;
  s.history_cap = preset.history_cap;
  r.read("steps", s.steps);
  r.read("batch", s.batch_size);
  r.read("drift_period", s.drift_period);
  r.read("label_noise", s.label_noise);
  r.read("backbone", s.backbone_hidden);
  r.read("explainer", s.explainer_hidden);
  r.read("lr", s.lr);
  r.read("minibatch", s.minibatch);
  r.read("update_epochs", s.update_epochs);
  r.read("subsets", s.n_subsets);
  r.read("alpha", s.alpha);
  r.read("rho", s.rho);
  r.read("retention_weight", s.retention_weight);
  r.read("history_cap", s.history_cap);
  r.read("checkpoints", s.retro_checkpoints);
  r.read("seeds", s.seeds);
  r.finish();
  return s;
}

void check_dims(const std::vector<std::size_t>& dims, const char* what,
                bool allow_empty) {
  if (!allow_empty && dims.empty())
    throw std::invalid_argument(std::string("RunConfig: ") + what +
                                " must not be empty");
  for (std::size_t d : dims)
    if (d == 0)
      throw std::invalid_argument(std::string("RunConfig: ") + what +
                                  " layer widths must be positive");
}

metrics::MetricReport report_for(const Matrix& probs,
                                 const std::vector<int>& labels,
                                 std::uint64_t seed) {
  return metrics::evaluate(probs, labels, seed);
}

// Mean |phi| over real and injected players of the test split.
std::pair<double, double> attribution_mass(const TrainedPipeline& p) {
  auto summary = model::explain_population(p.shapnn, p.test, p.ensemble);
  double real = 0.0, synth = 0.0;
  std::size_t n_real = 0, n_synth = 0;
  for (std::size_t j = 0; j < p.test.n_players(); ++j) {
    if (p.test.players[j].synthetic) {
      synth += summary.mean_abs_phi[j];
      ++n_synth;
    } else {
      real += summary.mean_abs_phi[j];
      ++n_real;
    }
  }
  return {n_real ? real / static_cast<double>(n_real) : kNaN,
          n_synth ? synth / static_cast<double>(n_synth) : kNaN};
}

}  // namespace

PriorSpec::PriorSpec() {
  prior::GBDTConfig shallow;
  shallow.n_trees = 100;
  shallow.max_depth = 3;
  shallow.learning_rate = 0.1;
  prior::GBDTConfig deep;
  deep.n_trees = 200;
  deep.max_depth = 6;
  deep.learning_rate = 0.05;
  members = {shallow, deep};
}

continual::ContinualConfig StreamSpec::continual_config(
    std::uint64_t seed) const {
  continual::ContinualConfig c;
  c.backbone_hidden = backbone_hidden;
  c.explainer_hidden = explainer_hidden;
  c.lr = lr;
  c.batch_size = minibatch;
  c.update_epochs = update_epochs;
  c.n_subsets = n_subsets;
  c.alpha = alpha;
  c.rho = rho;
  c.retention_weight = retention_weight;
  c.history_cap = history_cap;
  c.input_scale = data::stream_input_scale(kind);
  c.seed = seed;
  return c;
}

void RunConfig::validate() const {
  const auto& d = dataset;
  if (d.train_fraction <= 0.0 || d.val_fraction < 0.0 || d.test_fraction < 0.0)
    throw std::invalid_argument(
        "RunConfig: split fractions must be non-negative with train > 0");
  if (std::fabs(d.train_fraction + d.val_fraction + d.test_fraction - 1.0) >
      1e-9)
    throw std::invalid_argument("RunConfig: split fractions must sum to 1");
  if (d.noise_fraction < 0.0)
    throw std::invalid_argument("RunConfig: noise_fraction must be >= 0, got " +
                                std::to_string(d.noise_fraction));
  if (d.has_csv() && d.has_synthetic())
    throw std::invalid_argument(
        "RunConfig: configure either dataset.csv or dataset.synthetic, not "
        "both");
  if (d.has_synthetic()) {
    if (d.synthetic.features < 2 || d.synthetic.classes < 2)
      throw std::invalid_argument(
          "RunConfig: synthetic data needs >= 2 features and >= 2 classes");
    if (!(d.synthetic.spread > 0.0))
      throw std::invalid_argument("RunConfig: synthetic.spread must be > 0");
  }

  check_dims(model.backbone_hidden, "model.backbone", false);
  check_dims(model.explainer_hidden, "model.explainer", true);

  if (prior.members.empty())
    throw std::invalid_argument("RunConfig: prior needs at least one GBDT");
  for (const auto& g : prior.members)
    if (g.n_trees < 1 || g.max_depth < 1 || !(g.learning_rate > 0.0) ||
        g.min_leaf < 1)
      throw std::invalid_argument(
          "RunConfig: each prior GBDT needs trees >= 1, depth >= 1, lr > 0, "
          "min_leaf >= 1");
  if (!prior.weights.empty()) {
    if (prior.weights.size() != prior.members.size())
      throw std::invalid_argument(
          "RunConfig: prior.weights size must match the GBDT count");
    for (double w : prior.weights)
      if (!(w > 0.0))
        throw std::invalid_argument("RunConfig: prior weights must be > 0");
  }
  check_dims(prior.surrogate.hidden, "prior.surrogate.hidden", true);
  if (!(prior.surrogate.lr > 0.0) || prior.surrogate.batch_size < 1 ||
      prior.surrogate.epochs < 0 || prior.surrogate.target_steps < 1 ||
      prior.surrogate.val_fraction < 0.0 || prior.surrogate.val_fraction >= 1.0)
    throw std::invalid_argument("RunConfig: invalid prior.surrogate settings");

  const auto& t = training;
  if (!(t.lr > 0.0) || t.max_epochs < 0 || t.batch_size < 1 ||
      t.patience < 0 || t.n_subsets < 1 || t.shap_loss_weight < 0.0)
    throw std::invalid_argument("RunConfig: invalid training settings");
  if (t.seeds.empty())
    throw std::invalid_argument("RunConfig: training.seeds must not be empty");

  const auto& s = stream;
  if (s.steps < 2 || s.batch_size < 2 || s.drift_period < 1)
    throw std::invalid_argument(
        "RunConfig: stream needs steps >= 2, batch >= 2, drift_period >= 1");
  if (s.label_noise < 0.0 || s.label_noise > 1.0)
    throw std::invalid_argument("RunConfig: stream.label_noise must be in "
                                "[0, 1]");
  check_dims(s.backbone_hidden, "stream.backbone", false);
  check_dims(s.explainer_hidden, "stream.explainer", true);
  if (!(s.lr > 0.0) || s.minibatch < 1 || s.update_epochs < 1 ||
      s.n_subsets < 1 || s.alpha < 0.0 || s.alpha > 1.0 || !(s.rho > 0.0) ||
      s.rho > 1.0 || s.retention_weight < 0.0 || s.history_cap < 1)
    throw std::invalid_argument("RunConfig: invalid stream settings");
  for (int c : s.retro_checkpoints)
    if (c < 2 || c > s.steps)
      throw std::invalid_argument(
          "RunConfig: stream checkpoints must lie in [2, steps], got " +
          std::to_string(c));
  if (s.seeds.empty())
    throw std::invalid_argument("RunConfig: stream.seeds must not be empty");

  if (output_dir.empty())
    throw std::invalid_argument("RunConfig: output_dir must not be empty");
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json gbdts = nlohmann::json::array();
  for (const auto& g : prior.members)
    gbdts.push_back({{"trees", g.n_trees},
                     {"depth", g.max_depth},
                     {"lr", g.learning_rate},
                     {"min_leaf", g.min_leaf}});
  return nlohmann::json{
      {"dataset",
       {{"csv", dataset.csv_path},
        {"label", dataset.label_column},
        {"noise_fraction", dataset.noise_fraction},
        {"split", nlohmann::json::array({dataset.train_fraction,
                                         dataset.val_fraction,
                                         dataset.test_fraction})},
        {"max_rows", dataset.max_rows},
        {"synthetic",
         {{"rows", dataset.synthetic.rows},
          {"features", dataset.synthetic.features},
          {"classes", dataset.synthetic.classes},
          {"spread", dataset.synthetic.spread},
          {"seed", dataset.synthetic.seed}}}}},
      {"model",
       {{"backbone", model.backbone_hidden},
        {"explainer", model.explainer_hidden}}},
      {"prior",
       {{"gbdt", gbdts},
        {"weights", prior.weights},
        {"surrogate",
         {{"hidden", prior.surrogate.hidden},
          {"lr", prior.surrogate.lr},
          {"epochs", prior.surrogate.epochs},
          {"target_steps", prior.surrogate.target_steps},
          {"batch", prior.surrogate.batch_size},
          {"val_fraction", prior.surrogate.val_fraction},
          {"seed", prior.surrogate.seed}}}}},
      {"training",
       {{"lr", training.lr},
        {"epochs", training.max_epochs},
        {"batch", training.batch_size},
        {"patience", training.patience},
        {"subsets", training.n_subsets},
        {"shap_weight", training.shap_loss_weight},
        {"ce_through_explainer", training.ce_through_explainer},
        {"seeds", training.seeds}}},
      {"stream",
       {{"kind", data::stream_kind_name(stream.kind)},
        {"steps", stream.steps},
        {"batch", stream.batch_size},
        {"drift_period", stream.drift_period},
        {"label_noise", stream.label_noise},
        {"backbone", stream.backbone_hidden},
        {"explainer", stream.explainer_hidden},
        {"lr", stream.lr},
        {"minibatch", stream.minibatch},
        {"update_epochs", stream.update_epochs},
        {"subsets", stream.n_subsets},
        {"alpha", stream.alpha},
        {"rho", stream.rho},
        {"retention_weight", stream.retention_weight},
        {"history_cap", stream.history_cap},
        {"checkpoints", stream.retro_checkpoints},
        {"seeds", stream.seeds}}},
      {"output_dir", output_dir}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  try {
    RunConfig cfg;
    ObjReader top(j, "run config");
    if (top.has("dataset")) cfg.dataset = dataset_from_json(top.at("dataset"));
    if (top.has("model")) cfg.model = model_from_json(top.at("model"));
    if (top.has("prior")) cfg.prior = prior_from_json(top.at("prior"));
    if (top.has("training"))
      cfg.training = training_from_json(top.at("training"));
    if (top.has("stream")) cfg.stream = stream_from_json(top.at("stream"));
    top.read("output_dir", cfg.output_dir);
    top.finish();
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("RunConfig: malformed value: ") +
                                e.what());
  }
}

RunConfig RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("RunConfig: cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("RunConfig: " + path +
                                " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

data::EncodedDataset load_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  if (spec.has_csv() == spec.has_synthetic())
    throw std::invalid_argument(
        "load_dataset: exactly one of dataset.csv and dataset.synthetic must "
        "be configured");
  data::EncodedDataset ds;
  if (spec.has_csv()) {
    auto schema =
        data::ColumnSchema::infer_from_csv(spec.csv_path, spec.label_column);
    ds = data::load_csv(spec.csv_path, schema, spec.label_column);
  } else {
    ds = make_blobs(spec.synthetic);
  }
  Rng root(seed);
  if (spec.max_rows > 0 && spec.max_rows < ds.n()) {
    Rng sub = root.fork(11);
    ds = stratified_subsample(ds, spec.max_rows, sub);
  }
  if (spec.noise_fraction > 0.0)
    ds = data::inject_noise_features(ds, spec.noise_fraction,
                                     root.fork(12).seed());
  return ds;
}

TrainedPipeline run_pipeline(const RunConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  auto ds = load_dataset(cfg.dataset, seed);
  auto parts = data::split(ds, cfg.dataset.train_fraction,
                           cfg.dataset.val_fraction,
                           cfg.dataset.test_fraction, seed);
  TrainedPipeline p;
  p.train = std::move(parts[0]);
  p.val = std::move(parts[1]);
  p.test = std::move(parts[2]);

  std::vector<shapley::SurrogateModel> surrogates;
  for (std::size_t i = 0; i < cfg.prior.members.size(); ++i) {
    auto g = prior::train_gbdt(p.train, cfg.prior.members[i]);
    auto probs = g.predict_proba_batch(p.train.X);
    auto scfg = cfg.prior.surrogate;
    scfg.seed = cfg.prior.surrogate.seed + 1000003 * seed + i;
    surrogates.push_back(shapley::train_surrogate(probs, p.train, scfg));
    p.gbdts.push_back(std::move(g));
  }
  p.ensemble = model::make_ensemble(std::move(surrogates), cfg.prior.weights);

  const auto& t = cfg.training;
  model::ShapnnConfig mc;
  mc.backbone_hidden = cfg.model.backbone_hidden;
  mc.explainer_hidden = cfg.model.explainer_hidden;
  mc.lr = t.lr;
  mc.batch_size = t.batch_size;
  mc.max_epochs = std::max(t.max_epochs, 1);  // build-time floor; see below
  mc.patience = t.patience;
  mc.n_subsets = t.n_subsets;
  mc.shap_loss_weight = t.shap_loss_weight;
  mc.ce_through_explainer = t.ce_through_explainer;
  mc.seed = seed;
  p.shapnn = model::build_shapnn(p.train.n_encoded(), p.train.n_players(),
                                 static_cast<std::size_t>(p.train.n_classes),
                                 mc);
  for (const auto& g : p.train.players)
    p.shapnn.player_names.push_back(g.name);

  model::MlpConfig mlc;
  mlc.hidden = cfg.model.backbone_hidden;
  mlc.lr = t.lr;
  mlc.batch_size = t.batch_size;
  mlc.max_epochs = std::max(t.max_epochs, 1);
  mlc.patience = t.patience;
  mlc.seed = seed;

  if (t.max_epochs > 0) {
    p.shapnn_fit = model::fit(p.shapnn, p.train, p.val, p.ensemble, mc);
    p.mlp_fit = model::train_mlp(p.train, p.val, mlc);
  } else {
    // Degenerate request: evaluate the freshly initialized networks. The
    // baseline uses the same initializer stream a real training run starts
    // from.
    Rng init = Rng(seed).fork(21);
    p.mlp_fit.model.net = nn::DenseNetwork::mlp(
        p.train.n_encoded(), mlc.hidden,
        static_cast<std::size_t>(p.train.n_classes), init);
  }
  return p;
}

TrainOutcome cmd_train(const RunConfig& cfg) {
  cfg.validate();
  fs::path dir = prepare_run_dir(cfg, true);
  TrainOutcome out;
  out.run_dir = dir.string();

  std::string csv = "model,seed,auroc,auroc_soft,accuracy,samples\n";
  std::vector<std::string> outputs{"manifest.json", "metrics.csv"};
  std::vector<double> shapnn_aurocs, mlp_aurocs;

  for (std::uint64_t seed : cfg.training.seeds) {
    auto p = run_pipeline(cfg, seed);
    SeedMetrics sm;
    sm.seed = seed;
    auto add = [&](const std::string& name, const Matrix& probs) {
      auto rep = report_for(probs, p.test.y, seed);
      csv += name + "," + std::to_string(seed) + "," + fmt(rep.auroc) + "," +
             fmt(rep.auroc_soft) + "," + fmt(rep.accuracy) + "," +
             std::to_string(rep.sample_count) + "\n";
      sm.by_model[name] = rep;
    };
    add("gbdt", p.gbdts[0].predict_proba_batch(p.test.X));
    prior::LogisticConfig lr_cfg;
    lr_cfg.seed = seed;
    prior::RandomForestConfig rf_cfg;
    rf_cfg.seed = seed;
    auto baselines = prior::train_baselines(p.train, lr_cfg, rf_cfg);
    add("logistic", baselines.logistic.predict_proba_batch(p.test.X));
    add("random_forest", baselines.forest.predict_proba_batch(p.test.X));
    add("mlp", p.mlp_fit.model.predict_proba_batch(p.test.X));
    add("shapnn", model::predict_proba_batch(p.shapnn, p.test.X, p.ensemble));
    shapnn_aurocs.push_back(sm.by_model["shapnn"].auroc);
    mlp_aurocs.push_back(sm.by_model["mlp"].auroc);

    nlohmann::json surros = nlohmann::json::array();
    for (const auto& s : p.ensemble.surrogates) surros.push_back(s.to_json());
    nlohmann::json gbdts = nlohmann::json::array();
    for (const auto& g : p.gbdts) gbdts.push_back(g.to_json());
    nlohmann::json bundle{{"format", "shapnn-bundle-v1"},
                          {"version", kVersion},
                          {"seed", seed},
                          {"shapnn", p.shapnn.to_json()},
                          {"mlp", p.mlp_fit.model.net.to_json()},
                          {"surrogates", surros},
                          {"weights", p.ensemble.weights},
                          {"gbdts", gbdts}};
    std::string rel = "checkpoints/bundle_seed" + std::to_string(seed) +
                      ".json";
    write_text(dir / rel, bundle.dump() + "\n");
    outputs.push_back(rel);
    out.per_seed.push_back(std::move(sm));
  }

  out.shapnn_median_auroc = median(shapnn_aurocs);
  out.mlp_median_auroc = median(mlp_aurocs);
  write_text(dir / "metrics.csv", csv);
  write_manifest(dir, "train", cfg, nlohmann::json::object(), outputs);
  return out;
}

NoiseStudyOutcome cmd_noise_study(const RunConfig& cfg,
                                  const std::vector<double>& fractions,
                                  const std::vector<std::uint64_t>& seeds) {
  cfg.validate();
  if (fractions.empty())
    throw std::invalid_argument("cmd_noise_study: fractions must not be empty");
  for (double f : fractions)
    if (f < 0.0)
      throw std::invalid_argument(
          "cmd_noise_study: fractions must be >= 0, got " + std::to_string(f));
  if (seeds.empty())
    throw std::invalid_argument("cmd_noise_study: seeds must not be empty");

  fs::path dir = prepare_run_dir(cfg, false);
  NoiseStudyOutcome out;
  out.run_dir = dir.string();
  out.csv_path = (dir / "noise_study.csv").string();

  const std::vector<std::string> kModels{"gbdt", "mlp", "shapnn"};
  std::string csv =
      "fraction,model,seed,accuracy,real_abs_phi,synthetic_abs_phi\n";
  for (double f : fractions) {
    RunConfig noisy = cfg;
    noisy.dataset.noise_fraction = f;
    // accumulators per model: accuracy, real phi, synthetic phi
    std::map<std::string, std::array<double, 3>> acc;
    for (const auto& m : kModels) acc[m] = {0.0, 0.0, 0.0};
    for (std::uint64_t seed : seeds) {
      auto p = run_pipeline(noisy, seed);
      auto [real_phi, synth_phi] = attribution_mass(p);
      std::map<std::string, std::array<double, 3>> row;
      row["gbdt"] = {metrics::accuracy(p.gbdts[0].predict_proba_batch(p.test.X),
                                       p.test.y),
                     kNaN, kNaN};
      row["mlp"] = {
          metrics::accuracy(p.mlp_fit.model.predict_proba_batch(p.test.X),
                            p.test.y),
          kNaN, kNaN};
      row["shapnn"] = {
          metrics::accuracy(
              model::predict_proba_batch(p.shapnn, p.test.X, p.ensemble),
              p.test.y),
          real_phi, synth_phi};
      for (const auto& m : kModels) {
        csv += fmt(f) + "," + m + "," + std::to_string(seed) + "," +
               fmt(row[m][0]) + "," + fmt(row[m][1]) + "," + fmt(row[m][2]) +
               "\n";
        for (int k = 0; k < 3; ++k) acc[m][k] += row[m][k];
      }
    }
    double inv = 1.0 / static_cast<double>(seeds.size());
    for (const auto& m : kModels)
      out.summary.push_back({f, m, acc[m][0] * inv, acc[m][1] * inv,
                             acc[m][2] * inv});
  }

  write_text(out.csv_path, csv);
  write_manifest(dir, "noise-study", cfg,
                 {{"fractions", fractions}, {"seeds", seeds}},
                 {"manifest.json", "noise_study.csv"});
  return out;
}

SpeedBenchOutcome cmd_speed_bench(const RunConfig& cfg, std::size_t n_samples,
                                  std::size_t subset_budget) {
  cfg.validate();
  if (n_samples == 0 || subset_budget == 0)
    throw std::invalid_argument(
        "cmd_speed_bench: n_samples and subset_budget must be positive");

  // A single prior keeps the comparison honest: both explainers then answer
  // against the same surrogate value function.
  RunConfig solo = cfg;
  solo.prior.members.resize(1);
  solo.prior.weights.clear();
  std::uint64_t seed = cfg.training.seeds.front();
  auto p = run_pipeline(solo, seed);
  if (p.test.n() == 0)
    throw std::invalid_argument("cmd_speed_bench: test split is empty");
  const auto& surrogate = p.ensemble.surrogates.front();
  const std::size_t n_classes = static_cast<std::size_t>(p.test.n_classes);

  constexpr std::size_t kWarmup = 10;
  Rng pick = Rng(seed).fork(77);
  std::vector<std::size_t> ids(kWarmup + n_samples);
  for (auto& id : ids) id = pick.index(p.test.n());

  using clock = std::chrono::steady_clock;
  double sink = 0.0;  // keeps the timed results observable

  auto time_explain = [&](std::size_t id) {
    auto x = p.test.X.row_vec(id);
    auto t0 = clock::now();
    Matrix one(1, p.test.n_encoded());
    one.set_row(0, x);
    Matrix v_full, v_empty;
    model::ensemble_span(p.ensemble, one, v_full, v_empty);
    auto r = model::forward_explain(p.shapnn, x, v_full.row_vec(0),
                                    v_empty.row_vec(0));
    auto t1 = clock::now();
    sink += r.probs[0];
    return std::chrono::duration<double, std::micro>(t1 - t0).count();
  };
  auto time_kernel = [&](std::size_t id, std::size_t sample_no) {
    auto x = p.test.X.row_vec(id);
    auto t0 = clock::now();
    shapley::ValueFunction v{
        p.test.n_players(), n_classes,
        [&](const shapley::SubsetMask& s) {
          return surrogate.predict_proba(x, s);
        }};
    shapley::KernelShapConfig kc;
    kc.budget = subset_budget;
    kc.seed = seed * 7919 + sample_no;
    auto phi = shapley::kernel_shap(v, kc);
    auto t1 = clock::now();
    sink += phi(0, 0);
    return std::chrono::duration<double, std::micro>(t1 - t0).count();
  };

  std::vector<double> t_explain, t_kernel;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    double us = time_explain(ids[i]);
    if (i >= kWarmup) t_explain.push_back(us);
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    double us = time_kernel(ids[i], i);
    if (i >= kWarmup) t_kernel.push_back(us);
  }

  auto mean_std = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return std::pair<double, double>(
        mean, std::sqrt(var / static_cast<double>(v.size())));
  };
  SpeedBenchOutcome out;
  out.n_samples = n_samples;
  out.subset_budget = subset_budget;
  std::tie(out.explain_mean_us, out.explain_std_us) = mean_std(t_explain);
  std::tie(out.kernel_mean_us, out.kernel_std_us) = mean_std(t_kernel);
  out.speedup = out.kernel_mean_us / out.explain_mean_us;

  fs::path dir = prepare_run_dir(cfg, false);
  out.run_dir = dir.string();
  std::string csv =
      "method,samples,subset_budget,mean_microseconds,std_microseconds,"
      "speedup_vs_kernelshap\n";
  csv += "single_pass," + std::to_string(n_samples) + "," +
         std::to_string(subset_budget) + "," + fmt(out.explain_mean_us) + "," +
         fmt(out.explain_std_us) + "," + fmt(out.speedup) + "\n";
  csv += "kernelshap," + std::to_string(n_samples) + "," +
         std::to_string(subset_budget) + "," + fmt(out.kernel_mean_us) + "," +
         fmt(out.kernel_std_us) + ",1\n";
  write_text(dir / "timing.csv", csv);
  write_manifest(dir, "speed-bench", cfg,
                 {{"samples", n_samples},
                  {"subset_budget", subset_budget},
                  {"checksum", sink}},
                 {"manifest.json", "timing.csv"});
  return out;
}

StreamOutcome cmd_stream(const RunConfig& cfg) {
  cfg.validate();
  fs::path dir = prepare_run_dir(cfg, true);
  StreamOutcome out;
  out.run_dir = dir.string();

  std::string csv =
      "model,seed,t,concept_id,forward_auroc,ce,retention,retro_auroc\n";
  std::vector<std::string> outputs{"manifest.json", "stream_metrics.csv"};
  for (std::uint64_t seed : cfg.stream.seeds) {
    data::StreamConfig sc;
    sc.kind = cfg.stream.kind;
    sc.steps = cfg.stream.steps;
    sc.batch_size = cfg.stream.batch_size;
    sc.drift_period = cfg.stream.drift_period;
    sc.label_noise = cfg.stream.label_noise;
    sc.seed = seed;
    auto batches = data::stream_generate(sc);
    auto result = continual::online_adaptation_eval(
        batches, cfg.stream.continual_config(seed),
        cfg.stream.retro_checkpoints);

    auto append = [&](const std::string& name,
                      const continual::StreamRunResult& run) {
      for (const auto& rec : run.steps)
        csv += name + "," + std::to_string(seed) + "," + std::to_string(rec.t) +
               "," + std::to_string(rec.concept_id) + "," +
               fmt(rec.forward_auroc) + "," + fmt(rec.ce) + "," +
               fmt(rec.retention) + "," + fmt(rec.retro_auroc) + "\n";
    };
    append("shapnn", result.shapnn);
    append("baseline", result.baseline);

    for (const auto& artifact : result.shapnn.state.history) {
      nlohmann::json j{{"format", "shapnn-stream-checkpoint-v1"},
                       {"version", kVersion},
                       {"seed", seed},
                       {"step", artifact.step},
                       {"model", artifact.net.to_json()}};
      std::string rel = "checkpoints/seed" + std::to_string(seed) + "_step" +
                        std::to_string(artifact.step) + ".json";
      write_text(dir / rel, j.dump() + "\n");
      outputs.push_back(rel);
    }
    out.seeds.push_back(seed);
    out.per_seed.push_back(std::move(result));
  }

  write_text(dir / "stream_metrics.csv", csv);
  write_manifest(dir, "stream", cfg, nlohmann::json::object(), outputs);
  return out;
}

ExplainOutcome cmd_explain(const RunConfig& cfg,
                           const std::string& checkpoint_path,
                           const std::vector<std::size_t>& sample_ids,
                           bool population) {
  cfg.validate();
  if (population && !sample_ids.empty())
    throw std::invalid_argument(
        "cmd_explain: pass sample ids or population mode, not both");
  if (!population && sample_ids.empty())
    throw std::invalid_argument(
        "cmd_explain: select sample ids or population mode");

  std::ifstream in(checkpoint_path);
  if (!in)
    throw std::runtime_error("cmd_explain: cannot open checkpoint " +
                             checkpoint_path);
  nlohmann::json bundle;
  try {
    in >> bundle;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("cmd_explain: checkpoint " + checkpoint_path +
                             " is not valid JSON: " + e.what());
  }
  if (bundle.value("format", "") != "shapnn-bundle-v1")
    throw std::invalid_argument(
        "cmd_explain: checkpoint is not a shapnn-bundle-v1 file");

  auto m = model::SHAPNNModel::from_json(bundle.at("shapnn"));
  std::vector<shapley::SurrogateModel> surrogates;
  for (const auto& sj : bundle.at("surrogates"))
    surrogates.push_back(shapley::SurrogateModel::from_json(sj));
  auto ensemble = model::make_ensemble(
      std::move(surrogates), bundle.at("weights").get<std::vector<double>>());
  std::uint64_t seed = bundle.at("seed").get<std::uint64_t>();

  auto ds = load_dataset(cfg.dataset, seed);
  if (ds.n_encoded() != m.n_encoded)
    throw std::invalid_argument(
        "cmd_explain: checkpoint expects " + std::to_string(m.n_encoded) +
        " encoded features but the dataset has " +
        std::to_string(ds.n_encoded()));

  fs::path dir = prepare_run_dir(cfg, false);
  ExplainOutcome out;
  out.run_dir = dir.string();
  std::vector<std::string> outputs{"manifest.json", "attributions.csv"};

  if (population) {
    auto parts = data::split(ds, cfg.dataset.train_fraction,
                             cfg.dataset.val_fraction,
                             cfg.dataset.test_fraction, seed);
    const auto& test = parts[2];
    if (test.n() == 0)
      throw std::invalid_argument(
          "cmd_explain: population selection is empty (test split has no "
          "rows)");
    auto summary = model::explain_population(m, test, ensemble);
    std::string csv = "player,name,mean_abs_phi\n";
    for (std::size_t j = 0; j < test.n_players(); ++j)
      csv += std::to_string(j) + "," + test.players[j].name + "," +
             fmt(summary.mean_abs_phi[j]) + "\n";
    std::string points = "sample,player,feature_value,phi\n";
    for (const auto& pt : summary.points)
      points += std::to_string(pt.sample) + "," + std::to_string(pt.player) +
                "," + fmt(pt.feature_value) + "," + fmt(pt.phi) + "\n";
    write_text(dir / "attributions.csv", csv);
    write_text(dir / "points.csv", points);
    outputs.push_back("points.csv");
    out.rows_written = test.n_players() + summary.points.size();
  } else {
    std::string csv = "sample,rank,player,name,class,phi,polarity\n";
    std::size_t rows = 0;
    for (std::size_t id : sample_ids) {
      if (id >= ds.n())
        throw std::invalid_argument(
            "cmd_explain: sample id " + std::to_string(id) +
            " is out of range for " + std::to_string(ds.n()) + " rows");
      auto ranked = model::explain_sample(m, ds.X.row_vec(id), ensemble);
      for (std::size_t r = 0; r < ranked.size(); ++r) {
        const auto& a = ranked[r];
        csv += std::to_string(id) + "," + std::to_string(r + 1) + "," +
               std::to_string(a.player) + "," + a.name + "," +
               std::to_string(a.cls) + "," + fmt(a.phi) + "," +
               std::to_string(a.polarity) + "\n";
        ++rows;
      }
    }
    write_text(dir / "attributions.csv", csv);
    out.rows_written = rows;
  }

  write_manifest(dir, "explain", cfg,
                 {{"checkpoint", checkpoint_path},
                  {"ids", sample_ids},
                  {"population", population}},
                 outputs);
  return out;
}

}  // namespace shapnn::config
