#include "shapnn/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace shapnn::shapley {

namespace {

// Uniform cardinality, then a uniform subset of that size. Unlike the
// Shapley-kernel sampler this covers the empty and full coalitions, which
// the normalization step needs the surrogate to handle.
SubsetMask training_mask(std::size_t n, Rng& rng) {
  std::size_t size = rng.index(n + 1);
  SubsetMask mask(n, 0);
  for (std::size_t i : rng.choose(n, size)) mask[i] = 1;
  return mask;
}

}  // namespace

std::vector<double> mask_input(const std::vector<double>& x,
                               const SubsetMask& s,
                               const std::vector<double>& background,
                               const std::vector<data::PlayerGroup>* players) {
  if (x.size() != background.size())
    throw std::invalid_argument("mask_input: x has " + std::to_string(x.size()) +
                                " features but background has " +
                                std::to_string(background.size()));
  std::vector<double> out = x;
  if (players == nullptr) {
    if (s.size() != x.size())
      throw std::invalid_argument("mask_input: mask length " +
                                  std::to_string(s.size()) +
                                  " != feature count " +
                                  std::to_string(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i)
      if (!s[i]) out[i] = background[i];
    return out;
  }
  if (s.size() != players->size())
    throw std::invalid_argument("mask_input: mask length " +
                                std::to_string(s.size()) + " != player count " +
                                std::to_string(players->size()));
  for (std::size_t p = 0; p < players->size(); ++p) {
    if (s[p]) continue;
    for (std::size_t col : (*players)[p].encoded_cols) {
      if (col >= out.size())
        throw std::invalid_argument("mask_input: player column out of range");
      out[col] = background[col];
    }
  }
  return out;
}

std::vector<double> background_defaults(const data::EncodedDataset& ds) {
  // Features are standardized, so the numeric background (training mean) is
  // exactly zero; categoricals take the "missing" indicator pattern.
  std::vector<double> bg(ds.n_encoded(), 0.0);
  for (std::size_t p = 0; p < ds.players.size(); ++p) {
    const data::Column& col = ds.schema.columns[p];
    if (col.kind != data::ColumnKind::kCategorical) continue;
    const auto& cols = ds.players[p].encoded_cols;
    // The vocabulary ends with "__missing__"; its indicator is the last one.
    bg[cols.back()] = 1.0;
  }
  return bg;
}

std::vector<double> SurrogateModel::predict_proba(const std::vector<double>& x,
                                                  const SubsetMask& s) const {
  if (!trained)
    throw std::runtime_error("surrogate not trained; call train_surrogate first");
  std::vector<double> input = mask_input(x, s, background, &players);
  input.reserve(n_encoded() + n_players());
  for (std::size_t p = 0; p < s.size(); ++p)
    input.push_back(static_cast<double>(s[p]));
  return nn::softmax(net.forward(input));
}

Matrix SurrogateModel::predict_proba_batch(
    const Matrix& X, const std::vector<SubsetMask>& masks) const {
  if (!trained)
    throw std::runtime_error("surrogate not trained; call train_surrogate first");
  if (X.rows != masks.size())
    throw std::invalid_argument("predict_proba_batch: row/mask count mismatch");
  const std::size_t e = n_encoded(), p = n_players();
  Matrix input(X.rows, e + p);
  for (std::size_t i = 0; i < X.rows; ++i) {
    std::vector<double> masked = mask_input(X.row_vec(i), masks[i], background,
                                            &players);
    double* row = input.row(i);
    std::copy(masked.begin(), masked.end(), row);
    for (std::size_t j = 0; j < p; ++j)
      row[e + j] = static_cast<double>(masks[i][j]);
  }
  Matrix logits = net.forward_batch(input);
  nn::softmax_rows_inplace(logits);
  return logits;
}

nlohmann::json SurrogateModel::to_json() const {
  nlohmann::json j;
  j["format"] = "shapnn-surrogate-v1";
  j["net"] = net.to_json();
  j["background"] = background;
  j["n_classes"] = n_classes;
  j["trained"] = trained;
  j["players"] = nlohmann::json::array();
  for (const auto& g : players) {
    nlohmann::json pj;
    pj["name"] = g.name;
    pj["encoded_cols"] = g.encoded_cols;
    pj["synthetic"] = g.synthetic;
    j["players"].push_back(pj);
  }
  return j;
}

SurrogateModel SurrogateModel::from_json(const nlohmann::json& j) {
  if (!j.contains("format") || j["format"] != "shapnn-surrogate-v1")
    throw std::runtime_error("unrecognized surrogate checkpoint format");
  SurrogateModel m;
  m.net = nn::DenseNetwork::from_json(j.at("net"));
  m.background = j.at("background").get<std::vector<double>>();
  m.n_classes = j.at("n_classes").get<int>();
  m.trained = j.at("trained").get<bool>();
  for (const auto& pj : j.at("players")) {
    data::PlayerGroup g;
    g.name = pj.at("name").get<std::string>();
    g.encoded_cols = pj.at("encoded_cols").get<std::vector<std::size_t>>();
    g.synthetic = pj.at("synthetic").get<bool>();
    m.players.push_back(std::move(g));
  }
  return m;
}

SurrogateModel train_surrogate(const Matrix& prior_probs,
                               const data::EncodedDataset& ds,
                               const SurrogateConfig& cfg) {
  if (ds.n() == 0)
    throw std::invalid_argument("train_surrogate: empty dataset");
  if (prior_probs.rows != ds.n() ||
      prior_probs.cols != static_cast<std::size_t>(ds.n_classes))
    throw std::invalid_argument(
        "train_surrogate: prior probabilities must be [n_samples x n_classes]");
  if (cfg.lr < 0.0 || cfg.batch_size < 1 || cfg.val_fraction < 0.0 ||
      cfg.val_fraction >= 1.0 || (cfg.epochs <= 0 && cfg.target_steps < 1))
    throw std::invalid_argument("train_surrogate: invalid training config");

  const std::size_t e = ds.n_encoded(), p = ds.n_players();
  Rng rng(cfg.seed);
  Rng mask_rng = rng.fork(1);
  Rng probe_rng = rng.fork(2);

  SurrogateModel model;
  model.players = ds.players;
  model.background = background_defaults(ds);
  model.n_classes = ds.n_classes;
  std::vector<std::size_t> dims{e + p};
  for (std::size_t h : cfg.hidden) dims.push_back(h);
  dims.push_back(static_cast<std::size_t>(ds.n_classes));
  std::vector<nn::Activation> acts(dims.size() - 2, nn::Activation::kRelu);
  acts.push_back(nn::Activation::kIdentity);
  model.net = nn::DenseNetwork(dims, acts, rng);
  model.trained = true;  // usable from here on; flag guards raw construction

  // Train/validation row split.
  std::vector<std::size_t> order = rng.permutation(ds.n());
  std::size_t n_val = static_cast<std::size_t>(
      std::floor(cfg.val_fraction * static_cast<double>(ds.n())));
  std::vector<std::size_t> val_rows(order.end() - n_val, order.end());
  order.resize(ds.n() - n_val);

  // Fixed probe pairs (row, mask) make before/after losses comparable.
  auto make_probe = [&](const std::vector<std::size_t>& rows) {
    std::vector<std::pair<std::size_t, SubsetMask>> probe;
    probe.reserve(rows.size());
    for (std::size_t r : rows) probe.emplace_back(r, training_mask(p, probe_rng));
    return probe;
  };
  auto probe_loss = [&](const std::vector<std::pair<std::size_t, SubsetMask>>&
                            probe) {
    if (probe.empty()) return std::numeric_limits<double>::quiet_NaN();
    Matrix input(probe.size(), e + p);
    Matrix target(probe.size(), ds.n_classes);
    for (std::size_t i = 0; i < probe.size(); ++i) {
      auto masked = mask_input(ds.X.row_vec(probe[i].first), probe[i].second,
                               model.background, &model.players);
      double* row = input.row(i);
      std::copy(masked.begin(), masked.end(), row);
      for (std::size_t j = 0; j < p; ++j)
        row[e + j] = static_cast<double>(probe[i].second[j]);
      for (int k = 0; k < ds.n_classes; ++k)
        target(i, k) = prior_probs(probe[i].first, k);
    }
    return nn::softmax_cross_entropy_batch(model.net.forward_batch(input),
                                           target)
        .loss;
  };
  auto train_probe = make_probe(order);
  auto val_probe = make_probe(val_rows);
  model.epoch_loss.push_back(probe_loss(train_probe));

  // Epoch budget: honor an explicit count, otherwise match a step target so
  // tiny datasets still get enough SGD steps to distill the prior.
  std::size_t batches_per_epoch =
      order.empty() ? 1
                    : (order.size() + cfg.batch_size - 1) / cfg.batch_size;
  int epochs = cfg.epochs > 0
                   ? cfg.epochs
                   : static_cast<int>(std::clamp<std::size_t>(
                         (static_cast<std::size_t>(cfg.target_steps) +
                          batches_per_epoch - 1) /
                             batches_per_epoch,
                         1, 4000));

  nlohmann::json stable = model.net.to_json();
  Matrix input(cfg.batch_size, e + p);
  Matrix target(cfg.batch_size, ds.n_classes);
  nn::ForwardCache cache;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    // Linear decay to 10% of the initial rate by the final epoch.
    double frac = epochs > 1 ? static_cast<double>(epoch) /
                                   static_cast<double>(epochs - 1)
                             : 0.0;
    double lr = cfg.lr * (1.0 - 0.9 * frac);
    rng.shuffle(order);
    double epoch_total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      std::size_t b = std::min<std::size_t>(cfg.batch_size,
                                            order.size() - start);
      Matrix* in = &input;
      Matrix* tg = &target;
      Matrix small_in, small_tg;
      if (b != static_cast<std::size_t>(cfg.batch_size)) {
        small_in = Matrix(b, e + p);
        small_tg = Matrix(b, ds.n_classes);
        in = &small_in;
        tg = &small_tg;
      }
      for (std::size_t i = 0; i < b; ++i) {
        std::size_t r = order[start + i];
        SubsetMask mask = training_mask(p, mask_rng);
        auto masked =
            mask_input(ds.X.row_vec(r), mask, model.background, &model.players);
        double* row = in->row(i);
        std::copy(masked.begin(), masked.end(), row);
        for (std::size_t j = 0; j < p; ++j)
          row[e + j] = static_cast<double>(mask[j]);
        for (int k = 0; k < ds.n_classes; ++k)
          (*tg)(i, k) = prior_probs(r, k);
      }
      Matrix logits = model.net.forward_batch(*in, &cache);
      auto ce = nn::softmax_cross_entropy_batch(logits, *tg);
      epoch_total += ce.loss;
      batches++;
      nn::GradientTape tape = model.net.backward_batch(cache, ce.grad);
      model.net.sgd_step(tape, lr);
    }
    double epoch_mean = batches ? epoch_total / batches : 0.0;
    if (!std::isfinite(epoch_mean)) {
      model.net = nn::DenseNetwork::from_json(stable);
      throw SurrogateDivergence(
          "surrogate training diverged at epoch " + std::to_string(epoch) +
              " (non-finite loss); parameters restored to last stable epoch",
          stable);
    }
    stable = model.net.to_json();
    model.epoch_loss.push_back(epoch_mean);
  }
  model.val_loss = probe_loss(val_probe);
  return model;
}

double characteristic_value(const SurrogateModel& surr,
                            const std::vector<double>& x, int y,
                            const SubsetMask& s) {
  if (y < 0 || y >= surr.n_classes)
    throw std::invalid_argument("characteristic_value: class index " +
                                std::to_string(y) + " out of range");
  return surr.predict_proba(x, s)[y];
}

ValueFunction make_value_function(const SurrogateModel& surr,
                                  std::vector<double> x) {
  if (!surr.trained)
    throw std::runtime_error("surrogate not trained; call train_surrogate first");
  ValueFunction v;
  v.n_players = surr.n_players();
  v.n_outputs = static_cast<std::size_t>(surr.n_classes);
  // Copies keep the closure self-contained and thread-safe.
  v.eval = [surr, x](const SubsetMask& s) { return surr.predict_proba(x, s); };
  return v;
}

}  // namespace shapnn::shapley
