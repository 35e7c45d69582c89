#include "shapnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "shapnn/shapley.hpp"

namespace shapnn::model {

namespace {

void check_config(const ShapnnConfig& cfg) {
  if (cfg.backbone_hidden.empty())
    throw std::invalid_argument("ShapnnConfig: backbone_hidden must not be empty");
  for (std::size_t w : cfg.backbone_hidden)
    if (w == 0)
      throw std::invalid_argument("ShapnnConfig: backbone_hidden widths must be positive");
  for (std::size_t w : cfg.explainer_hidden)
    if (w == 0)
      throw std::invalid_argument("ShapnnConfig: explainer_hidden widths must be positive");
  if (!(cfg.lr > 0.0))
    throw std::invalid_argument("ShapnnConfig: lr must be positive, got " +
                                std::to_string(cfg.lr));
  if (cfg.batch_size < 1)
    throw std::invalid_argument("ShapnnConfig: batch_size must be at least 1, got " +
                                std::to_string(cfg.batch_size));
  if (cfg.max_epochs < 1)
    throw std::invalid_argument("ShapnnConfig: max_epochs must be at least 1, got " +
                                std::to_string(cfg.max_epochs));
  if (cfg.patience < 0)
    throw std::invalid_argument("ShapnnConfig: patience must be non-negative, got " +
                                std::to_string(cfg.patience));
  if (cfg.n_subsets < 1)
    throw std::invalid_argument("ShapnnConfig: n_subsets must be at least 1, got " +
                                std::to_string(cfg.n_subsets));
  if (cfg.shap_loss_weight < 0.0)
    throw std::invalid_argument("ShapnnConfig: shap_loss_weight must be non-negative, got " +
                                std::to_string(cfg.shap_loss_weight));
}

void check_ensemble_model(const SHAPNNModel& m, const PriorEnsemble& ensemble,
                          const std::string& where) {
  if (ensemble.size() == 0)
    throw std::invalid_argument(where + ": prior ensemble is empty");
  const shapley::SurrogateModel& first = ensemble.surrogates.front();
  if (first.n_players() != m.n_players)
    throw std::invalid_argument(where + ": ensemble has " +
                                std::to_string(first.n_players()) +
                                " players but the model expects " +
                                std::to_string(m.n_players));
  if (first.n_encoded() != m.n_encoded)
    throw std::invalid_argument(where + ": ensemble encodes " +
                                std::to_string(first.n_encoded()) +
                                " columns but the model expects " +
                                std::to_string(m.n_encoded));
  if (static_cast<std::size_t>(first.n_classes) != m.n_classes)
    throw std::invalid_argument(where + ": ensemble has " +
                                std::to_string(first.n_classes) +
                                " classes but the model expects " +
                                std::to_string(m.n_classes));
}

// Reshapes one explainer output row into the [n_players x n_classes] raw
// attribution matrix (phi(i, k) = row[i * K + k]).
Matrix reshape_phi(const double* row, std::size_t n_players, std::size_t k) {
  Matrix phi(n_players, k);
  std::copy(row, row + n_players * k, phi.a.begin());
  return phi;
}

// One batched pass through all three sub-networks. joint_step and
// predict_proba_batch both route through here, so the attribution matrices
// they observe are bit-identical for identical inputs and spans.
struct JointForward {
  nn::ForwardCache cache_backbone;
  nn::ForwardCache cache_explainer;
  nn::ForwardCache cache_head;
  Matrix rep;                   // [n x R]
  std::vector<Matrix> phi_eff;  // per row, [n_players x n_classes]
  Matrix z;                     // [n x (R + N*K)]
  Matrix logits;                // [n x K]
};

JointForward forward_joint(const SHAPNNModel& m, const Matrix& X,
                           const Matrix& v_full, const Matrix& v_empty,
                           bool want_cache) {
  if (X.cols != m.n_encoded)
    throw std::invalid_argument("forward_joint: input has " +
                                std::to_string(X.cols) +
                                " columns, model expects " +
                                std::to_string(m.n_encoded));
  if (v_full.rows != X.rows || v_full.cols != m.n_classes ||
      v_empty.rows != X.rows || v_empty.cols != m.n_classes)
    throw std::invalid_argument(
        "forward_joint: normalization spans must be [batch x n_classes]");

  const std::size_t n = X.rows;
  const std::size_t nk = m.n_players * m.n_classes;

  JointForward f;
  f.rep = m.backbone.forward_batch(X, want_cache ? &f.cache_backbone : nullptr);
  Matrix raw =
      m.explainer_head.forward_batch(X, want_cache ? &f.cache_explainer : nullptr);
  m.counters.backbone += n;
  m.counters.explainer += n;

  const std::size_t r = f.rep.cols;
  f.phi_eff.reserve(n);
  f.z = Matrix(n, r + nk);
  for (std::size_t b = 0; b < n; ++b) {
    Matrix phi = reshape_phi(raw.row(b), m.n_players, m.n_classes);
    phi = shapley::efficient_normalize(phi, v_full.row_vec(b), v_empty.row_vec(b));
    std::copy(f.rep.row(b), f.rep.row(b) + r, f.z.row(b));
    std::copy(phi.a.begin(), phi.a.end(), f.z.row(b) + r);
    f.phi_eff.push_back(std::move(phi));
  }

  f.logits = m.prediction_head.forward_batch(f.z, want_cache ? &f.cache_head : nullptr);
  m.counters.head += n;
  return f;
}

Matrix one_hot_targets(const std::vector<int>& y, std::size_t n_classes) {
  Matrix t(y.size(), n_classes);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0 || static_cast<std::size_t>(y[i]) >= n_classes)
      throw std::invalid_argument("fit: label " + std::to_string(y[i]) +
                                  " is outside [0, " + std::to_string(n_classes) +
                                  ")");
    t(i, static_cast<std::size_t>(y[i])) = 1.0;
  }
  return t;
}

// Shared early-stopping epoch loop bookkeeping.
struct EarlyStop {
  int patience = 0;
  int stale = 0;
  int best_epoch = 0;
  double best = -1.0;

  // Returns true when this epoch improved the tracked metric.
  bool observe(int epoch, double value) {
    if (value > best) {
      best = value;
      best_epoch = epoch;
      stale = 0;
      return true;
    }
    ++stale;
    return false;
  }

  bool should_stop() const { return patience > 0 && stale >= patience; }
};

}  // namespace

PriorEnsemble make_ensemble(std::vector<shapley::SurrogateModel> surrogates,
                            std::vector<double> weights) {
  if (surrogates.empty())
    throw std::invalid_argument("make_ensemble: need at least one surrogate");
  for (std::size_t i = 0; i < surrogates.size(); ++i) {
    const shapley::SurrogateModel& s = surrogates[i];
    if (!s.trained)
      throw std::invalid_argument("make_ensemble: surrogate " + std::to_string(i) +
                                  " has not been trained");
    if (s.n_players() != surrogates[0].n_players() ||
        s.n_encoded() != surrogates[0].n_encoded() ||
        s.n_classes != surrogates[0].n_classes)
      throw std::invalid_argument(
          "make_ensemble: surrogate " + std::to_string(i) +
          " disagrees with surrogate 0 on players, encoding, or classes");
  }
  if (weights.empty())
    weights.assign(surrogates.size(), 1.0 / static_cast<double>(surrogates.size()));
  if (weights.size() != surrogates.size())
    throw std::invalid_argument("make_ensemble: got " +
                                std::to_string(weights.size()) + " weights for " +
                                std::to_string(surrogates.size()) + " surrogates");
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0))
      throw std::invalid_argument("make_ensemble: weights must be positive");
    total += w;
  }
  for (double& w : weights) w /= total;
  return PriorEnsemble{std::move(surrogates), std::move(weights)};
}

void ensemble_span(const PriorEnsemble& ensemble, const Matrix& X,
                   Matrix& v_full, Matrix& v_empty) {
  if (ensemble.size() == 0)
    throw std::invalid_argument("ensemble_span: prior ensemble is empty");
  const std::size_t n_players = ensemble.surrogates.front().n_players();
  const std::vector<shapley::SubsetMask> full(X.rows,
                                              shapley::SubsetMask(n_players, 1));
  const std::vector<shapley::SubsetMask> empty(X.rows,
                                               shapley::SubsetMask(n_players, 0));
  v_full = Matrix();
  v_empty = Matrix();
  for (std::size_t m = 0; m < ensemble.size(); ++m) {
    Matrix pf = ensemble.surrogates[m].predict_proba_batch(X, full);
    Matrix pe = ensemble.surrogates[m].predict_proba_batch(X, empty);
    if (m == 0) {
      v_full = Matrix(pf.rows, pf.cols);
      v_empty = Matrix(pe.rows, pe.cols);
    }
    const double w = ensemble.weights[m];
    for (std::size_t i = 0; i < pf.a.size(); ++i) {
      v_full.a[i] += w * pf.a[i];
      v_empty.a[i] += w * pe.a[i];
    }
  }
}

SHAPNNModel build_shapnn(std::size_t n_encoded, std::size_t n_players,
                         std::size_t n_classes, const ShapnnConfig& cfg) {
  if (n_encoded == 0)
    throw std::invalid_argument("build_shapnn: n_encoded must be positive");
  if (n_players == 0)
    throw std::invalid_argument("build_shapnn: n_players must be positive");
  if (n_classes < 2)
    throw std::invalid_argument("build_shapnn: n_classes must be at least 2, got " +
                                std::to_string(n_classes));
  check_config(cfg);

  Rng root(cfg.seed);
  Rng rng_backbone = root.fork(21);
  Rng rng_explainer = root.fork(22);
  Rng rng_head = root.fork(23);

  SHAPNNModel m;
  m.n_encoded = n_encoded;
  m.n_players = n_players;
  m.n_classes = n_classes;

  // The backbone's final layer is the representation, so every layer is relu.
  std::vector<std::size_t> dims = {n_encoded};
  dims.insert(dims.end(), cfg.backbone_hidden.begin(), cfg.backbone_hidden.end());
  std::vector<nn::Activation> acts(cfg.backbone_hidden.size(),
                                   nn::Activation::kRelu);
  m.backbone = nn::DenseNetwork(dims, acts, rng_backbone);

  m.explainer_head = nn::DenseNetwork::mlp(n_encoded, cfg.explainer_hidden,
                                           n_players * n_classes, rng_explainer);

  const std::size_t head_in = cfg.backbone_hidden.back() + n_players * n_classes;
  m.prediction_head = nn::DenseNetwork({head_in, n_classes},
                                       {nn::Activation::kIdentity}, rng_head);
  return m;
}

ForwardExplainResult forward_explain(const SHAPNNModel& m,
                                     const std::vector<double>& x,
                                     const std::vector<double>& v_full,
                                     const std::vector<double>& v_empty) {
  if (x.size() != m.n_encoded)
    throw std::invalid_argument("forward_explain: input has " +
                                std::to_string(x.size()) +
                                " values, model expects " +
                                std::to_string(m.n_encoded));
  if (v_full.size() != m.n_classes || v_empty.size() != m.n_classes)
    throw std::invalid_argument(
        "forward_explain: normalization spans must have one entry per class");

  std::vector<double> rep = m.backbone.forward(x);
  std::vector<double> raw = m.explainer_head.forward(x);
  ++m.counters.backbone;
  ++m.counters.explainer;

  Matrix phi = reshape_phi(raw.data(), m.n_players, m.n_classes);
  phi = shapley::efficient_normalize(phi, v_full, v_empty);

  std::vector<double> z = rep;
  z.insert(z.end(), phi.a.begin(), phi.a.end());
  std::vector<double> logits = m.prediction_head.forward(z);
  ++m.counters.head;

  return ForwardExplainResult{nn::softmax(logits), std::move(phi)};
}

ForwardExplainResult forward_raw(const SHAPNNModel& m,
                                 const std::vector<double>& x) {
  if (x.size() != m.n_encoded)
    throw std::invalid_argument("forward_raw: input has " +
                                std::to_string(x.size()) +
                                " values, model expects " +
                                std::to_string(m.n_encoded));
  std::vector<double> rep = m.backbone.forward(x);
  std::vector<double> raw = m.explainer_head.forward(x);
  ++m.counters.backbone;
  ++m.counters.explainer;

  Matrix phi = reshape_phi(raw.data(), m.n_players, m.n_classes);
  std::vector<double> z = rep;
  z.insert(z.end(), phi.a.begin(), phi.a.end());
  std::vector<double> logits = m.prediction_head.forward(z);
  ++m.counters.head;

  return ForwardExplainResult{nn::softmax(logits), std::move(phi)};
}

Matrix predict_proba_batch(const SHAPNNModel& m, const Matrix& X,
                           const PriorEnsemble& ensemble,
                           std::vector<Matrix>* phi_out) {
  check_ensemble_model(m, ensemble, "predict_proba_batch");
  Matrix v_full, v_empty;
  ensemble_span(ensemble, X, v_full, v_empty);
  JointForward f = forward_joint(m, X, v_full, v_empty, /*want_cache=*/false);
  nn::softmax_rows_inplace(f.logits);
  if (phi_out != nullptr) *phi_out = std::move(f.phi_eff);
  return std::move(f.logits);
}

Matrix predict_raw_batch(const SHAPNNModel& m, const Matrix& X,
                         std::vector<Matrix>* phi_out) {
  if (X.cols != m.n_encoded)
    throw std::invalid_argument("predict_raw_batch: input has " +
                                std::to_string(X.cols) +
                                " columns, model expects " +
                                std::to_string(m.n_encoded));
  const std::size_t n = X.rows;
  const std::size_t nk = m.n_players * m.n_classes;

  Matrix rep = m.backbone.forward_batch(X);
  Matrix raw = m.explainer_head.forward_batch(X);
  m.counters.backbone += n;
  m.counters.explainer += n;

  const std::size_t r = rep.cols;
  Matrix z(n, r + nk);
  for (std::size_t b = 0; b < n; ++b) {
    std::copy(rep.row(b), rep.row(b) + r, z.row(b));
    std::copy(raw.row(b), raw.row(b) + nk, z.row(b) + r);
  }
  Matrix logits = m.prediction_head.forward_batch(z);
  m.counters.head += n;
  nn::softmax_rows_inplace(logits);

  if (phi_out != nullptr) {
    phi_out->clear();
    phi_out->reserve(n);
    for (std::size_t b = 0; b < n; ++b)
      phi_out->push_back(reshape_phi(raw.row(b), m.n_players, m.n_classes));
  }
  return logits;
}

CoalitionBatch sample_coalitions(const PriorEnsemble& ensemble, const Matrix& X,
                                 int n_subsets, Rng& rng) {
  if (ensemble.size() == 0)
    throw std::invalid_argument("sample_coalitions: prior ensemble is empty");
  if (n_subsets < 1)
    throw std::invalid_argument("sample_coalitions: n_subsets must be at least 1");
  if (X.rows == 0)
    throw std::invalid_argument("sample_coalitions: batch is empty");
  const std::size_t n_players = ensemble.surrogates.front().n_players();
  if (n_players < 2)
    throw std::invalid_argument(
        "sample_coalitions: kernel sampling needs at least 2 players");

  const std::size_t n = X.rows;
  const std::size_t s_count = static_cast<std::size_t>(n_subsets);

  CoalitionBatch cb;
  cb.masks.resize(n);
  for (std::size_t b = 0; b < n; ++b) {
    cb.masks[b].reserve(s_count);
    for (std::size_t j = 0; j < s_count; ++j)
      cb.masks[b].push_back(shapley::sample_subset(n_players, rng));
  }

  // One batched surrogate evaluation per prior: row b repeated once per
  // coalition, paired with that coalition's mask.
  Matrix x_rep(n * s_count, X.cols);
  std::vector<shapley::SubsetMask> flat_masks;
  flat_masks.reserve(n * s_count);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t j = 0; j < s_count; ++j) {
      std::copy(X.row(b), X.row(b) + X.cols, x_rep.row(b * s_count + j));
      flat_masks.push_back(cb.masks[b][j]);
    }
  }

  cb.values.resize(ensemble.size());
  cb.v_full.resize(ensemble.size());
  cb.v_empty.resize(ensemble.size());
  const std::vector<shapley::SubsetMask> full(n, shapley::SubsetMask(n_players, 1));
  const std::vector<shapley::SubsetMask> empty(n, shapley::SubsetMask(n_players, 0));
  for (std::size_t m = 0; m < ensemble.size(); ++m) {
    Matrix probs = ensemble.surrogates[m].predict_proba_batch(x_rep, flat_masks);
    cb.values[m].resize(n);
    for (std::size_t b = 0; b < n; ++b) {
      cb.values[m][b].resize(s_count);
      for (std::size_t j = 0; j < s_count; ++j)
        cb.values[m][b][j] = probs.row_vec(b * s_count + j);
    }
    cb.v_full[m] = ensemble.surrogates[m].predict_proba_batch(X, full);
    cb.v_empty[m] = ensemble.surrogates[m].predict_proba_batch(X, empty);
  }

  ensemble_span(ensemble, X, cb.v_full_mix, cb.v_empty_mix);
  return cb;
}

JointLossReport joint_step(SHAPNNModel& m, const Matrix& X,
                           const Matrix& targets,
                           const PriorEnsemble& ensemble,
                           const CoalitionBatch& coalitions,
                           const ShapnnConfig& cfg, bool apply_update) {
  check_config(cfg);
  check_ensemble_model(m, ensemble, "joint_step");
  if (X.rows == 0) throw std::invalid_argument("joint_step: batch is empty");
  if (targets.rows != X.rows || targets.cols != m.n_classes)
    throw std::invalid_argument("joint_step: targets must be [batch x n_classes]");
  if (coalitions.masks.size() != X.rows ||
      coalitions.values.size() != ensemble.size())
    throw std::invalid_argument(
        "joint_step: coalition batch does not match the input batch and ensemble");

  const std::size_t n = X.rows;
  const std::size_t n_players = m.n_players;
  const std::size_t k_classes = m.n_classes;
  const double inv_k = 1.0 / static_cast<double>(k_classes);
  const double inv_n = 1.0 / static_cast<double>(n);

  JointForward f = forward_joint(m, X, coalitions.v_full_mix,
                                 coalitions.v_empty_mix, /*want_cache=*/true);
  nn::CeBatchResult ce = nn::softmax_cross_entropy_batch(f.logits, targets);

  JointLossReport report;
  report.ce = ce.loss;
  report.weights = ensemble.weights;
  report.shap_loss_weight = cfg.shap_loss_weight;

  // Per-prior amortized-explainer loss: mean over samples of the per-sample
  // class-averaged additive-fit residual. The accumulation order here is the
  // reference order the unit tests reproduce term by term.
  double weighted_shap = 0.0;
  for (std::size_t p = 0; p < ensemble.size(); ++p) {
    double acc = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      double per_sample = 0.0;
      for (std::size_t k = 0; k < k_classes; ++k) {
        per_sample += shapley::fastshap_loss(f.phi_eff[b], coalitions.masks[b],
                                             coalitions.values[p][b],
                                             coalitions.v_empty[p].row_vec(b), k);
      }
      acc += per_sample * inv_k;
    }
    const double loss_p = acc * inv_n;
    report.fastshap.emplace_back(p, loss_p);
    weighted_shap += ensemble.weights[p] * loss_p;
  }
  report.total = cfg.shap_loss_weight * weighted_shap + ce.loss;

  if (!std::isfinite(report.total)) {
    std::string detail = "joint_step: non-finite loss (ce=" +
                         std::to_string(ce.loss);
    for (const auto& [p, loss_p] : report.fastshap)
      detail += ", prior" + std::to_string(p) + "=" + std::to_string(loss_p);
    detail += "); parameters left untouched";
    throw std::runtime_error(detail);
  }
  if (!apply_update) return report;

  // Backward. The head sees the CE gradient; the explainer sees the
  // additive-fit gradients plus (optionally) the CE gradient routed through
  // the concatenated attributions.
  const std::size_t r = f.rep.cols;
  Matrix d_z;
  nn::GradientTape tape_head =
      m.prediction_head.backward_batch(f.cache_head, ce.grad, &d_z);

  std::vector<Matrix> d_phi(n, Matrix(n_players, k_classes));
  if (cfg.ce_through_explainer) {
    for (std::size_t b = 0; b < n; ++b)
      std::copy(d_z.row(b) + r, d_z.row(b) + r + n_players * k_classes,
                d_phi[b].a.begin());
  }
  for (std::size_t p = 0; p < ensemble.size(); ++p) {
    const double scale = cfg.shap_loss_weight * ensemble.weights[p] * inv_n * inv_k;
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t k = 0; k < k_classes; ++k) {
        shapley::fastshap_loss_grad(f.phi_eff[b], coalitions.masks[b],
                                    coalitions.values[p][b],
                                    coalitions.v_empty[p].row_vec(b), k, scale,
                                    d_phi[b]);
      }
    }
  }

  // The normalization subtracts the column mean from every entry, so its
  // adjoint removes the column mean from the incoming gradient.
  Matrix d_raw(n, n_players * k_classes);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t k = 0; k < k_classes; ++k) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n_players; ++i) mean += d_phi[b](i, k);
      mean /= static_cast<double>(n_players);
      for (std::size_t i = 0; i < n_players; ++i)
        d_raw(b, i * k_classes + k) = d_phi[b](i, k) - mean;
    }
  }

  Matrix d_rep(n, r);
  for (std::size_t b = 0; b < n; ++b)
    std::copy(d_z.row(b), d_z.row(b) + r, d_rep.row(b));

  nn::GradientTape tape_explainer =
      m.explainer_head.backward_batch(f.cache_explainer, d_raw);
  nn::GradientTape tape_backbone =
      m.backbone.backward_batch(f.cache_backbone, d_rep);

  m.prediction_head.sgd_step(tape_head, cfg.lr);
  m.explainer_head.sgd_step(tape_explainer, cfg.lr);
  m.backbone.sgd_step(tape_backbone, cfg.lr);
  return report;
}

double joint_loss(const SHAPNNModel& m, const Matrix& X, const Matrix& targets,
                  const PriorEnsemble& ensemble,
                  const CoalitionBatch& coalitions, const ShapnnConfig& cfg) {
  SHAPNNModel probe = m;  // loss-only evaluation never touches parameters
  return joint_step(probe, X, targets, ensemble, coalitions, cfg,
                    /*apply_update=*/false)
      .total;
}

JointLossReport train_step(SHAPNNModel& m, const Matrix& X,
                           const Matrix& targets,
                           const PriorEnsemble& ensemble,
                           const ShapnnConfig& cfg, Rng& rng) {
  CoalitionBatch cb = sample_coalitions(ensemble, X, cfg.n_subsets, rng);
  return joint_step(m, X, targets, ensemble, cb, cfg, /*apply_update=*/true);
}

FitResult fit(SHAPNNModel& m, const data::EncodedDataset& train,
              const data::EncodedDataset& val, const PriorEnsemble& ensemble,
              const ShapnnConfig& cfg) {
  check_config(cfg);
  check_ensemble_model(m, ensemble, "fit");
  if (train.n() == 0) throw std::invalid_argument("fit: training split is empty");
  if (val.n() == 0) throw std::invalid_argument("fit: validation split is empty");
  if (train.n_encoded() != m.n_encoded || val.n_encoded() != m.n_encoded)
    throw std::invalid_argument("fit: dataset encoding does not match the model");
  if (static_cast<std::size_t>(train.n_classes) != m.n_classes)
    throw std::invalid_argument("fit: dataset has " +
                                std::to_string(train.n_classes) +
                                " classes, model expects " +
                                std::to_string(m.n_classes));

  const Matrix targets = one_hot_targets(train.y, m.n_classes);
  Rng root(cfg.seed);
  Rng order_rng = root.fork(31);
  Rng coalition_rng = root.fork(32);

  // patience == 0 requests a single calibration epoch with no early stopping.
  const int epochs = cfg.patience == 0 ? 1 : cfg.max_epochs;
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);

  FitResult result;
  EarlyStop stop;
  stop.patience = cfg.patience;
  SHAPNNModel best = m;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::vector<std::size_t> order = order_rng.permutation(train.n());
    double sum_total = 0.0, sum_ce = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t count = std::min(batch, order.size() - start);
      Matrix xb(count, train.n_encoded());
      Matrix tb(count, m.n_classes);
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t row = order[start + i];
        std::copy(train.X.row(row), train.X.row(row) + train.X.cols, xb.row(i));
        std::copy(targets.row(row), targets.row(row) + targets.cols, tb.row(i));
      }
      JointLossReport rep = train_step(m, xb, tb, ensemble, cfg, coalition_rng);
      sum_total += rep.total * static_cast<double>(count);
      sum_ce += rep.ce * static_cast<double>(count);
    }

    Matrix val_probs = predict_proba_batch(m, val.X, ensemble);
    FitEpoch fe;
    fe.epoch = epoch;
    fe.total = sum_total / static_cast<double>(train.n());
    fe.ce = sum_ce / static_cast<double>(train.n());
    fe.fastshap = fe.total - fe.ce;
    fe.val_auroc = metrics::auroc_hard(val_probs, val.y);
    result.history.push_back(fe);

    if (stop.observe(epoch, fe.val_auroc)) best = m;
    if (stop.should_stop()) break;
  }

  m = std::move(best);
  result.best_epoch = stop.best_epoch;
  result.best_val_auroc = stop.best;
  return result;
}

Matrix MlpModel::predict_proba_batch(const Matrix& X) const {
  Matrix logits = net.forward_batch(X);
  nn::softmax_rows_inplace(logits);
  return logits;
}

MlpFitResult train_mlp(const data::EncodedDataset& train,
                       const data::EncodedDataset& val, const MlpConfig& cfg) {
  if (!(cfg.lr > 0.0))
    throw std::invalid_argument("MlpConfig: lr must be positive");
  if (cfg.batch_size < 1 || cfg.max_epochs < 1 || cfg.patience < 0)
    throw std::invalid_argument(
        "MlpConfig: batch_size and max_epochs must be at least 1 and patience "
        "non-negative");
  if (train.n() == 0) throw std::invalid_argument("train_mlp: training split is empty");
  if (val.n() == 0) throw std::invalid_argument("train_mlp: validation split is empty");

  const std::size_t k_classes = static_cast<std::size_t>(train.n_classes);
  const Matrix targets = one_hot_targets(train.y, k_classes);
  Rng root(cfg.seed);
  Rng init_rng = root.fork(21);
  Rng order_rng = root.fork(31);

  MlpFitResult result;
  result.model.net =
      nn::DenseNetwork::mlp(train.n_encoded(), cfg.hidden, k_classes, init_rng);

  const int epochs = cfg.patience == 0 ? 1 : cfg.max_epochs;
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  EarlyStop stop;
  stop.patience = cfg.patience;
  nn::DenseNetwork best = result.model.net;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::vector<std::size_t> order = order_rng.permutation(train.n());
    double sum_ce = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t count = std::min(batch, order.size() - start);
      Matrix xb(count, train.n_encoded());
      Matrix tb(count, k_classes);
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t row = order[start + i];
        std::copy(train.X.row(row), train.X.row(row) + train.X.cols, xb.row(i));
        std::copy(targets.row(row), targets.row(row) + targets.cols, tb.row(i));
      }
      nn::ForwardCache cache;
      Matrix logits = result.model.net.forward_batch(xb, &cache);
      nn::CeBatchResult ce = nn::softmax_cross_entropy_batch(logits, tb);
      if (!std::isfinite(ce.loss))
        throw std::runtime_error("train_mlp: non-finite loss at epoch " +
                                 std::to_string(epoch));
      nn::GradientTape tape = result.model.net.backward_batch(cache, ce.grad);
      result.model.net.sgd_step(tape, cfg.lr);
      sum_ce += ce.loss * static_cast<double>(count);
    }

    Matrix val_probs = result.model.predict_proba_batch(val.X);
    FitEpoch fe;
    fe.epoch = epoch;
    fe.ce = sum_ce / static_cast<double>(train.n());
    fe.total = fe.ce;
    fe.val_auroc = metrics::auroc_hard(val_probs, val.y);
    result.history.push_back(fe);

    if (stop.observe(epoch, fe.val_auroc)) best = result.model.net;
    if (stop.should_stop()) break;
  }

  result.model.net = std::move(best);
  result.best_epoch = stop.best_epoch;
  result.best_val_auroc = stop.best;
  return result;
}

std::vector<PlayerAttribution> explain_sample(const SHAPNNModel& m,
                                              const std::vector<double>& x,
                                              const PriorEnsemble& ensemble) {
  check_ensemble_model(m, ensemble, "explain_sample");
  Matrix x1(1, x.size());
  x1.set_row(0, x);
  Matrix v_full, v_empty;
  ensemble_span(ensemble, x1, v_full, v_empty);
  ForwardExplainResult fr =
      forward_explain(m, x, v_full.row_vec(0), v_empty.row_vec(0));

  const int cls = static_cast<int>(
      std::max_element(fr.probs.begin(), fr.probs.end()) - fr.probs.begin());
  std::vector<PlayerAttribution> out;
  out.reserve(m.n_players);
  for (std::size_t i = 0; i < m.n_players; ++i) {
    PlayerAttribution pa;
    pa.player = i;
    pa.name = i < m.player_names.size() ? m.player_names[i]
                                        : "player_" + std::to_string(i);
    pa.cls = cls;
    pa.phi = fr.phi_eff(i, static_cast<std::size_t>(cls));
    pa.polarity = pa.phi > 0.0 ? 1 : (pa.phi < 0.0 ? -1 : 0);
    out.push_back(std::move(pa));
  }
  std::sort(out.begin(), out.end(),
            [](const PlayerAttribution& a, const PlayerAttribution& b) {
              const double fa = std::fabs(a.phi), fb = std::fabs(b.phi);
              if (fa != fb) return fa > fb;
              return a.player < b.player;
            });
  return out;
}

PopulationSummary explain_population(const SHAPNNModel& m,
                                     const data::EncodedDataset& ds,
                                     const PriorEnsemble& ensemble) {
  check_ensemble_model(m, ensemble, "explain_population");
  if (ds.n() == 0)
    throw std::invalid_argument("explain_population: dataset is empty");
  if (ds.n_players() != m.n_players)
    throw std::invalid_argument("explain_population: dataset has " +
                                std::to_string(ds.n_players()) +
                                " players, model expects " +
                                std::to_string(m.n_players));

  std::vector<Matrix> phis;
  Matrix probs = predict_proba_batch(m, ds.X, ensemble, &phis);
  std::vector<int> preds = metrics::argmax_rows(probs);

  PopulationSummary summary;
  summary.mean_abs_phi.assign(m.n_players, 0.0);
  summary.points.reserve(ds.n() * m.n_players);
  const double inv_n = 1.0 / static_cast<double>(ds.n());
  for (std::size_t s = 0; s < ds.n(); ++s) {
    const std::size_t cls = static_cast<std::size_t>(preds[s]);
    for (std::size_t i = 0; i < m.n_players; ++i) {
      const double phi = phis[s](i, cls);
      summary.mean_abs_phi[i] += std::fabs(phi) * inv_n;

      const data::PlayerGroup& group = ds.players[i];
      double value = 0.0;
      if (group.encoded_cols.size() == 1) {
        value = ds.X(s, group.encoded_cols[0]);
      } else {
        // One-hot group: report the index of the active indicator.
        std::size_t hot = 0;
        double best = ds.X(s, group.encoded_cols[0]);
        for (std::size_t c = 1; c < group.encoded_cols.size(); ++c) {
          if (ds.X(s, group.encoded_cols[c]) > best) {
            best = ds.X(s, group.encoded_cols[c]);
            hot = c;
          }
        }
        value = static_cast<double>(hot);
      }
      summary.points.push_back(PopulationPoint{s, i, value, phi});
    }
  }
  return summary;
}

nlohmann::json SHAPNNModel::to_json() const {
  return nlohmann::json{{"format", "shapnn-model-v1"},
                        {"n_encoded", n_encoded},
                        {"n_players", n_players},
                        {"n_classes", n_classes},
                        {"player_names", player_names},
                        {"backbone", backbone.to_json()},
                        {"explainer_head", explainer_head.to_json()},
                        {"prediction_head", prediction_head.to_json()}};
}

SHAPNNModel SHAPNNModel::from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != "shapnn-model-v1")
    throw std::runtime_error("SHAPNNModel::from_json: not a shapnn-model-v1 object");
  SHAPNNModel m;
  m.n_encoded = j.at("n_encoded").get<std::size_t>();
  m.n_players = j.at("n_players").get<std::size_t>();
  m.n_classes = j.at("n_classes").get<std::size_t>();
  m.player_names = j.at("player_names").get<std::vector<std::string>>();
  m.backbone = nn::DenseNetwork::from_json(j.at("backbone"));
  m.explainer_head = nn::DenseNetwork::from_json(j.at("explainer_head"));
  m.prediction_head = nn::DenseNetwork::from_json(j.at("prediction_head"));
  return m;
}

}  // namespace shapnn::model
