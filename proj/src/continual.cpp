#include "shapnn/continual.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "shapnn/metrics.hpp"
#include "shapnn/shapley.hpp"

namespace shapnn::continual {

namespace {

void check_config(const ContinualConfig& cfg) {
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0))
    throw std::invalid_argument("ContinualConfig: alpha must lie in [0, 1], got " +
                                std::to_string(cfg.alpha));
  if (!(cfg.rho > 0.0 && cfg.rho <= 1.0))
    throw std::invalid_argument("ContinualConfig: rho must lie in (0, 1], got " +
                                std::to_string(cfg.rho));
  if (!(cfg.lr > 0.0))
    throw std::invalid_argument("ContinualConfig: lr must be positive");
  if (cfg.batch_size < 1)
    throw std::invalid_argument("ContinualConfig: batch_size must be at least 1");
  if (cfg.update_epochs < 1)
    throw std::invalid_argument("ContinualConfig: update_epochs must be at least 1");
  if (cfg.n_subsets < 1)
    throw std::invalid_argument("ContinualConfig: n_subsets must be at least 1");
  if (cfg.retention_weight < 0.0)
    throw std::invalid_argument("ContinualConfig: retention_weight must be non-negative");
  if (cfg.history_cap < 1)
    throw std::invalid_argument("ContinualConfig: history_cap must be at least 1");
  if (!(cfg.input_scale > 0.0))
    throw std::invalid_argument("ContinualConfig: input_scale must be positive");
}

Matrix scale_inputs(const Matrix& X, double scale) {
  Matrix out = X;
  if (scale != 1.0)
    for (double& v : out.a) v /= scale;
  return out;
}

Matrix one_hot(const std::vector<int>& y, std::size_t n_classes,
               const std::string& where) {
  Matrix t(y.size(), n_classes);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0 || static_cast<std::size_t>(y[i]) >= n_classes)
      throw std::invalid_argument(where + ": label " + std::to_string(y[i]) +
                                  " is outside [0, " + std::to_string(n_classes) +
                                  ")");
    t(i, static_cast<std::size_t>(y[i])) = 1.0;
  }
  return t;
}

// Soft AUROC, or NaN when the batch holds a single class.
double safe_auroc(const Matrix& probs, const std::vector<int>& y) {
  try {
    return metrics::auroc_ovr(probs, y);
  } catch (const std::invalid_argument&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

Matrix reshape_row(const double* row, std::size_t n_players, std::size_t k) {
  Matrix phi(n_players, k);
  std::copy(row, row + n_players * k, phi.a.begin());
  return phi;
}

}  // namespace

std::vector<double> mixup_pseudo_label(
    const std::vector<double>& y_true,
    const std::vector<std::vector<double>>& past_preds, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("mixup_pseudo_label: alpha must lie in [0, 1], got " +
                                std::to_string(alpha));
  if (past_preds.empty()) return y_true;

  const std::size_t k = y_true.size();
  std::vector<double> mean(k, 0.0);
  for (const auto& p : past_preds) {
    if (p.size() != k)
      throw std::invalid_argument("mixup_pseudo_label: past prediction has " +
                                  std::to_string(p.size()) + " entries, expected " +
                                  std::to_string(k));
    for (std::size_t j = 0; j < k; ++j) mean[j] += p[j];
  }
  const double inv = 1.0 / static_cast<double>(past_preds.size());
  std::vector<double> out(k);
  for (std::size_t j = 0; j < k; ++j)
    out[j] = alpha * y_true[j] + (1.0 - alpha) * (mean[j] * inv);
  return out;
}

std::vector<double> discount_schedule(int t, double rho) {
  if (t < 2)
    throw std::invalid_argument("discount_schedule: t must be at least 2, got " +
                                std::to_string(t));
  if (!(rho > 0.0 && rho <= 1.0))
    throw std::invalid_argument("discount_schedule: rho must lie in (0, 1], got " +
                                std::to_string(rho));
  const int n = t - 1;
  std::vector<double> w(static_cast<std::size_t>(n));
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    w[static_cast<std::size_t>(i)] = std::pow(rho, n - 1 - i);
    total += w[static_cast<std::size_t>(i)];
  }
  for (double& v : w) v /= total;
  return w;
}

ContinualConfig vanilla_variant(ContinualConfig cfg) {
  cfg.alpha = 1.0;
  cfg.retention_weight = 0.0;
  return cfg;
}

ContinualConfig stream_preset(data::StreamKind kind) {
  ContinualConfig cfg;
  cfg.history_cap = 50;
  cfg.input_scale = data::stream_input_scale(kind);
  cfg.alpha = 0.6;
  cfg.update_epochs = kind == data::StreamKind::kSTA ? 5 : 8;
  return cfg;
}

ContinualState init_continual(const ContinualConfig& cfg, std::size_t n_encoded,
                              std::size_t n_classes) {
  check_config(cfg);
  if (n_encoded < 2)
    throw std::invalid_argument(
        "init_continual: need at least 2 feature columns, got " +
        std::to_string(n_encoded));
  if (n_classes < 2)
    throw std::invalid_argument("init_continual: n_classes must be at least 2, got " +
                                std::to_string(n_classes));

  model::ShapnnConfig mc;
  mc.backbone_hidden = cfg.backbone_hidden;
  mc.explainer_hidden = cfg.explainer_hidden;
  mc.lr = cfg.lr;
  mc.batch_size = cfg.batch_size;
  mc.n_subsets = cfg.n_subsets;
  mc.seed = cfg.seed;

  ContinualState state;
  state.cfg = cfg;
  state.n_classes = n_classes;
  // One player per stream column; no masking surrogate exists here, so the
  // raw (unnormalized) forward path is used throughout.
  state.net = model::build_shapnn(n_encoded, n_encoded, n_classes, mc);
  state.rng = Rng(cfg.seed).fork(41);
  return state;
}

StepRecord continual_step(ContinualState& state, const data::StreamBatch& batch,
                          int epochs) {
  const ContinualConfig& cfg = state.cfg;
  if (epochs < 1)
    throw std::invalid_argument("continual_step: epochs must be at least 1, got " +
                                std::to_string(epochs));
  if (batch.X.rows == 0)
    throw std::invalid_argument("continual_step: batch is empty");
  if (batch.X.rows != batch.y.size())
    throw std::invalid_argument("continual_step: batch has " +
                                std::to_string(batch.X.rows) + " rows but " +
                                std::to_string(batch.y.size()) + " labels");
  if (batch.X.cols != state.net.n_encoded)
    throw std::invalid_argument("continual_step: batch has " +
                                std::to_string(batch.X.cols) +
                                " columns, model expects " +
                                std::to_string(state.net.n_encoded));

  const std::size_t n = batch.X.rows;
  const std::size_t n_players = state.net.n_players;
  const std::size_t k_classes = state.net.n_classes;
  const Matrix X = scale_inputs(batch.X, cfg.input_scale);

  StepRecord rec;
  rec.t = state.t;
  rec.concept_id = batch.concept_id;

  // (1) Forward prediction with the step-(t-1) model, before any training.
  if (state.t >= 1)
    rec.forward_auroc = safe_auroc(model::predict_raw_batch(state.net, X), batch.y);

  // (2) Pseudo-labels from frozen past predictors, and the frozen attribution
  // targets for the retention loss. Nothing here reads historical rows.
  const std::size_t h = state.history.size();
  const bool retention_active = cfg.retention_weight > 0.0 && h > 0;
  const bool need_past = h > 0 && (cfg.alpha < 1.0 || retention_active);

  std::vector<Matrix> past_probs(h);
  std::vector<std::vector<Matrix>> past_phi(h);
  std::vector<std::vector<int>> past_cls(h);
  if (need_past) {
    for (std::size_t i = 0; i < h; ++i) {
      past_probs[i] = model::predict_raw_batch(
          state.history[i].net, X, retention_active ? &past_phi[i] : nullptr);
      if (retention_active) past_cls[i] = metrics::argmax_rows(past_probs[i]);
    }
  }

  Matrix pseudo = one_hot(batch.y, k_classes, "continual_step");
  if (need_past) {
    std::vector<std::vector<double>> preds(h);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t i = 0; i < h; ++i) preds[i] = past_probs[i].row_vec(b);
      pseudo.set_row(b, mixup_pseudo_label(pseudo.row_vec(b), preds, cfg.alpha));
    }
  }

  // (3) Fine-tune on this batch only.
  const std::size_t minibatch = static_cast<std::size_t>(cfg.batch_size);
  const std::vector<double> zeros_k(k_classes, 0.0);
  std::vector<std::vector<double>> values(
      static_cast<std::size_t>(cfg.n_subsets), std::vector<double>(k_classes, 0.0));
  double sum_ce = 0.0, sum_ret = 0.0;
  std::size_t rows_seen = 0;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::vector<std::size_t> order = state.rng.permutation(n);
    for (std::size_t start = 0; start < n; start += minibatch) {
      const std::size_t nb = std::min(minibatch, n - start);
      Matrix xb(nb, X.cols);
      Matrix tb(nb, k_classes);
      for (std::size_t r = 0; r < nb; ++r) {
        const std::size_t row = order[start + r];
        std::copy(X.row(row), X.row(row) + X.cols, xb.row(r));
        std::copy(pseudo.row(row), pseudo.row(row) + k_classes, tb.row(r));
      }

      nn::ForwardCache cache_backbone, cache_explainer, cache_head;
      Matrix rep = state.net.backbone.forward_batch(xb, &cache_backbone);
      Matrix raw = state.net.explainer_head.forward_batch(xb, &cache_explainer);
      const std::size_t r_dim = rep.cols;
      Matrix z(nb, r_dim + n_players * k_classes);
      for (std::size_t r = 0; r < nb; ++r) {
        std::copy(rep.row(r), rep.row(r) + r_dim, z.row(r));
        std::copy(raw.row(r), raw.row(r) + n_players * k_classes, z.row(r) + r_dim);
      }
      Matrix logits = state.net.prediction_head.forward_batch(z, &cache_head);
      nn::CeBatchResult ce = nn::softmax_cross_entropy_batch(logits, tb);

      // Retention: regress the current attributions toward each frozen
      // explainer's additive game on this input, discounted by lambda.
      double ret_term = 0.0;
      std::vector<Matrix> d_phi;
      if (retention_active) {
        d_phi.assign(nb, Matrix(n_players, k_classes));
        std::vector<std::vector<shapley::SubsetMask>> masks(nb);
        std::vector<Matrix> phi_now;
        phi_now.reserve(nb);
        for (std::size_t r = 0; r < nb; ++r) {
          for (int s = 0; s < cfg.n_subsets; ++s)
            masks[r].push_back(shapley::sample_subset(n_players, state.rng));
          phi_now.push_back(reshape_row(raw.row(r), n_players, k_classes));
        }
        for (std::size_t i = 0; i < h; ++i) {
          double acc = 0.0;
          for (std::size_t r = 0; r < nb; ++r) {
            const std::size_t row = order[start + r];
            const std::size_t c = static_cast<std::size_t>(past_cls[i][row]);
            const Matrix& phi_old = past_phi[i][row];
            for (std::size_t s = 0; s < masks[r].size(); ++s) {
              double target = 0.0;
              for (std::size_t j = 0; j < n_players; ++j)
                if (masks[r][s][j]) target += phi_old(j, c);
              values[s][c] = target;
            }
            acc += shapley::fastshap_loss(phi_now[r], masks[r], values, zeros_k, c);
            shapley::fastshap_loss_grad(
                phi_now[r], masks[r], values, zeros_k, c,
                cfg.retention_weight * state.lambda[i] / static_cast<double>(nb),
                d_phi[r]);
          }
          ret_term += state.lambda[i] * (acc / static_cast<double>(nb));
        }
      }

      const double weighted_ret = cfg.retention_weight * ret_term;
      const double total = ce.loss + weighted_ret;
      if (!std::isfinite(total))
        throw std::runtime_error("continual_step: non-finite loss at step " +
                                 std::to_string(state.t) + " (ce=" +
                                 std::to_string(ce.loss) + ", retention=" +
                                 std::to_string(weighted_ret) + ")");

      Matrix d_z;
      nn::GradientTape tape_head =
          state.net.prediction_head.backward_batch(cache_head, ce.grad, &d_z);
      Matrix d_raw(nb, n_players * k_classes);
      Matrix d_rep(nb, r_dim);
      for (std::size_t r = 0; r < nb; ++r) {
        std::copy(d_z.row(r), d_z.row(r) + r_dim, d_rep.row(r));
        std::copy(d_z.row(r) + r_dim, d_z.row(r) + r_dim + n_players * k_classes,
                  d_raw.row(r));
        if (retention_active)
          for (std::size_t idx = 0; idx < n_players * k_classes; ++idx)
            d_raw(r, idx) += d_phi[r].a[idx];
      }
      nn::GradientTape tape_explainer =
          state.net.explainer_head.backward_batch(cache_explainer, d_raw);
      nn::GradientTape tape_backbone =
          state.net.backbone.backward_batch(cache_backbone, d_rep);
      state.net.prediction_head.sgd_step(tape_head, cfg.lr);
      state.net.explainer_head.sgd_step(tape_explainer, cfg.lr);
      state.net.backbone.sgd_step(tape_backbone, cfg.lr);

      sum_ce += ce.loss * static_cast<double>(nb);
      sum_ret += weighted_ret * static_cast<double>(nb);
      rows_seen += nb;
    }
  }
  rec.ce = sum_ce / static_cast<double>(rows_seen);
  rec.retention = sum_ret / static_cast<double>(rows_seen);

  // (4) Freeze and retain this step's model; (5) advance.
  state.history.push_back(RetainedArtifact{state.t, state.net});
  if (state.history.size() > cfg.history_cap)
    state.history.erase(state.history.begin());
  state.lambda =
      discount_schedule(static_cast<int>(state.history.size()) + 1, cfg.rho);
  ++state.t;
  return rec;
}

RetrospectiveResult retrospective_eval(const ContinualState& state,
                                       const std::vector<data::StreamBatch>& history) {
  if (state.t < 2)
    throw std::invalid_argument(
        "retrospective_eval: needs at least two consumed steps, have " +
        std::to_string(state.t));
  if (history.empty())
    throw std::invalid_argument("retrospective_eval: no past batches given");

  RetrospectiveResult result;
  double sum = 0.0;
  std::size_t finite = 0;
  for (const auto& batch : history) {
    const Matrix X = scale_inputs(batch.X, state.cfg.input_scale);
    const double a = safe_auroc(model::predict_raw_batch(state.net, X), batch.y);
    result.per_step.push_back(a);
    if (std::isfinite(a)) {
      sum += a;
      ++finite;
    }
  }
  if (finite > 0) result.mean = sum / static_cast<double>(finite);
  return result;
}

StreamRunResult run_stream(const std::vector<data::StreamBatch>& batches,
                           const ContinualConfig& cfg,
                           const std::vector<int>& retro_checkpoints) {
  if (batches.empty())
    throw std::invalid_argument("run_stream: stream is empty");
  for (int c : retro_checkpoints)
    if (c < 2 || static_cast<std::size_t>(c) > batches.size())
      throw std::invalid_argument(
          "run_stream: retrospective checkpoints must lie in [2, stream length]");

  int max_label = 0;
  for (const auto& b : batches) {
    if (b.X.cols != batches.front().X.cols)
      throw std::invalid_argument("run_stream: batches disagree on column count");
    for (int label : b.y) max_label = std::max(max_label, label);
  }
  const std::size_t n_classes = static_cast<std::size_t>(max_label) + 1;
  if (n_classes < 2)
    throw std::invalid_argument("run_stream: stream labels hold a single class");

  StreamRunResult result{
      {}, std::numeric_limits<double>::quiet_NaN(),
      std::numeric_limits<double>::quiet_NaN(), {},
      init_continual(cfg, batches.front().X.cols, n_classes)};

  for (std::size_t i = 0; i < batches.size(); ++i) {
    StepRecord rec = continual_step(result.state, batches[i], cfg.update_epochs);
    const int consumed = result.state.t;
    if (std::find(retro_checkpoints.begin(), retro_checkpoints.end(), consumed) !=
        retro_checkpoints.end()) {
      const std::vector<data::StreamBatch> prefix(batches.begin(),
                                                  batches.begin() + consumed);
      rec.retro_auroc = retrospective_eval(result.state, prefix).mean;
      result.retro[consumed] = rec.retro_auroc;
    }
    result.steps.push_back(rec);
  }

  double sum = 0.0, sum_sq = 0.0;
  std::size_t finite = 0;
  for (const auto& rec : result.steps) {
    if (std::isfinite(rec.forward_auroc)) {
      sum += rec.forward_auroc;
      sum_sq += rec.forward_auroc * rec.forward_auroc;
      ++finite;
    }
  }
  if (finite > 0) {
    result.mean_forward = sum / static_cast<double>(finite);
    const double var =
        sum_sq / static_cast<double>(finite) - result.mean_forward * result.mean_forward;
    result.std_forward = std::sqrt(std::max(0.0, var));
  }
  return result;
}

OnlineAdaptationResult online_adaptation_eval(
    const std::vector<data::StreamBatch>& batches, const ContinualConfig& cfg,
    const std::vector<int>& retro_checkpoints) {
  if (batches.size() < 2)
    throw std::invalid_argument(
        "online_adaptation_eval: need a stream of at least 2 batches");
  OnlineAdaptationResult result{
      run_stream(batches, cfg, retro_checkpoints),
      run_stream(batches, vanilla_variant(cfg), retro_checkpoints)};
  return result;
}

}  // namespace shapnn::continual
