#pragma once
// The joint predictor/explainer: a backbone MLP runs in parallel with an
// explainer head that emits a per-player, per-class attribution matrix; the
// normalized attributions are concatenated onto the backbone representation
// and projected to class logits. One forward pass yields both the prediction
// and its explanation. Training combines cross-entropy with per-prior
// amortized-explainer regression losses weighted by the prior ensemble.
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "shapnn/data.hpp"
#include "shapnn/metrics.hpp"
#include "shapnn/nn.hpp"
#include "shapnn/surrogate.hpp"

namespace shapnn::model {

struct ShapnnConfig {
  std::vector<std::size_t> backbone_hidden = {512, 512, 512};
  std::vector<std::size_t> explainer_hidden = {512};  // one hidden layer
  double lr = 0.05;
  int batch_size = 32;
  int max_epochs = 60;
  int patience = 16;     // non-improving epochs tolerated; 0 = single epoch
  int n_subsets = 8;     // coalitions per sample for the explainer loss
  double shap_loss_weight = 1.0;  // multiplier on the summed explainer losses
  bool ce_through_explainer = true;  // let CE gradients reach the explainer
  std::uint64_t seed = 0;
};

// Weighted collection of masking surrogates acting as supervision priors.
struct PriorEnsemble {
  std::vector<shapley::SurrogateModel> surrogates;
  std::vector<double> weights;  // normalized to sum 1

  std::size_t size() const { return surrogates.size(); }
};

// Weights default to uniform; they are normalized and must be positive.
PriorEnsemble make_ensemble(std::vector<shapley::SurrogateModel> surrogates,
                            std::vector<double> weights = {});

// Ensemble-weighted v(full)/v(empty) per class for each row of X.
void ensemble_span(const PriorEnsemble& ensemble, const Matrix& X,
                   Matrix& v_full, Matrix& v_empty);

struct EvalCounters {
  std::size_t backbone = 0;
  std::size_t explainer = 0;
  std::size_t head = 0;
};

struct SHAPNNModel {
  nn::DenseNetwork backbone;         // encoded features -> representation
  nn::DenseNetwork explainer_head;   // encoded features -> N*K attributions
  nn::DenseNetwork prediction_head;  // [representation ; phi_eff] -> logits
  std::size_t n_encoded = 0;
  std::size_t n_players = 0;
  std::size_t n_classes = 0;
  std::vector<std::string> player_names;  // optional; "player_i" fallback
  mutable EvalCounters counters;

  nlohmann::json to_json() const;
  static SHAPNNModel from_json(const nlohmann::json& j);
};

SHAPNNModel build_shapnn(std::size_t n_encoded, std::size_t n_players,
                         std::size_t n_classes, const ShapnnConfig& cfg);

// Single forward pass: probabilities plus the Eq.-4-normalized attribution
// matrix [n_players x n_classes]. Each sub-network is evaluated exactly once
// (see counters).
struct ForwardExplainResult {
  std::vector<double> probs;
  Matrix phi_eff;
};
ForwardExplainResult forward_explain(const SHAPNNModel& m,
                                     const std::vector<double>& x,
                                     const std::vector<double>& v_full,
                                     const std::vector<double>& v_empty);

// Streaming variant: no surrogate exists, so the attribution matrix is used
// raw (no additive normalization).
ForwardExplainResult forward_raw(const SHAPNNModel& m,
                                 const std::vector<double>& x);

// Class probabilities for every row; normalization spans come from the
// ensemble. Pass phi_out to collect the per-row attribution matrices too.
Matrix predict_proba_batch(const SHAPNNModel& m, const Matrix& X,
                           const PriorEnsemble& ensemble,
                           std::vector<Matrix>* phi_out = nullptr);

// Batched streaming-mode forward: raw attributions, no normalization spans.
Matrix predict_raw_batch(const SHAPNNModel& m, const Matrix& X,
                         std::vector<Matrix>* phi_out = nullptr);

// Precomputed coalition supervision for one batch: masks are shared across
// priors; values/spans are evaluated per prior.
struct CoalitionBatch {
  std::vector<std::vector<shapley::SubsetMask>> masks;  // [sample][subset]
  // values[m][sample][subset] is a K-vector of the prior-m surrogate.
  std::vector<std::vector<std::vector<std::vector<double>>>> values;
  std::vector<Matrix> v_full;   // per prior, [batch x K]
  std::vector<Matrix> v_empty;  // per prior, [batch x K]
  Matrix v_full_mix;            // ensemble-weighted spans, [batch x K]
  Matrix v_empty_mix;
};
CoalitionBatch sample_coalitions(const PriorEnsemble& ensemble, const Matrix& X,
                                 int n_subsets, Rng& rng);

struct JointLossReport {
  double total = 0.0;
  double ce = 0.0;
  std::vector<std::pair<std::size_t, double>> fastshap;  // (prior id, loss)
  std::vector<double> weights;                           // ensemble weights
  double shap_loss_weight = 1.0;
};

// Joint loss (and optionally one SGD step) on a batch with fixed coalition
// supervision. Targets are per-row distributions. Aborts without updating
// parameters when the loss is non-finite.
JointLossReport joint_step(SHAPNNModel& m, const Matrix& X,
                           const Matrix& targets,
                           const PriorEnsemble& ensemble,
                           const CoalitionBatch& coalitions,
                           const ShapnnConfig& cfg, bool apply_update);

// Loss-only evaluation with fixed coalitions (finite-difference support).
double joint_loss(const SHAPNNModel& m, const Matrix& X, const Matrix& targets,
                  const PriorEnsemble& ensemble,
                  const CoalitionBatch& coalitions, const ShapnnConfig& cfg);

// Samples coalitions and takes one optimization step.
JointLossReport train_step(SHAPNNModel& m, const Matrix& X,
                           const Matrix& targets,
                           const PriorEnsemble& ensemble,
                           const ShapnnConfig& cfg, Rng& rng);

struct FitEpoch {
  int epoch = 0;
  double total = 0.0;
  double ce = 0.0;
  double fastshap = 0.0;  // weighted sum over priors
  double val_auroc = 0.0;
};

struct FitResult {
  std::vector<FitEpoch> history;
  int best_epoch = 0;
  double best_val_auroc = 0.0;
};

// Epoch loop with early stopping on validation AUROC; the best-validation
// parameters are restored before returning.
FitResult fit(SHAPNNModel& m, const data::EncodedDataset& train,
              const data::EncodedDataset& val, const PriorEnsemble& ensemble,
              const ShapnnConfig& cfg);

// Plain MLP baseline sharing the backbone recipe (CE only, same early
// stopping protocol).
struct MlpConfig {
  std::vector<std::size_t> hidden = {512, 512, 512};
  double lr = 0.05;
  int batch_size = 32;
  int max_epochs = 60;
  int patience = 16;
  std::uint64_t seed = 0;
};

struct MlpModel {
  nn::DenseNetwork net;

  Matrix predict_proba_batch(const Matrix& X) const;
};

struct MlpFitResult {
  MlpModel model;
  std::vector<FitEpoch> history;  // fastshap stays 0
  int best_epoch = 0;
  double best_val_auroc = 0.0;
};

MlpFitResult train_mlp(const data::EncodedDataset& train,
                       const data::EncodedDataset& val, const MlpConfig& cfg);

// Per-player attribution for the predicted class, sorted by |phi| with ties
// broken by player index.
struct PlayerAttribution {
  std::size_t player = 0;
  std::string name;
  int cls = 0;
  double phi = 0.0;
  int polarity = 0;  // sign of phi
};
std::vector<PlayerAttribution> explain_sample(const SHAPNNModel& m,
                                              const std::vector<double>& x,
                                              const PriorEnsemble& ensemble);

// Population-level view: mean |phi| per player over predicted classes plus
// the raw (feature value, phi) pairs needed for beeswarm-style exports.
struct PopulationPoint {
  std::size_t sample = 0;
  std::size_t player = 0;
  double feature_value = 0.0;  // encoded value; one-hot groups use the hot index
  double phi = 0.0;
};
struct PopulationSummary {
  std::vector<double> mean_abs_phi;  // per player
  std::vector<PopulationPoint> points;
};
PopulationSummary explain_population(const SHAPNNModel& m,
                                     const data::EncodedDataset& ds,
                                     const PriorEnsemble& ensemble);

}  // namespace shapnn::model
