#pragma once
// Streaming continual-learning harness: per-step fine-tuning on the newest
// batch only, with mixup pseudo-labels from frozen past predictors and a
// discounted attribution-retention loss against frozen past explainers. No
// historical rows are ever replayed; knowledge persists only through the
// retained model copies.
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <vector>

#include "shapnn/model.hpp"
#include "shapnn/stream.hpp"

namespace shapnn::continual {

// Pseudo-label: alpha * y + (1 - alpha) * mean(past_preds); y itself when no
// past predictions exist. Inputs are distributions, so the output is one.
std::vector<double> mixup_pseudo_label(
    const std::vector<double>& y_true,
    const std::vector<std::vector<double>>& past_preds, double alpha);

// Geometric discount over the t-1 past steps: weight of step i proportional
// to rho^(t-1-i), normalized to sum 1 (recent steps weighted most).
std::vector<double> discount_schedule(int t, double rho);

struct ContinualConfig {
  std::vector<std::size_t> backbone_hidden = {256, 256};
  std::vector<std::size_t> explainer_hidden = {256};
  double lr = 0.4;
  int batch_size = 32;   // minibatch within a step's update epochs
  int update_epochs = 5;
  int n_subsets = 8;     // coalition draws per sample for retention terms
  double alpha = 0.6;    // mixup weight on the true label
  double rho = 0.5;      // discount decay across retained steps
  // Weight on the retention sum; 0 disables it entirely. The term is an
  // unbounded quadratic (unlike cross-entropy, whose gradients saturate), so
  // at lr 0.4 weights much above ~0.3 push plain SGD out of its stable
  // region and the run diverges.
  double retention_weight = 0.1;
  std::size_t history_cap = 10;   // retained artifacts; oldest dropped beyond
  double input_scale = 1.0;       // features are divided by this
  std::uint64_t seed = 0;
};

// The identical protocol minus every Shapley term: pseudo-labels collapse to
// the true labels and no retention loss is computed.
ContinualConfig vanilla_variant(ContinualConfig cfg);

// Calibrated per-stream presets (the STAGGER-style stream needs fewer
// per-step epochs than the threshold streams).
ContinualConfig stream_preset(data::StreamKind kind);

// A frozen copy of the model as it stood after training on one step.
struct RetainedArtifact {
  int step = 0;
  model::SHAPNNModel net;
};

struct ContinualState {
  ContinualConfig cfg;
  std::size_t n_classes = 0;
  model::SHAPNNModel net;                 // current model
  std::vector<RetainedArtifact> history;  // oldest..newest, capped
  std::vector<double> lambda;             // aligned with history, sums to 1
  int t = 0;                              // batches consumed so far
  Rng rng{0};
};

ContinualState init_continual(const ContinualConfig& cfg, std::size_t n_encoded,
                              std::size_t n_classes);

struct StepRecord {
  int t = 0;
  int concept_id = 0;
  // Soft AUROC of the step-(t-1) model on this batch, before training.
  // NaN at step 0 and for single-class batches.
  double forward_auroc = std::numeric_limits<double>::quiet_NaN();
  double ce = 0.0;         // mean cross-entropy over the step's updates
  double retention = 0.0;  // weighted retention term actually added
  // Mean retrospective AUROC when this step is a reporting checkpoint.
  double retro_auroc = std::numeric_limits<double>::quiet_NaN();
};

// One protocol step: forward-predict the incoming batch, build pseudo-labels
// from the frozen history, fine-tune on this batch alone, then freeze and
// retain the updated model. Throws on an empty batch or a non-finite loss.
StepRecord continual_step(ContinualState& state, const data::StreamBatch& batch,
                          int epochs);

struct RetrospectiveResult {
  std::vector<double> per_step;  // NaN for single-class batches
  double mean = std::numeric_limits<double>::quiet_NaN();
};

// Evaluates the current model on already-consumed batches (read-only; the
// training path never sees them). Requires at least two consumed steps.
RetrospectiveResult retrospective_eval(const ContinualState& state,
                                       const std::vector<data::StreamBatch>& history);

struct StreamRunResult {
  std::vector<StepRecord> steps;  // one per consumed batch
  double mean_forward = std::numeric_limits<double>::quiet_NaN();
  double std_forward = std::numeric_limits<double>::quiet_NaN();
  // consumed-step checkpoint -> mean retrospective AUROC at that point
  std::map<int, double> retro;
  ContinualState state;  // final state (frozen history included)
};

// Runs the full protocol over a stream. retro_checkpoints counts consumed
// batches (e.g. 10 = after the tenth batch) and must each be >= 2.
StreamRunResult run_stream(const std::vector<data::StreamBatch>& batches,
                           const ContinualConfig& cfg,
                           const std::vector<int>& retro_checkpoints = {});

struct OnlineAdaptationResult {
  StreamRunResult shapnn;
  StreamRunResult baseline;  // vanilla_variant(cfg), same seed
};

OnlineAdaptationResult online_adaptation_eval(
    const std::vector<data::StreamBatch>& batches, const ContinualConfig& cfg,
    const std::vector<int>& retro_checkpoints = {});

}  // namespace shapnn::continual
