#pragma once
// Masking surrogate: a network trained to reproduce a prior model's
// probabilities from (masked features, coalition indicator) pairs. Once
// trained it defines the characteristic function v_{x,y}(S) that both the
// exact explainers and the amortized explainer loss evaluate.
#include <cstdint>
#include <limits>
#include <vector>

#include "json.hpp"
#include "shapnn/data.hpp"
#include "shapnn/nn.hpp"
#include "shapnn/shapley.hpp"

namespace shapnn::shapley {

// Replaces features outside S with background defaults. Without player
// groups, x, S and background share one index space. With groups, S indexes
// players and each group's encoded columns are swapped atomically.
std::vector<double> mask_input(const std::vector<double>& x,
                               const SubsetMask& s,
                               const std::vector<double>& background,
                               const std::vector<data::PlayerGroup>* players =
                                   nullptr);

// Background defaults for an encoded dataset: the (standardized) mean for
// numeric columns and the "missing" indicator pattern for categoricals.
std::vector<double> background_defaults(const data::EncodedDataset& ds);

struct SurrogateConfig {
  std::vector<std::size_t> hidden = {128, 128};
  double lr = 0.1;  // decays linearly to 10% over training
  int epochs = 0;   // > 0: exact epoch count; otherwise derived from
                    // target_steps so small datasets still train long enough
  int target_steps = 6000;
  int batch_size = 32;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct SurrogateModel {
  nn::DenseNetwork net;  // input dim = n_encoded + n_players
  std::vector<data::PlayerGroup> players;
  std::vector<double> background;  // length n_encoded
  int n_classes = 0;
  bool trained = false;
  std::vector<double> epoch_loss;  // probe loss before training, then per epoch
  double val_loss = std::numeric_limits<double>::quiet_NaN();

  std::size_t n_players() const { return players.size(); }
  std::size_t n_encoded() const { return background.size(); }

  // Probability distribution for input x under coalition s.
  std::vector<double> predict_proba(const std::vector<double>& x,
                                    const SubsetMask& s) const;
  // Row i of X paired with masks[i]; returns [n x K] probabilities.
  Matrix predict_proba_batch(const Matrix& X,
                             const std::vector<SubsetMask>& masks) const;

  nlohmann::json to_json() const;
  static SurrogateModel from_json(const nlohmann::json& j);
};

// Thrown when training produces a non-finite loss; carries the last stable
// parameters so the caller can keep a usable model.
class SurrogateDivergence : public std::runtime_error {
 public:
  SurrogateDivergence(const std::string& msg, nlohmann::json checkpoint)
      : std::runtime_error(msg), checkpoint_(std::move(checkpoint)) {}
  const nlohmann::json& last_stable_checkpoint() const { return checkpoint_; }

 private:
  nlohmann::json checkpoint_;
};

// Distills the prior's probabilities on ds into a masking surrogate. Masks
// are drawn with cardinality uniform on {0..N} then a uniform subset, so
// empty and full coalitions are covered.
SurrogateModel train_surrogate(const Matrix& prior_probs,
                               const data::EncodedDataset& ds,
                               const SurrogateConfig& cfg);

// The surrogate's probability for class y under coalition s.
double characteristic_value(const SurrogateModel& surr,
                            const std::vector<double>& x, int y,
                            const SubsetMask& s);

// Wraps one input as a cooperative game over players; outputs are the K
// class probabilities. Evaluation is pure and thread-safe.
ValueFunction make_value_function(const SurrogateModel& surr,
                                  std::vector<double> x);

}  // namespace shapnn::shapley
