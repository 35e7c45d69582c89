#pragma once
// Compact gradient-boosted decision trees for multiclass targets. One tree
// per boosting round with K-vector leaves (shared structure across classes),
// greedy exact splits maximizing gradient-variance reduction, Newton leaf
// values. Deterministic: ties break toward the lowest feature index, then
// the lowest threshold.
#include <cstdint>
#include <vector>

#include "json.hpp"
#include "shapnn/data.hpp"
#include "shapnn/matrix.hpp"

namespace shapnn::prior {

struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::vector<double> leaf;  // per-class scores (leaves only)

  bool is_leaf() const { return left < 0; }
};

struct DecisionTree {
  std::vector<TreeNode> nodes;
  int max_depth = 0;

  const std::vector<double>& score(const double* x) const;
  nlohmann::json to_json() const;
  static DecisionTree from_json(const nlohmann::json& j);
};

struct GBDTConfig {
  int n_trees = 100;
  int max_depth = 3;
  double learning_rate = 0.1;
  int min_leaf = 5;
};

struct GBDTModel {
  std::vector<DecisionTree> trees;
  double learning_rate = 0.1;
  std::vector<double> base_score;  // log class priors
  int n_classes = 0;
  std::vector<double> train_logloss;  // entry 0 before boosting, then per round

  std::vector<double> predict_scores(const double* x) const;
  std::vector<double> predict_proba(const std::vector<double>& x) const;
  Matrix predict_proba_batch(const Matrix& X) const;

  nlohmann::json to_json() const;
  static GBDTModel from_json(const nlohmann::json& j);
};

GBDTModel train_gbdt(const data::EncodedDataset& ds, const GBDTConfig& cfg);

// Fraction of internal splits landing on each encoded feature.
std::vector<double> split_frequency(const GBDTModel& model,
                                    std::size_t n_features);

}  // namespace shapnn::prior
