#pragma once
// Reference baselines: logistic regression (single linear layer trained with
// softmax cross-entropy + L2) and a bagged random forest with per-node
// feature subsampling.
#include <cstdint>
#include <vector>

#include "shapnn/data.hpp"
#include "shapnn/gbdt.hpp"
#include "shapnn/nn.hpp"

namespace shapnn::prior {

struct LogisticConfig {
  double lr = 0.1;
  int epochs = 120;
  int batch_size = 16;
  double l2 = 1e-3;
  std::uint64_t seed = 0;
};

struct LogisticModel {
  nn::DenseNetwork net;  // one identity layer

  std::vector<double> predict_proba(const std::vector<double>& x) const;
  Matrix predict_proba_batch(const Matrix& X) const;
};

LogisticModel train_logistic(const data::EncodedDataset& ds,
                             const LogisticConfig& cfg);

struct RandomForestConfig {
  int n_trees = 100;
  int max_depth = 8;
  int min_leaf = 2;
  std::uint64_t seed = 0;
};

struct RandomForestModel {
  std::vector<DecisionTree> trees;  // leaves hold class distributions
  int n_classes = 0;

  std::vector<double> predict_proba(const std::vector<double>& x) const;
  Matrix predict_proba_batch(const Matrix& X) const;
};

RandomForestModel train_random_forest(const data::EncodedDataset& ds,
                                      const RandomForestConfig& cfg);

struct BaselineModels {
  LogisticModel logistic;
  RandomForestModel forest;
};

BaselineModels train_baselines(const data::EncodedDataset& ds,
                               const LogisticConfig& lr_cfg = {},
                               const RandomForestConfig& rf_cfg = {});

}  // namespace shapnn::prior
