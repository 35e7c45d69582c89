#include "shapnn/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace shapnn::prior {

std::vector<double> LogisticModel::predict_proba(
    const std::vector<double>& x) const {
  return nn::softmax(net.forward(x));
}

Matrix LogisticModel::predict_proba_batch(const Matrix& X) const {
  Matrix logits = net.forward_batch(X);
  nn::softmax_rows_inplace(logits);
  return logits;
}

LogisticModel train_logistic(const data::EncodedDataset& ds,
                             const LogisticConfig& cfg) {
  if (ds.n() == 0) throw std::invalid_argument("train_logistic: empty dataset");
  if (cfg.lr < 0.0)
    throw std::invalid_argument("train_logistic: lr must be >= 0");
  if (cfg.epochs < 0)
    throw std::invalid_argument("train_logistic: epochs must be >= 0");
  if (cfg.batch_size < 1)
    throw std::invalid_argument("train_logistic: batch_size must be >= 1");
  if (cfg.l2 < 0.0)
    throw std::invalid_argument("train_logistic: l2 must be >= 0");
  Rng rng(cfg.seed);
  LogisticModel model;
  model.net = nn::DenseNetwork({ds.n_encoded(), (std::size_t)ds.n_classes},
                               {nn::Activation::kIdentity}, rng);
  // Zero init keeps the untrained model exactly uniform.
  for (auto& layer : model.net.layers()) {
    std::fill(layer.W.a.begin(), layer.W.a.end(), 0.0);
    std::fill(layer.b.begin(), layer.b.end(), 0.0);
  }

  Matrix targets(ds.n(), ds.n_classes);
  for (std::size_t r = 0; r < ds.n(); ++r) targets(r, ds.y[r]) = 1.0;

  std::vector<std::size_t> order(ds.n());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      std::size_t end = std::min(order.size(), start + cfg.batch_size);
      Matrix xb(end - start, ds.n_encoded());
      Matrix tb(end - start, ds.n_classes);
      for (std::size_t i = start; i < end; ++i) {
        std::copy(ds.X.row(order[i]), ds.X.row(order[i]) + ds.X.cols,
                  xb.row(i - start));
        std::copy(targets.row(order[i]), targets.row(order[i]) + targets.cols,
                  tb.row(i - start));
      }
      nn::ForwardCache cache;
      Matrix logits = model.net.forward_batch(xb, &cache);
      nn::CeBatchResult ce = nn::softmax_cross_entropy_batch(logits, tb);
      nn::GradientTape tape = model.net.backward_batch(cache, ce.grad);
      if (cfg.l2 > 0.0) {
        auto& layer = model.net.layers()[0];
        for (std::size_t i = 0; i < layer.W.a.size(); ++i)
          tape.gw[0].a[i] += cfg.l2 * layer.W.a[i];
      }
      model.net.sgd_step(tape, cfg.lr);
    }
  }
  return model;
}

namespace {

struct ForestBuilder {
  const Matrix& X;
  const std::vector<int>& y;
  int n_classes;
  const RandomForestConfig& cfg;
  Rng& rng;
  std::size_t n_sub;  // features tried per node
  DecisionTree tree;

  static double gini(const std::vector<double>& counts, double n) {
    double g = 1.0;
    for (double c : counts) g -= (c / n) * (c / n);
    return g;
  }

  int build(std::vector<std::size_t>& idx, int depth) {
    double n = static_cast<double>(idx.size());
    std::vector<double> counts(n_classes, 0.0);
    for (std::size_t i : idx) counts[y[i]] += 1.0;
    bool pure = false;
    for (double c : counts) pure |= (c == n);

    int best_feature = -1;
    double best_threshold = 0.0, best_gain = 1e-12;
    if (!pure && depth < cfg.max_depth &&
        idx.size() >= 2 * static_cast<std::size_t>(cfg.min_leaf)) {
      double parent = gini(counts, n);
      std::vector<std::size_t> feats = rng.choose(X.cols, n_sub);
      std::sort(feats.begin(), feats.end());
      std::vector<std::pair<double, std::size_t>> vals(idx.size());
      std::vector<double> left(n_classes);
      for (std::size_t f : feats) {
        for (std::size_t i = 0; i < idx.size(); ++i)
          vals[i] = {X(idx[i], f), idx[i]};
        std::sort(vals.begin(), vals.end());
        std::fill(left.begin(), left.end(), 0.0);
        for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
          left[y[vals[i].second]] += 1.0;
          if (vals[i + 1].first <= vals[i].first) continue;
          std::size_t nl = i + 1;
          std::size_t nr = vals.size() - nl;
          if (nl < static_cast<std::size_t>(cfg.min_leaf) ||
              nr < static_cast<std::size_t>(cfg.min_leaf))
            continue;
          std::vector<double> right(n_classes);
          for (int k = 0; k < n_classes; ++k) right[k] = counts[k] - left[k];
          double gain = parent -
                        (static_cast<double>(nl) / n) * gini(left, nl) -
                        (static_cast<double>(nr) / n) * gini(right, nr);
          if (gain > best_gain) {
            best_gain = gain;
            best_feature = static_cast<int>(f);
            best_threshold = 0.5 * (vals[i].first + vals[i + 1].first);
          }
        }
      }
    }

    int node_id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (best_feature < 0) {
      TreeNode& leaf = tree.nodes[node_id];
      leaf.leaf.resize(n_classes);
      for (int k = 0; k < n_classes; ++k) leaf.leaf[k] = counts[k] / n;
      return node_id;
    }
    std::vector<std::size_t> li, ri;
    for (std::size_t i : idx)
      (X(i, best_feature) < best_threshold ? li : ri).push_back(i);
    idx.clear();
    tree.nodes[node_id].feature = best_feature;
    tree.nodes[node_id].threshold = best_threshold;
    int l = build(li, depth + 1);
    tree.nodes[node_id].left = l;
    int r = build(ri, depth + 1);
    tree.nodes[node_id].right = r;
    return node_id;
  }
};

}  // namespace

std::vector<double> RandomForestModel::predict_proba(
    const std::vector<double>& x) const {
  std::vector<double> p(n_classes, 0.0);
  for (const DecisionTree& t : trees) {
    const std::vector<double>& leaf = t.score(x.data());
    for (int k = 0; k < n_classes; ++k) p[k] += leaf[k];
  }
  for (double& v : p) v /= static_cast<double>(trees.size());
  return p;
}

Matrix RandomForestModel::predict_proba_batch(const Matrix& X) const {
  Matrix P(X.rows, n_classes);
  for (std::size_t r = 0; r < X.rows; ++r)
    P.set_row(r, predict_proba(X.row_vec(r)));
  return P;
}

RandomForestModel train_random_forest(const data::EncodedDataset& ds,
                                      const RandomForestConfig& cfg) {
  if (ds.n() == 0)
    throw std::invalid_argument("train_random_forest: empty dataset");
  if (cfg.n_trees < 1 || cfg.max_depth < 1 || cfg.min_leaf < 1)
    throw std::invalid_argument(
        "train_random_forest: n_trees, max_depth, min_leaf must be >= 1");
  std::size_t present = 0;
  std::vector<std::size_t> counts(ds.n_classes, 0);
  for (int label : ds.y) ++counts[label];
  for (std::size_t c : counts) present += (c > 0);
  if (present < 2)
    throw std::invalid_argument("train_random_forest: need two classes present");

  RandomForestModel model;
  model.n_classes = ds.n_classes;
  Rng rng(cfg.seed);
  std::size_t n_sub = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::sqrt(static_cast<double>(ds.X.cols))));
  for (int t = 0; t < cfg.n_trees; ++t) {
    std::vector<std::size_t> boot(ds.n());
    for (std::size_t i = 0; i < ds.n(); ++i) boot[i] = rng.index(ds.n());
    ForestBuilder builder{ds.X, ds.y, ds.n_classes, cfg, rng, n_sub, {}};
    builder.tree.max_depth = cfg.max_depth;
    builder.build(boot, 0);
    model.trees.push_back(std::move(builder.tree));
  }
  return model;
}

BaselineModels train_baselines(const data::EncodedDataset& ds,
                               const LogisticConfig& lr_cfg,
                               const RandomForestConfig& rf_cfg) {
  return {train_logistic(ds, lr_cfg), train_random_forest(ds, rf_cfg)};
}

}  // namespace shapnn::prior
