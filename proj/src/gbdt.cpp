#include "shapnn/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "shapnn/nn.hpp"

namespace shapnn::prior {

const std::vector<double>& DecisionTree::score(const double* x) const {
  int node = 0;
  while (!nodes[node].is_leaf())
    node = x[nodes[node].feature] < nodes[node].threshold ? nodes[node].left
                                                          : nodes[node].right;
  return nodes[node].leaf;
}

nlohmann::json DecisionTree::to_json() const {
  nlohmann::json j;
  j["max_depth"] = max_depth;
  j["nodes"] = nlohmann::json::array();
  for (const TreeNode& n : nodes) {
    nlohmann::json nj;
    nj["f"] = n.feature;
    nj["thr"] = n.threshold;
    nj["l"] = n.left;
    nj["r"] = n.right;
    if (n.is_leaf()) nj["leaf"] = n.leaf;
    j["nodes"].push_back(std::move(nj));
  }
  return j;
}

DecisionTree DecisionTree::from_json(const nlohmann::json& j) {
  DecisionTree t;
  t.max_depth = j.at("max_depth").get<int>();
  for (const auto& nj : j.at("nodes")) {
    TreeNode n;
    n.feature = nj.at("f").get<int>();
    n.threshold = nj.at("thr").get<double>();
    n.left = nj.at("l").get<int>();
    n.right = nj.at("r").get<int>();
    if (nj.contains("leaf")) n.leaf = nj.at("leaf").get<std::vector<double>>();
    t.nodes.push_back(std::move(n));
  }
  return t;
}

std::vector<double> GBDTModel::predict_scores(const double* x) const {
  std::vector<double> s = base_score;
  for (const DecisionTree& t : trees) {
    const std::vector<double>& leaf = t.score(x);
    for (int k = 0; k < n_classes; ++k) s[k] += learning_rate * leaf[k];
  }
  return s;
}

std::vector<double> GBDTModel::predict_proba(const std::vector<double>& x) const {
  return nn::softmax(predict_scores(x.data()));
}

Matrix GBDTModel::predict_proba_batch(const Matrix& X) const {
  Matrix P(X.rows, n_classes);
  for (std::size_t r = 0; r < X.rows; ++r) {
    std::vector<double> p = nn::softmax(predict_scores(X.row(r)));
    P.set_row(r, p);
  }
  return P;
}

nlohmann::json GBDTModel::to_json() const {
  nlohmann::json j;
  j["format"] = "shapnn-gbdt-v1";
  j["learning_rate"] = learning_rate;
  j["base_score"] = base_score;
  j["n_classes"] = n_classes;
  j["train_logloss"] = train_logloss;
  j["trees"] = nlohmann::json::array();
  for (const DecisionTree& t : trees) j["trees"].push_back(t.to_json());
  return j;
}

GBDTModel GBDTModel::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "shapnn-gbdt-v1")
    throw std::invalid_argument("GBDTModel::from_json: unknown format tag");
  GBDTModel m;
  m.learning_rate = j.at("learning_rate").get<double>();
  m.base_score = j.at("base_score").get<std::vector<double>>();
  m.n_classes = j.at("n_classes").get<int>();
  m.train_logloss = j.at("train_logloss").get<std::vector<double>>();
  for (const auto& tj : j.at("trees"))
    m.trees.push_back(DecisionTree::from_json(tj));
  return m;
}

namespace {

struct TreeBuilder {
  const Matrix& X;
  const Matrix& G;  // gradients [n x K]
  const Matrix& H;  // hessians  [n x K]
  const std::vector<std::vector<std::size_t>>& sorted_by_feature;
  const GBDTConfig& cfg;
  int n_classes;
  DecisionTree tree;
  std::vector<char> in_node;  // scratch membership mask

  static constexpr double kLeafReg = 1e-6;

  int build(std::vector<std::size_t>& idx, int depth) {
    double n = static_cast<double>(idx.size());
    std::vector<double> gsum(n_classes, 0.0), hsum(n_classes, 0.0);
    for (std::size_t i : idx)
      for (int k = 0; k < n_classes; ++k) {
        gsum[k] += G(i, k);
        hsum[k] += H(i, k);
      }

    int best_feature = -1;
    double best_threshold = 0.0;
    double best_gain = 1e-12;  // require a strictly positive improvement
    double parent_term = 0.0;
    for (int k = 0; k < n_classes; ++k) parent_term += gsum[k] * gsum[k] / n;

    if (depth < cfg.max_depth &&
        idx.size() >= 2 * static_cast<std::size_t>(cfg.min_leaf)) {
      for (std::size_t i : idx) in_node[i] = 1;
      std::vector<double> gl(n_classes);
      for (std::size_t f = 0; f < X.cols; ++f) {
        std::fill(gl.begin(), gl.end(), 0.0);
        std::size_t nl = 0;
        double prev_value = 0.0;
        bool have_prev = false;
        for (std::size_t pos : sorted_by_feature[f]) {
          if (!in_node[pos]) continue;
          double value = X(pos, f);
          if (have_prev && value > prev_value &&
              nl >= static_cast<std::size_t>(cfg.min_leaf) &&
              idx.size() - nl >= static_cast<std::size_t>(cfg.min_leaf)) {
            double nr = n - static_cast<double>(nl);
            double gain = -parent_term;
            for (int k = 0; k < n_classes; ++k) {
              double gr = gsum[k] - gl[k];
              gain += gl[k] * gl[k] / static_cast<double>(nl) + gr * gr / nr;
            }
            if (gain > best_gain) {  // ties keep lowest feature, lowest threshold
              best_gain = gain;
              best_feature = static_cast<int>(f);
              best_threshold = 0.5 * (prev_value + value);
            }
          }
          for (int k = 0; k < n_classes; ++k) gl[k] += G(pos, k);
          ++nl;
          prev_value = value;
          have_prev = true;
        }
      }
      for (std::size_t i : idx) in_node[i] = 0;
    }

    int node_id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (best_feature < 0) {
      // Newton leaf: w_k = -sum g / (sum h + reg)
      TreeNode& leaf = tree.nodes[node_id];
      leaf.leaf.resize(n_classes);
      for (int k = 0; k < n_classes; ++k)
        leaf.leaf[k] = -gsum[k] / (hsum[k] + kLeafReg);
      return node_id;
    }

    std::vector<std::size_t> left_idx, right_idx;
    for (std::size_t i : idx)
      (X(i, best_feature) < best_threshold ? left_idx : right_idx).push_back(i);
    idx.clear();
    idx.shrink_to_fit();
    tree.nodes[node_id].feature = best_feature;
    tree.nodes[node_id].threshold = best_threshold;
    int left = build(left_idx, depth + 1);
    tree.nodes[node_id].left = left;
    int right = build(right_idx, depth + 1);
    tree.nodes[node_id].right = right;
    return node_id;
  }
};

double mean_logloss(const Matrix& scores, const std::vector<int>& y) {
  double total = 0.0;
  for (std::size_t r = 0; r < scores.rows; ++r) {
    const double* z = scores.row(r);
    double m = z[0];
    for (std::size_t k = 1; k < scores.cols; ++k) m = std::max(m, z[k]);
    double sum = 0.0;
    for (std::size_t k = 0; k < scores.cols; ++k) sum += std::exp(z[k] - m);
    total += m + std::log(sum) - z[y[r]];
  }
  return total / static_cast<double>(scores.rows);
}

}  // namespace

GBDTModel train_gbdt(const data::EncodedDataset& ds, const GBDTConfig& cfg) {
  if (cfg.n_trees < 0)
    throw std::invalid_argument("train_gbdt: n_trees must be >= 0");
  if (cfg.max_depth < 1)
    throw std::invalid_argument("train_gbdt: max_depth must be >= 1");
  if (cfg.learning_rate <= 0.0)
    throw std::invalid_argument("train_gbdt: learning_rate must be > 0");
  if (cfg.min_leaf < 1)
    throw std::invalid_argument("train_gbdt: min_leaf must be >= 1");
  if (ds.n() == 0) throw std::invalid_argument("train_gbdt: empty dataset");
  std::size_t present = 0;
  std::vector<std::size_t> counts(ds.n_classes, 0);
  for (int label : ds.y) ++counts[label];
  for (std::size_t c : counts) present += (c > 0);
  if (present < 2)
    throw std::invalid_argument(
        "train_gbdt: need at least two classes present, got " +
        std::to_string(present));

  const std::size_t n = ds.n();
  const int K = ds.n_classes;
  GBDTModel model;
  model.learning_rate = cfg.learning_rate;
  model.n_classes = K;
  model.base_score.resize(K);
  for (int k = 0; k < K; ++k)
    model.base_score[k] = std::log(
        (static_cast<double>(counts[k]) + 0.5) /
        (static_cast<double>(n) + 0.5 * static_cast<double>(K)));

  // Presort row indices per feature once.
  std::vector<std::vector<std::size_t>> sorted_by_feature(ds.X.cols);
  for (std::size_t f = 0; f < ds.X.cols; ++f) {
    auto& order = sorted_by_feature[f];
    order.resize(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return ds.X(a, f) < ds.X(b, f);
                     });
  }

  Matrix scores(n, K);
  for (std::size_t r = 0; r < n; ++r)
    scores.set_row(r, model.base_score);
  model.train_logloss.push_back(mean_logloss(scores, ds.y));

  Matrix G(n, K), H(n, K);
  for (int round = 0; round < cfg.n_trees; ++round) {
    for (std::size_t r = 0; r < n; ++r) {
      std::vector<double> p = nn::softmax(scores.row_vec(r));
      for (int k = 0; k < K; ++k) {
        double target = ds.y[r] == k ? 1.0 : 0.0;
        G(r, k) = p[k] - target;
        H(r, k) = std::max(p[k] * (1.0 - p[k]), 1e-12);
      }
    }
    TreeBuilder builder{ds.X, G, H, sorted_by_feature, cfg, K, {}, {}};
    builder.in_node.assign(n, 0);
    builder.tree.max_depth = cfg.max_depth;
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    builder.build(all, 0);
    for (std::size_t r = 0; r < n; ++r) {
      const std::vector<double>& leaf = builder.tree.score(ds.X.row(r));
      for (int k = 0; k < K; ++k)
        scores(r, k) += cfg.learning_rate * leaf[k];
    }
    model.trees.push_back(std::move(builder.tree));
    model.train_logloss.push_back(mean_logloss(scores, ds.y));
  }
  return model;
}

std::vector<double> split_frequency(const GBDTModel& model,
                                    std::size_t n_features) {
  std::vector<double> counts(n_features, 0.0);
  double total = 0.0;
  for (const DecisionTree& t : model.trees)
    for (const TreeNode& node : t.nodes)
      if (!node.is_leaf()) {
        if (static_cast<std::size_t>(node.feature) >= n_features)
          throw std::invalid_argument("split_frequency: feature index " +
                                      std::to_string(node.feature) +
                                      " out of range");
        counts[node.feature] += 1.0;
        total += 1.0;
      }
  if (total > 0.0)
    for (double& c : counts) c /= total;
  return counts;
}

}  // namespace shapnn::prior
