#include "shapnn/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace shapnn::metrics {

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("auroc: scores size " +
                                std::to_string(scores.size()) +
                                " != labels size " +
                                std::to_string(labels.size()));
  std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int l : labels) n_pos += (l != 0);
  std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw std::invalid_argument("auroc: both classes must be present");

  // Midranks: tied scores share the average of their rank range.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return scores[i] < scores[j]; });
  std::vector<double> rank(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    double mid = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double rank_sum_pos = 0.0;
  for (std::size_t k = 0; k < n; ++k)
    if (labels[k] != 0) rank_sum_pos += rank[k];
  double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) *
                                static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auroc_ovr(const Matrix& scores, const std::vector<int>& labels) {
  if (scores.rows != labels.size())
    throw std::invalid_argument("auroc_ovr: row count mismatch");
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t k = 0; k < scores.cols; ++k) {
    std::vector<double> s(scores.rows);
    std::vector<int> bin(scores.rows);
    bool has_pos = false, has_neg = false;
    for (std::size_t r = 0; r < scores.rows; ++r) {
      s[r] = scores(r, k);
      bin[r] = labels[r] == static_cast<int>(k) ? 1 : 0;
      (bin[r] ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) continue;
    total += auroc(s, bin);
    ++used;
  }
  if (used == 0)
    throw std::invalid_argument("auroc_ovr: no class with both outcomes");
  return total / static_cast<double>(used);
}

std::vector<int> argmax_rows(const Matrix& probs) {
  std::vector<int> out(probs.rows, 0);
  for (std::size_t r = 0; r < probs.rows; ++r) {
    const double* row = probs.row(r);
    std::size_t best = 0;
    for (std::size_t j = 1; j < probs.cols; ++j)
      if (row[j] > row[best]) best = j;
    out[r] = static_cast<int>(best);
  }
  return out;
}

double auroc_hard(const Matrix& probs, const std::vector<int>& labels) {
  Matrix onehot(probs.rows, probs.cols, 0.0);
  std::vector<int> pred = argmax_rows(probs);
  for (std::size_t r = 0; r < probs.rows; ++r) onehot(r, pred[r]) = 1.0;
  return auroc_ovr(onehot, labels);
}

double accuracy(const Matrix& probs, const std::vector<int>& labels) {
  if (probs.rows != labels.size())
    throw std::invalid_argument("accuracy: row count mismatch");
  if (probs.rows == 0) return 0.0;
  std::vector<int> pred = argmax_rows(probs);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < probs.rows; ++r) hits += (pred[r] == labels[r]);
  return static_cast<double>(hits) / static_cast<double>(probs.rows);
}

MetricReport evaluate(const Matrix& probs, const std::vector<int>& labels,
                      std::uint64_t seed) {
  MetricReport rep;
  rep.sample_count = labels.size();
  rep.seed = seed;
  rep.accuracy = accuracy(probs, labels);
  rep.auroc_soft = auroc_ovr(probs, labels);
  Matrix onehot(probs.rows, probs.cols, 0.0);
  std::vector<int> pred = argmax_rows(probs);
  for (std::size_t r = 0; r < probs.rows; ++r) onehot(r, pred[r]) = 1.0;
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t k = 0; k < probs.cols; ++k) {
    std::vector<double> s(probs.rows);
    std::vector<int> bin(probs.rows);
    bool has_pos = false, has_neg = false;
    for (std::size_t r = 0; r < probs.rows; ++r) {
      s[r] = onehot(r, k);
      bin[r] = labels[r] == static_cast<int>(k) ? 1 : 0;
      (bin[r] ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) continue;
    double v = auroc(s, bin);
    rep.per_class.push_back(v);
    total += v;
    ++used;
  }
  rep.auroc = used ? total / static_cast<double>(used) : 0.0;
  return rep;
}

}  // namespace shapnn::metrics
