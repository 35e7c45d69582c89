#pragma once
// AUROC (rank-based, ties at half weight) and the small report types used by
// the experiment harness. Multi-class AUROC is macro-averaged one-vs-rest.
#include <string>
#include <vector>

#include "shapnn/matrix.hpp"

namespace shapnn::metrics {

// Probability a random positive outranks a random negative; ties count 1/2.
// Throws std::invalid_argument when only one class is present.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// Macro one-vs-rest over K classes; `scores` is [n x K]. Classes absent from
// `labels` are skipped in the macro average.
double auroc_ovr(const Matrix& scores, const std::vector<int>& labels);

// Table-style AUROC on hard predictions: argmax of `probs` becomes a one-hot
// score matrix, then macro one-vs-rest. This is the protocol under which the
// reference prediction-quality numbers are reproducible (soft-probability
// AUROC saturates near 1.0 on the small benchmarks).
double auroc_hard(const Matrix& probs, const std::vector<int>& labels);

double accuracy(const Matrix& probs, const std::vector<int>& labels);

std::vector<int> argmax_rows(const Matrix& probs);

struct MetricReport {
  double auroc = 0.0;       // hard-prediction protocol
  double auroc_soft = 0.0;  // probability scores
  double accuracy = 0.0;
  std::vector<double> per_class;  // one-vs-rest components (hard protocol)
  std::size_t sample_count = 0;
  std::uint64_t seed = 0;
};

MetricReport evaluate(const Matrix& probs, const std::vector<int>& labels,
                      std::uint64_t seed);

}  // namespace shapnn::metrics
