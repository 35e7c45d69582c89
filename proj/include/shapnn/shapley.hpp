#pragma once
// Game-theoretic attribution: exact Shapley values by coalition enumeration,
// KernelSHAP as a constrained weighted least squares, Shapley-kernel subset
// sampling, the additive efficient normalization, and the regression loss
// used to train the amortized explainer.
#include <cstdint>
#include <functional>
#include <vector>

#include "shapnn/matrix.hpp"
#include "shapnn/rng.hpp"

namespace shapnn::shapley {

// Coalition indicator over players; 1 = feature present.
using SubsetMask = std::vector<std::uint8_t>;

// A cooperative game: maps a coalition to one value per model output.
struct ValueFunction {
  std::size_t n_players = 0;
  std::size_t n_outputs = 1;
  std::function<std::vector<double>(const SubsetMask&)> eval;
};

// Unnormalized per-subset Shapley kernel mass for a coalition of size s out
// of n: (n-1) / (C(n,s) * s * (n-s)). Infinite at s=0 and s=n; callers only
// use proper nonempty coalitions.
double kernel_weight(std::size_t n, std::size_t s);

// Total kernel mass over all proper nonempty coalitions.
double kernel_normalizer(std::size_t n);

// Draws a proper nonempty coalition with probability proportional to the
// Shapley kernel: first the size (mass (n-1)/(s(n-s))), then a uniform
// subset of that size. Requires n >= 2.
SubsetMask sample_subset(std::size_t n, Rng& rng);

// Exact Shapley values [n_players x n_outputs] via all 2^n coalitions.
// Limited to n_players <= 20 to keep the value table in memory.
Matrix exact_shapley(const ValueFunction& v);

struct KernelShapConfig {
  std::size_t budget = 128;  // sampled coalitions; ignored when exhaustive
  bool exhaustive = false;   // use every proper coalition with exact weights
  std::uint64_t seed = 0;
};

// KernelSHAP: least squares over coalition evaluations with the efficiency
// constraint eliminated into the last player. Exhaustive mode reproduces
// exact Shapley values up to solver round-off; sampled mode draws coalitions
// from the kernel and weights them equally.
Matrix kernel_shap(const ValueFunction& v, const KernelShapConfig& cfg);

// Additive efficient normalization: shifts each output column by a constant
// so attributions sum exactly to v_full - v_empty.
Matrix efficient_normalize(const Matrix& phi, const std::vector<double>& v_full,
                           const std::vector<double>& v_empty);

// Mean squared residual of the additive fit for output k over the given
// coalitions: mean_m (values[m][k] - v_empty[k] - sum_{i in S_m} phi(i,k))^2.
double fastshap_loss(const Matrix& phi, const std::vector<SubsetMask>& subsets,
                     const std::vector<std::vector<double>>& values,
                     const std::vector<double>& v_empty, std::size_t k);

// Accumulates scale * d(fastshap_loss)/d(phi(:,k)) into grad's column k.
void fastshap_loss_grad(const Matrix& phi,
                        const std::vector<SubsetMask>& subsets,
                        const std::vector<std::vector<double>>& values,
                        const std::vector<double>& v_empty, std::size_t k,
                        double scale, Matrix& grad);

}  // namespace shapnn::shapley
