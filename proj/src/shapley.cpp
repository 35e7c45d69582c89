#include "shapnn/shapley.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace shapnn::shapley {

namespace {

// Exact binomial coefficients; n <= 20 keeps everything integral in double.
double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  if (k > n - k) k = n - k;
  double r = 1.0;
  for (std::size_t i = 0; i < k; ++i)
    r = r * static_cast<double>(n - i) / static_cast<double>(i + 1);
  return std::round(r);
}

void check_value_function(const ValueFunction& v) {
  if (v.n_players == 0)
    throw std::invalid_argument("value function needs at least one player");
  if (v.n_outputs == 0)
    throw std::invalid_argument("value function needs at least one output");
  if (!v.eval) throw std::invalid_argument("value function has no evaluator");
}

std::vector<double> eval_checked(const ValueFunction& v, const SubsetMask& mask) {
  std::vector<double> out = v.eval(mask);
  if (out.size() != v.n_outputs)
    throw std::runtime_error("value function returned " +
                             std::to_string(out.size()) + " outputs, expected " +
                             std::to_string(v.n_outputs));
  return out;
}

SubsetMask mask_from_bits(std::uint32_t bits, std::size_t n) {
  SubsetMask mask(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    if (bits & (1u << i)) mask[i] = 1;
  return mask;
}

}  // namespace

double kernel_weight(std::size_t n, std::size_t s) {
  if (n < 2) throw std::invalid_argument("kernel_weight: need n >= 2");
  if (s == 0 || s >= n)
    throw std::invalid_argument("kernel_weight: size must be in [1, n-1]");
  return static_cast<double>(n - 1) /
         (binomial(n, s) * static_cast<double>(s) * static_cast<double>(n - s));
}

double kernel_normalizer(std::size_t n) {
  if (n < 2) return 0.0;
  double z = 0.0;
  for (std::size_t s = 1; s < n; ++s) z += binomial(n, s) * kernel_weight(n, s);
  return z;
}

SubsetMask sample_subset(std::size_t n, Rng& rng) {
  if (n < 2)
    throw std::invalid_argument("sample_subset: need at least two players");
  // Per-size mass: C(n,s) * w(n,s) = (n-1) / (s * (n-s)).
  std::vector<double> mass(n);  // index s in [1, n-1]
  double total = 0.0;
  for (std::size_t s = 1; s < n; ++s) {
    mass[s] = static_cast<double>(n - 1) /
              (static_cast<double>(s) * static_cast<double>(n - s));
    total += mass[s];
  }
  double u = rng.uniform() * total;
  std::size_t size = n - 1;
  for (std::size_t s = 1; s < n; ++s) {
    if (u < mass[s]) {
      size = s;
      break;
    }
    u -= mass[s];
  }
  SubsetMask mask(n, 0);
  for (std::size_t i : rng.choose(n, size)) mask[i] = 1;
  return mask;
}

Matrix exact_shapley(const ValueFunction& v) {
  check_value_function(v);
  const std::size_t n = v.n_players;
  if (n > 20)
    throw std::invalid_argument(
        "exact_shapley: enumeration supports at most 20 players, got " +
        std::to_string(n));
  const std::size_t k_out = v.n_outputs;
  const std::uint32_t full = n == 32 ? 0xFFFFFFFFu : ((1u << n) - 1u);

  // Value table over all coalitions.
  std::vector<std::vector<double>> table(static_cast<std::size_t>(full) + 1);
  for (std::uint32_t bits = 0; bits <= full; ++bits)
    table[bits] = eval_checked(v, mask_from_bits(bits, n));

  // Per-size coalition weight s!(n-1-s)!/n! = 1 / (n * C(n-1, s)).
  std::vector<double> weight(n);
  for (std::size_t s = 0; s < n; ++s)
    weight[s] = 1.0 / (static_cast<double>(n) * binomial(n - 1, s));

  Matrix phi(n, k_out);
  for (std::uint32_t bits = 0; bits <= full; ++bits) {
    std::size_t s = static_cast<std::size_t>(__builtin_popcount(bits));
    for (std::size_t i = 0; i < n; ++i) {
      if (bits & (1u << i)) continue;
      const auto& without = table[bits];
      const auto& with = table[bits | (1u << i)];
      for (std::size_t k = 0; k < k_out; ++k)
        phi(i, k) += weight[s] * (with[k] - without[k]);
    }
  }
  return phi;
}

Matrix kernel_shap(const ValueFunction& v, const KernelShapConfig& cfg) {
  check_value_function(v);
  const std::size_t n = v.n_players;
  const std::size_t k_out = v.n_outputs;
  std::vector<double> v_empty = eval_checked(v, SubsetMask(n, 0));
  std::vector<double> v_full = eval_checked(v, SubsetMask(n, 1));

  Matrix phi(n, k_out);
  if (n == 1) {
    for (std::size_t k = 0; k < k_out; ++k) phi(0, k) = v_full[k] - v_empty[k];
    return phi;
  }

  // Assemble coalitions: every proper subset with its kernel weight, or a
  // kernel-distributed sample weighted equally.
  std::vector<SubsetMask> masks;
  std::vector<double> weights;
  if (cfg.exhaustive) {
    if (n > 20)
      throw std::invalid_argument(
          "kernel_shap: exhaustive mode supports at most 20 players");
    const std::uint32_t full = (1u << n) - 1u;
    for (std::uint32_t bits = 1; bits < full; ++bits) {
      masks.push_back(mask_from_bits(bits, n));
      weights.push_back(
          kernel_weight(n, static_cast<std::size_t>(__builtin_popcount(bits))));
    }
  } else {
    if (cfg.budget == 0)
      throw std::invalid_argument("kernel_shap: budget must be positive");
    Rng rng(cfg.seed);
    for (std::size_t m = 0; m < cfg.budget; ++m) {
      masks.push_back(sample_subset(n, rng));
      weights.push_back(1.0);
    }
  }

  const std::size_t m_count = masks.size();
  std::vector<std::vector<double>> values(m_count);
  for (std::size_t m = 0; m < m_count; ++m)
    values[m] = eval_checked(v, masks[m]);

  // Least squares with the efficiency constraint eliminated into the last
  // player: phi_last = (v_full - v_empty) - sum(other phi). Design entry for
  // player j becomes z_j - z_last; the target subtracts z_last * total.
  const std::size_t d = n - 1;
  Matrix ata(d, d);
  std::vector<std::vector<double>> atb(k_out, std::vector<double>(d, 0.0));
  std::vector<double> row(d);
  for (std::size_t m = 0; m < m_count; ++m) {
    const SubsetMask& z = masks[m];
    double z_last = static_cast<double>(z[n - 1]);
    for (std::size_t j = 0; j < d; ++j)
      row[j] = static_cast<double>(z[j]) - z_last;
    double w = weights[m];
    for (std::size_t a = 0; a < d; ++a) {
      if (row[a] == 0.0) continue;
      for (std::size_t b = 0; b < d; ++b)
        ata(a, b) += w * row[a] * row[b];
      for (std::size_t k = 0; k < k_out; ++k) {
        double target = values[m][k] - v_empty[k] -
                        z_last * (v_full[k] - v_empty[k]);
        atb[k][a] += w * row[a] * target;
      }
    }
  }

  for (std::size_t k = 0; k < k_out; ++k) {
    std::vector<double> x = solve_linear(ata, atb[k]);
    double sum = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      phi(j, k) = x[j];
      sum += x[j];
    }
    phi(n - 1, k) = (v_full[k] - v_empty[k]) - sum;
  }
  return phi;
}

Matrix efficient_normalize(const Matrix& phi, const std::vector<double>& v_full,
                           const std::vector<double>& v_empty) {
  if (phi.rows == 0)
    throw std::invalid_argument("efficient_normalize: no players");
  if (v_full.size() != phi.cols || v_empty.size() != phi.cols)
    throw std::invalid_argument(
        "efficient_normalize: value vectors must match phi columns");
  Matrix out = phi;
  for (std::size_t k = 0; k < phi.cols; ++k) {
    double sum = 0.0;
    for (std::size_t i = 0; i < phi.rows; ++i) sum += phi(i, k);
    double shift =
        (v_full[k] - v_empty[k] - sum) / static_cast<double>(phi.rows);
    for (std::size_t i = 0; i < phi.rows; ++i) out(i, k) += shift;
  }
  return out;
}

double fastshap_loss(const Matrix& phi, const std::vector<SubsetMask>& subsets,
                     const std::vector<std::vector<double>>& values,
                     const std::vector<double>& v_empty, std::size_t k) {
  if (subsets.empty())
    throw std::invalid_argument("fastshap_loss: need at least one coalition");
  if (subsets.size() != values.size())
    throw std::invalid_argument("fastshap_loss: coalition/value count mismatch");
  if (k >= phi.cols)
    throw std::invalid_argument("fastshap_loss: output index out of range");
  double total = 0.0;
  for (std::size_t m = 0; m < subsets.size(); ++m) {
    double fit = 0.0;
    for (std::size_t i = 0; i < phi.rows; ++i)
      if (subsets[m][i]) fit += phi(i, k);
    double r = values[m][k] - v_empty[k] - fit;
    total += r * r;
  }
  return total / static_cast<double>(subsets.size());
}

void fastshap_loss_grad(const Matrix& phi,
                        const std::vector<SubsetMask>& subsets,
                        const std::vector<std::vector<double>>& values,
                        const std::vector<double>& v_empty, std::size_t k,
                        double scale, Matrix& grad) {
  if (grad.rows != phi.rows || grad.cols != phi.cols)
    throw std::invalid_argument("fastshap_loss_grad: grad shape mismatch");
  const double inv_m = 1.0 / static_cast<double>(subsets.size());
  for (std::size_t m = 0; m < subsets.size(); ++m) {
    double fit = 0.0;
    for (std::size_t i = 0; i < phi.rows; ++i)
      if (subsets[m][i]) fit += phi(i, k);
    double r = values[m][k] - v_empty[k] - fit;
    double g = scale * inv_m * -2.0 * r;
    for (std::size_t i = 0; i < phi.rows; ++i)
      if (subsets[m][i]) grad(i, k) += g;
  }
}

}  // namespace shapnn::shapley
