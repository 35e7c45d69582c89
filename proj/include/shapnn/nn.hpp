#pragma once
// Minimal dense-network engine: relu/identity layers, batched forward and
// backward, softmax cross-entropy with soft targets, SGD, finite-difference
// gradient verification, and exact JSON round-trip serialization.
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "shapnn/matrix.hpp"
#include "shapnn/rng.hpp"

namespace shapnn::nn {

enum class Activation { kRelu, kIdentity };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct Layer {
  Matrix W;               // [out x in]
  std::vector<double> b;  // [out]
  Activation act = Activation::kIdentity;
};

struct GradientTape {
  std::vector<Matrix> gw;
  std::vector<std::vector<double>> gb;

  // this += s * other (shapes must match)
  void add_scaled(const GradientTape& other, double s);
  void scale(double s);
};

// Post-activation outputs per layer, kept for the backward pass.
struct ForwardCache {
  Matrix input;
  std::vector<Matrix> post;
  bool valid = false;
};

class DenseNetwork {
 public:
  DenseNetwork() = default;
  // dims = {input, hidden..., output}; acts has one entry per layer.
  DenseNetwork(const std::vector<std::size_t>& dims,
               const std::vector<Activation>& acts, Rng& rng);

  // Standard shape: relu hidden layers, identity output layer.
  static DenseNetwork mlp(std::size_t input, const std::vector<std::size_t>& hidden,
                          std::size_t output, Rng& rng);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t layer_count() const { return layers_.size(); }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  std::vector<double> forward(const std::vector<double>& x) const;
  Matrix forward_batch(const Matrix& X, ForwardCache* cache = nullptr) const;

  // upstream holds dLoss/dOutput per row; the tape is summed over rows (pass
  // upstream already scaled by 1/batch for averaged gradients). x_grad, when
  // given, receives dLoss/dInput.
  GradientTape backward_batch(const ForwardCache& cache, const Matrix& upstream,
                              Matrix* x_grad = nullptr) const;
  GradientTape backward(const std::vector<double>& x,
                        const std::vector<double>& upstream) const;

  GradientTape zero_tape() const;
  void sgd_step(const GradientTape& tape, double lr);

  std::size_t n_params() const;
  double get_param(std::size_t i) const;
  void set_param(std::size_t i, double v);
  double tape_param(const GradientTape& tape, std::size_t i) const;

  nlohmann::json to_json() const;
  static DenseNetwork from_json(const nlohmann::json& j);

 private:
  std::vector<Layer> layers_;
};

std::vector<double> softmax(const std::vector<double>& logits);
void softmax_rows_inplace(Matrix& logits);

struct CeResult {
  double loss = 0.0;
  std::vector<double> grad;  // softmax(logits) - target
};

// Validates that target is a distribution (entries >= 0, sums to 1).
CeResult softmax_cross_entropy(const std::vector<double>& logits,
                               const std::vector<double>& target);

struct CeBatchResult {
  double loss = 0.0;  // mean over rows
  Matrix grad;        // (softmax - target) / n_rows
};

CeBatchResult softmax_cross_entropy_batch(const Matrix& logits,
                                          const Matrix& targets);

enum class LossKind { kCrossEntropy, kSquared };

// Max relative error between analytic and central-difference gradients.
// stride > 1 checks a deterministic parameter subsample (for large nets).
double gradient_check(DenseNetwork& net, const std::vector<double>& x,
                      const std::vector<double>& target, double eps,
                      LossKind kind = LossKind::kCrossEntropy,
                      std::size_t stride = 1);

}  // namespace shapnn::nn
