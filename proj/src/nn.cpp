#include "shapnn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace shapnn::nn {

std::string activation_name(Activation a) {
  return a == Activation::kRelu ? "relu" : "identity";
}

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "identity") return Activation::kIdentity;
  throw std::invalid_argument("unknown activation: " + name);
}

void GradientTape::add_scaled(const GradientTape& other, double s) {
  if (gw.size() != other.gw.size())
    throw std::invalid_argument("GradientTape::add_scaled: layer count mismatch");
  for (std::size_t l = 0; l < gw.size(); ++l) {
    for (std::size_t i = 0; i < gw[l].a.size(); ++i)
      gw[l].a[i] += s * other.gw[l].a[i];
    for (std::size_t i = 0; i < gb[l].size(); ++i)
      gb[l][i] += s * other.gb[l][i];
  }
}

void GradientTape::scale(double s) {
  for (auto& m : gw)
    for (double& v : m.a) v *= s;
  for (auto& v : gb)
    for (double& x : v) x *= s;
}

DenseNetwork::DenseNetwork(const std::vector<std::size_t>& dims,
                           const std::vector<Activation>& acts, Rng& rng) {
  if (dims.size() < 2)
    throw std::invalid_argument("DenseNetwork: need at least input and output dims");
  if (acts.size() != dims.size() - 1)
    throw std::invalid_argument("DenseNetwork: expected " +
                                std::to_string(dims.size() - 1) +
                                " activations, got " +
                                std::to_string(acts.size()));
  for (std::size_t d : dims)
    if (d == 0) throw std::invalid_argument("DenseNetwork: zero-width layer");
  layers_.reserve(acts.size());
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Layer layer;
    layer.W = Matrix(dims[l + 1], dims[l]);
    layer.b.assign(dims[l + 1], 0.0);
    layer.act = acts[l];
    // Glorot-uniform init: +-sqrt(6 / (fan_in + fan_out)).
    double bound = std::sqrt(6.0 / static_cast<double>(dims[l] + dims[l + 1]));
    for (double& w : layer.W.a) w = rng.uniform(-bound, bound);
    layers_.push_back(std::move(layer));
  }
}

DenseNetwork DenseNetwork::mlp(std::size_t input,
                               const std::vector<std::size_t>& hidden,
                               std::size_t output, Rng& rng) {
  std::vector<std::size_t> dims{input};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(output);
  std::vector<Activation> acts(hidden.size(), Activation::kRelu);
  acts.push_back(Activation::kIdentity);
  return DenseNetwork(dims, acts, rng);
}

std::size_t DenseNetwork::input_dim() const {
  if (layers_.empty()) throw std::logic_error("DenseNetwork: empty network");
  return layers_.front().W.cols;
}

std::size_t DenseNetwork::output_dim() const {
  if (layers_.empty()) throw std::logic_error("DenseNetwork: empty network");
  return layers_.back().W.rows;
}

std::vector<double> DenseNetwork::forward(const std::vector<double>& x) const {
  if (x.size() != input_dim())
    throw std::invalid_argument("forward: expected input dim " +
                                std::to_string(input_dim()) + ", got " +
                                std::to_string(x.size()));
  std::vector<double> cur = x;
  for (const Layer& layer : layers_) {
    std::vector<double> next(layer.W.rows, 0.0);
    for (std::size_t i = 0; i < layer.W.rows; ++i) {
      const double* wr = layer.W.row(i);
      double s = layer.b[i];
      for (std::size_t j = 0; j < layer.W.cols; ++j) s += wr[j] * cur[j];
      next[i] = layer.act == Activation::kRelu ? std::max(0.0, s) : s;
    }
    cur = std::move(next);
  }
  return cur;
}

Matrix DenseNetwork::forward_batch(const Matrix& X, ForwardCache* cache) const {
  if (X.cols != input_dim())
    throw std::invalid_argument("forward_batch: expected input dim " +
                                std::to_string(input_dim()) + ", got " +
                                std::to_string(X.cols));
  if (cache) {
    cache->input = X;
    cache->post.clear();
    cache->post.reserve(layers_.size());
    cache->valid = true;
  }
  Matrix cur = X;
  for (const Layer& layer : layers_) {
    Matrix z = matmul_nt(cur, layer.W);  // [n x out]
    for (std::size_t r = 0; r < z.rows; ++r) {
      double* row = z.row(r);
      for (std::size_t j = 0; j < z.cols; ++j) {
        row[j] += layer.b[j];
        if (layer.act == Activation::kRelu && row[j] < 0.0) row[j] = 0.0;
      }
    }
    if (cache) cache->post.push_back(z);
    cur = std::move(z);
  }
  return cur;
}

GradientTape DenseNetwork::backward_batch(const ForwardCache& cache,
                                          const Matrix& upstream,
                                          Matrix* x_grad) const {
  if (!cache.valid)
    throw std::logic_error("backward_batch called before forward_batch");
  if (cache.post.size() != layers_.size())
    throw std::logic_error("backward_batch: cache does not match network");
  if (upstream.rows != cache.input.rows || upstream.cols != output_dim())
    throw std::invalid_argument("backward_batch: upstream shape mismatch");

  GradientTape tape = zero_tape();
  Matrix delta = upstream;  // dLoss/dPost for the current layer
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const Layer& layer = layers_[l];
    const Matrix& post = cache.post[l];
    if (layer.act == Activation::kRelu) {
      for (std::size_t i = 0; i < delta.a.size(); ++i)
        if (post.a[i] <= 0.0) delta.a[i] = 0.0;
    }
    const Matrix& below = l == 0 ? cache.input : cache.post[l - 1];
    tape.gw[l] = matmul_tn(delta, below);  // [out x in]
    for (std::size_t r = 0; r < delta.rows; ++r) {
      const double* row = delta.row(r);
      for (std::size_t j = 0; j < delta.cols; ++j) tape.gb[l][j] += row[j];
    }
    if (l > 0 || x_grad) {
      Matrix next_delta = matmul(delta, layer.W);  // [n x in]
      if (l == 0) {
        *x_grad = std::move(next_delta);
      } else {
        delta = std::move(next_delta);
      }
    }
  }
  return tape;
}

GradientTape DenseNetwork::backward(const std::vector<double>& x,
                                    const std::vector<double>& upstream) const {
  Matrix X(1, x.size());
  X.set_row(0, x);
  ForwardCache cache;
  forward_batch(X, &cache);
  Matrix U(1, upstream.size());
  U.set_row(0, upstream);
  return backward_batch(cache, U);
}

GradientTape DenseNetwork::zero_tape() const {
  GradientTape tape;
  tape.gw.reserve(layers_.size());
  tape.gb.reserve(layers_.size());
  for (const Layer& layer : layers_) {
    tape.gw.emplace_back(layer.W.rows, layer.W.cols);
    tape.gb.emplace_back(layer.b.size(), 0.0);
  }
  return tape;
}

void DenseNetwork::sgd_step(const GradientTape& tape, double lr) {
  if (lr < 0.0)
    throw std::invalid_argument("sgd_step: learning rate must be >= 0, got " +
                                std::to_string(lr));
  if (tape.gw.size() != layers_.size())
    throw std::invalid_argument("sgd_step: tape does not match network");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Layer& layer = layers_[l];
    if (tape.gw[l].rows != layer.W.rows || tape.gw[l].cols != layer.W.cols)
      throw std::invalid_argument("sgd_step: tape shape mismatch at layer " +
                                  std::to_string(l));
    for (std::size_t i = 0; i < layer.W.a.size(); ++i)
      layer.W.a[i] -= lr * tape.gw[l].a[i];
    for (std::size_t i = 0; i < layer.b.size(); ++i)
      layer.b[i] -= lr * tape.gb[l][i];
  }
}

std::size_t DenseNetwork::n_params() const {
  std::size_t n = 0;
  for (const Layer& layer : layers_) n += layer.W.a.size() + layer.b.size();
  return n;
}

double DenseNetwork::get_param(std::size_t i) const {
  for (const Layer& layer : layers_) {
    if (i < layer.W.a.size()) return layer.W.a[i];
    i -= layer.W.a.size();
    if (i < layer.b.size()) return layer.b[i];
    i -= layer.b.size();
  }
  throw std::out_of_range("get_param: index out of range");
}

void DenseNetwork::set_param(std::size_t i, double v) {
  for (Layer& layer : layers_) {
    if (i < layer.W.a.size()) {
      layer.W.a[i] = v;
      return;
    }
    i -= layer.W.a.size();
    if (i < layer.b.size()) {
      layer.b[i] = v;
      return;
    }
    i -= layer.b.size();
  }
  throw std::out_of_range("set_param: index out of range");
}

double DenseNetwork::tape_param(const GradientTape& tape, std::size_t i) const {
  for (std::size_t l = 0; l < tape.gw.size(); ++l) {
    if (i < tape.gw[l].a.size()) return tape.gw[l].a[i];
    i -= tape.gw[l].a.size();
    if (i < tape.gb[l].size()) return tape.gb[l][i];
    i -= tape.gb[l].size();
  }
  throw std::out_of_range("tape_param: index out of range");
}

nlohmann::json DenseNetwork::to_json() const {
  nlohmann::json j;
  j["format"] = "shapnn-dense-v1";
  j["layers"] = nlohmann::json::array();
  for (const Layer& layer : layers_) {
    nlohmann::json lj;
    lj["in"] = layer.W.cols;
    lj["out"] = layer.W.rows;
    lj["act"] = activation_name(layer.act);
    lj["w"] = layer.W.a;  // row-major
    lj["b"] = layer.b;
    j["layers"].push_back(std::move(lj));
  }
  return j;
}

DenseNetwork DenseNetwork::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "shapnn-dense-v1")
    throw std::invalid_argument("DenseNetwork::from_json: unknown format tag");
  DenseNetwork net;
  for (const auto& lj : j.at("layers")) {
    Layer layer;
    std::size_t in = lj.at("in").get<std::size_t>();
    std::size_t out = lj.at("out").get<std::size_t>();
    layer.W = Matrix(out, in);
    layer.W.a = lj.at("w").get<std::vector<double>>();
    if (layer.W.a.size() != in * out)
      throw std::invalid_argument("DenseNetwork::from_json: weight size mismatch");
    layer.b = lj.at("b").get<std::vector<double>>();
    if (layer.b.size() != out)
      throw std::invalid_argument("DenseNetwork::from_json: bias size mismatch");
    layer.act = activation_from_name(lj.at("act").get<std::string>());
    net.layers_.push_back(std::move(layer));
  }
  if (net.layers_.empty())
    throw std::invalid_argument("DenseNetwork::from_json: no layers");
  for (std::size_t l = 0; l + 1 < net.layers_.size(); ++l)
    if (net.layers_[l].W.rows != net.layers_[l + 1].W.cols)
      throw std::invalid_argument("DenseNetwork::from_json: layer dims do not chain");
  return net;
}

std::vector<double> softmax(const std::vector<double>& logits) {
  double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

void softmax_rows_inplace(Matrix& logits) {
  for (std::size_t r = 0; r < logits.rows; ++r) {
    double* row = logits.row(r);
    double m = row[0];
    for (std::size_t j = 1; j < logits.cols; ++j) m = std::max(m, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.cols; ++j) {
      row[j] = std::exp(row[j] - m);
      sum += row[j];
    }
    for (std::size_t j = 0; j < logits.cols; ++j) row[j] /= sum;
  }
}

namespace {

void validate_target(const double* t, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (t[i] < 0.0)
      throw std::invalid_argument("cross_entropy: negative target entry");
    sum += t[i];
  }
  if (std::fabs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("cross_entropy: target sums to " +
                                std::to_string(sum) + ", expected 1");
}

}  // namespace

CeResult softmax_cross_entropy(const std::vector<double>& logits,
                               const std::vector<double>& target) {
  if (logits.size() != target.size())
    throw std::invalid_argument("cross_entropy: size mismatch");
  validate_target(target.data(), target.size());
  double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - m);
  double lse = m + std::log(sum);
  CeResult res;
  res.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    double p = std::exp(logits[i] - lse);
    res.grad[i] = p - target[i];
    res.loss += target[i] * (lse - logits[i]);
  }
  return res;
}

CeBatchResult softmax_cross_entropy_batch(const Matrix& logits,
                                          const Matrix& targets) {
  if (logits.rows != targets.rows || logits.cols != targets.cols)
    throw std::invalid_argument("cross_entropy_batch: shape mismatch");
  if (logits.rows == 0)
    throw std::invalid_argument("cross_entropy_batch: empty batch");
  CeBatchResult res;
  res.grad = Matrix(logits.rows, logits.cols);
  double inv_n = 1.0 / static_cast<double>(logits.rows);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    const double* z = logits.row(r);
    const double* t = targets.row(r);
    validate_target(t, logits.cols);
    double m = z[0];
    for (std::size_t j = 1; j < logits.cols; ++j) m = std::max(m, z[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.cols; ++j) sum += std::exp(z[j] - m);
    double lse = m + std::log(sum);
    double* g = res.grad.row(r);
    for (std::size_t j = 0; j < logits.cols; ++j) {
      g[j] = (std::exp(z[j] - lse) - t[j]) * inv_n;
      res.loss += t[j] * (lse - z[j]) * inv_n;
    }
  }
  return res;
}

double gradient_check(DenseNetwork& net, const std::vector<double>& x,
                      const std::vector<double>& target, double eps,
                      LossKind kind, std::size_t stride) {
  if (!(eps > 0.0) || eps > 1e-3)
    throw std::invalid_argument("gradient_check: eps must be in (0, 1e-3]");
  if (stride == 0) throw std::invalid_argument("gradient_check: stride >= 1");

  auto loss_of = [&](void) -> double {
    std::vector<double> out = net.forward(x);
    if (kind == LossKind::kCrossEntropy)
      return softmax_cross_entropy(out, target).loss;
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      double d = out[i] - target[i];
      s += 0.5 * d * d;
    }
    return s;
  };

  std::vector<double> out = net.forward(x);
  std::vector<double> upstream;
  if (kind == LossKind::kCrossEntropy) {
    upstream = softmax_cross_entropy(out, target).grad;
  } else {
    upstream.resize(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) upstream[i] = out[i] - target[i];
  }
  GradientTape tape = net.backward(x, upstream);

  double max_rel = 0.0;
  std::size_t n = net.n_params();
  for (std::size_t i = 0; i < n; i += stride) {
    double orig = net.get_param(i);
    net.set_param(i, orig + eps);
    double lp = loss_of();
    net.set_param(i, orig - eps);
    double lm = loss_of();
    net.set_param(i, orig);
    double numeric = (lp - lm) / (2.0 * eps);
    double analytic = net.tape_param(tape, i);
    double denom = std::max({std::fabs(numeric), std::fabs(analytic), 1e-8});
    max_rel = std::max(max_rel, std::fabs(numeric - analytic) / denom);
  }
  return max_rel;
}

}  // namespace shapnn::nn
