#include "emtune/layers.hpp"

#include <algorithm>

#include "emtune/error.hpp"

namespace emtune {

Matrix affine_forward(const Matrix& x, const Matrix& weight, std::span<const double> bias) {
  if (x.cols() != weight.rows()) {
    throw DimensionError("affine_forward: input " + x.shape_string() + " does not match weight " +
                         weight.shape_string());
  }
  if (bias.size() != weight.cols()) {
    throw DimensionError("affine_forward: bias length " + std::to_string(bias.size()) +
                         " does not match weight " + weight.shape_string());
  }
  Matrix out = matmul(x, weight);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
  }
  return out;
}

Matrix relu_forward(const Matrix& x) {
  Matrix out = x;
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

LayerGradients layer_backward(const LayerCache& cache, const AffineParams* params,
                              const Matrix& upstream) {
  if (!cache.input) throw StateError("layer_backward: no forward input cached");
  const Matrix& x = *cache.input;
  LayerGradients grads;

  if (cache.kind == LayerKind::relu) {
    require_same_shape(x, upstream, "relu backward");
    grads.input_grad = upstream;
    auto g = grads.input_grad.values();
    auto in = x.values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!(in[i] > 0.0)) g[i] = 0.0;
    }
    return grads;
  }

  if (params == nullptr) throw StateError("layer_backward: affine layer without parameters");
  if (upstream.rows() != x.rows() || upstream.cols() != params->fan_out()) {
    throw DimensionError("affine backward: upstream " + upstream.shape_string() +
                         " does not match output " + std::to_string(x.rows()) + "x" +
                         std::to_string(params->fan_out()));
  }
  grads.input_grad = matmul_nt(upstream, params->weight);
  grads.weight_grad = matmul_tn(x, upstream);
  grads.bias_grad = column_sums(upstream);
  return grads;
}

Mlp::Mlp(std::vector<AffineParams> layers) : layers_(std::move(layers)) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.bias.rows() != 1 || l.bias.cols() != l.fan_out()) {
      throw DimensionError("layer " + std::to_string(i) + ": bias " + l.bias.shape_string() +
                           " does not match weight " + l.weight.shape_string());
    }
    if (i > 0 && layers_[i - 1].fan_out() != l.fan_in()) {
      throw DimensionError("layer " + std::to_string(i) + ": weight " + l.weight.shape_string() +
                           " does not chain from " + layers_[i - 1].weight.shape_string());
    }
  }
}

Matrix Mlp::forward(const Matrix& x) const {
  Matrix h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = affine_forward(h, layers_[i].weight, layers_[i].bias.values());
    if (i + 1 < layers_.size()) h = relu_forward(h);
  }
  return h;
}

Matrix Mlp::forward(const Matrix& x, Tape& tape) const {
  tape.caches.clear();
  Matrix h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    tape.caches.push_back({LayerKind::affine, h});
    h = affine_forward(h, layers_[i].weight, layers_[i].bias.values());
    if (i + 1 < layers_.size()) {
      tape.caches.push_back({LayerKind::relu, h});
      h = relu_forward(h);
    }
  }
  return h;
}

Mlp::Gradients Mlp::backward(const Tape& tape, const Matrix& upstream) const {
  const std::size_t expected = layers_.empty() ? 0 : 2 * layers_.size() - 1;
  if (tape.caches.size() != expected) {
    throw StateError("Mlp::backward: tape holds " + std::to_string(tape.caches.size()) +
                     " layer records, expected " + std::to_string(expected) +
                     " (was forward run with a tape?)");
  }
  Gradients grads;
  grads.params.resize(2 * layers_.size());
  Matrix g = upstream;
  std::size_t layer = layers_.size();
  for (std::size_t c = tape.caches.size(); c-- > 0;) {
    const auto& cache = tape.caches[c];
    if (cache.kind == LayerKind::relu) {
      g = layer_backward(cache, nullptr, g).input_grad;
      continue;
    }
    --layer;
    auto lg = layer_backward(cache, &layers_[layer], g);
    grads.params[2 * layer] = std::move(lg.weight_grad);
    grads.params[2 * layer + 1] = std::move(lg.bias_grad);
    g = std::move(lg.input_grad);
  }
  grads.input_grad = std::move(g);
  return grads;
}

std::vector<Matrix*> Mlp::parameters() {
  std::vector<Matrix*> out;
  for (auto& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Matrix*> Mlp::parameters() const {
  std::vector<const Matrix*> out;
  for (const auto& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::size_t Mlp::input_dim() const { return layers_.empty() ? 0 : layers_.front().fan_in(); }
std::size_t Mlp::output_dim() const { return layers_.empty() ? 0 : layers_.back().fan_out(); }

}  // namespace emtune
