#pragma once

#include <optional>
#include <span>
#include <vector>

#include "emtune/tensor.hpp"

namespace emtune {

// Fully connected layer parameters: y = x * weight + bias.
// weight is fan_in x fan_out, bias is 1 x fan_out.
struct AffineParams {
  Matrix weight;
  Matrix bias;

  std::size_t fan_in() const { return weight.rows(); }
  std::size_t fan_out() const { return weight.cols(); }
  friend bool operator==(const AffineParams&, const AffineParams&) = default;
};

Matrix affine_forward(const Matrix& x, const Matrix& weight, std::span<const double> bias);
Matrix relu_forward(const Matrix& x);

enum class LayerKind { affine, relu };

// Forward-pass record needed by layer_backward.
struct LayerCache {
  LayerKind kind = LayerKind::affine;
  std::optional<Matrix> input;
};

struct LayerGradients {
  Matrix input_grad;
  // Empty for parameter-free layers.
  Matrix weight_grad;
  Matrix bias_grad;
};

// Exact gradients of one layer. For affine layers `params` must be non-null.
// The ReLU subgradient at exactly zero is zero. Throws StateError when the
// cache holds no forward input.
LayerGradients layer_backward(const LayerCache& cache, const AffineParams* params,
                              const Matrix& upstream);

// Alternating affine/ReLU stack whose last affine layer has no activation.
class Mlp {
public:
  Mlp() = default;
  explicit Mlp(std::vector<AffineParams> layers);

  struct Tape {
    std::vector<LayerCache> caches;
  };

  struct Gradients {
    Matrix input_grad;
    // Interleaved weight, bias per layer; matches parameters() ordering.
    std::vector<Matrix> params;
  };

  Matrix forward(const Matrix& x) const;
  Matrix forward(const Matrix& x, Tape& tape) const;
  Gradients backward(const Tape& tape, const Matrix& upstream) const;

  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t num_layers() const { return layers_.size(); }
  const std::vector<AffineParams>& layers() const { return layers_; }
  std::vector<AffineParams>& layers() { return layers_; }

  friend bool operator==(const Mlp&, const Mlp&) = default;

private:
  std::vector<AffineParams> layers_;
};

}  // namespace emtune
