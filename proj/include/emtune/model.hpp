#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "emtune/layers.hpp"
#include "emtune/tensor.hpp"

namespace emtune {

struct EncoderConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims{256};
  std::size_t bottleneck_dim = 128;
  std::uint64_t seed = 0;

  // Throws ConfigError unless 2 <= bottleneck_dim < input_dim and no
  // hidden width is zero.
  void validate() const;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct AdapterShape {
  std::size_t input_dim = 0;  // the encoder bottleneck
  std::size_t hidden_dim = 256;
  std::size_t num_classes = 0;

  void validate() const;
  friend bool operator==(const AdapterShape&, const AdapterShape&) = default;
};

// Feed-forward projection from pooled features to the embedding space.
struct Encoder {
  EncoderConfig config;
  Mlp net;

  Matrix forward(const Matrix& pooled) const;
  friend bool operator==(const Encoder&, const Encoder&) = default;
};

// affine -> ReLU -> affine classifier head on top of embeddings.
struct Adapter {
  AdapterShape shape;
  Mlp net;

  Matrix forward(const Matrix& embeddings) const;
  friend bool operator==(const Adapter&, const Adapter&) = default;
};

// Weights uniform in +-sqrt(6 / fan_in), biases zero.
std::vector<AffineParams> init_layers(std::span<const std::size_t> widths, std::uint64_t seed);
Encoder init_encoder(const EncoderConfig& config);
Adapter init_adapter(const AdapterShape& shape, std::uint64_t seed);

// Per-dimension mean over frames of a frames x dim matrix, as 1 x dim.
Matrix mean_pool(const Matrix& frames);

Matrix encoder_forward(const Encoder& encoder, const Matrix& pooled);
Matrix adapter_forward(const Adapter& adapter, const Matrix& embeddings);

// FNV-1a over the raw bytes of every parameter, in declaration order.
std::uint64_t parameter_hash(const Mlp& net);

}  // namespace emtune
