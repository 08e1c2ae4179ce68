#include "emtune/model.hpp"

#include <cmath>
#include <cstring>

#include "emtune/error.hpp"
#include "emtune/random.hpp"

namespace emtune {

void EncoderConfig::validate() const {
  if (input_dim == 0) throw ConfigError("encoder: input dimension must be positive");
  if (bottleneck_dim < 2) {
    throw ConfigError("encoder: bottleneck dimension " + std::to_string(bottleneck_dim) +
                      " must be at least 2");
  }
  if (bottleneck_dim >= input_dim) {
    throw ConfigError("encoder: bottleneck dimension " + std::to_string(bottleneck_dim) +
                      " must be smaller than the input dimension " + std::to_string(input_dim));
  }
  for (auto h : hidden_dims) {
    if (h == 0) throw ConfigError("encoder: hidden layer widths must be positive");
  }
}

void AdapterShape::validate() const {
  if (input_dim == 0 || hidden_dim == 0) {
    throw ConfigError("adapter: input and hidden widths must be positive");
  }
  if (num_classes < 2) {
    throw ConfigError("adapter: needs at least 2 classes, got " + std::to_string(num_classes));
  }
}

Matrix Encoder::forward(const Matrix& pooled) const { return encoder_forward(*this, pooled); }
Matrix Adapter::forward(const Matrix& embeddings) const { return adapter_forward(*this, embeddings); }

std::vector<AffineParams> init_layers(std::span<const std::size_t> widths, std::uint64_t seed) {
  std::vector<AffineParams> layers;
  Rng rng(seed);
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const std::size_t fan_in = widths[i];
    const std::size_t fan_out = widths[i + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    AffineParams layer{Matrix(fan_in, fan_out), Matrix(1, fan_out)};
    for (auto& w : layer.weight.values()) w = rng.uniform(-bound, bound);
    layers.push_back(std::move(layer));
  }
  return layers;
}

Encoder init_encoder(const EncoderConfig& config) {
  config.validate();
  std::vector<std::size_t> widths{config.input_dim};
  widths.insert(widths.end(), config.hidden_dims.begin(), config.hidden_dims.end());
  widths.push_back(config.bottleneck_dim);
  return Encoder{config, Mlp(init_layers(widths, config.seed))};
}

Adapter init_adapter(const AdapterShape& shape, std::uint64_t seed) {
  shape.validate();
  const std::size_t widths[] = {shape.input_dim, shape.hidden_dim, shape.num_classes};
  return Adapter{shape, Mlp(init_layers(widths, seed))};
}

Matrix mean_pool(const Matrix& frames) {
  if (frames.rows() == 0) throw DataError("mean_pool: sequence has no frames");
  Matrix pooled = column_sums(frames);
  pooled *= 1.0 / static_cast<double>(frames.rows());
  return pooled;
}

Matrix encoder_forward(const Encoder& encoder, const Matrix& pooled) {
  if (pooled.cols() != encoder.net.input_dim()) {
    throw DimensionError("encoder_forward: input " + pooled.shape_string() +
                         " does not match encoder input dimension " +
                         std::to_string(encoder.net.input_dim()));
  }
  return encoder.net.forward(pooled);
}

Matrix adapter_forward(const Adapter& adapter, const Matrix& embeddings) {
  if (embeddings.cols() != adapter.net.input_dim()) {
    throw DimensionError("adapter_forward: input " + embeddings.shape_string() +
                         " does not match adapter input dimension " +
                         std::to_string(adapter.net.input_dim()));
  }
  return adapter.net.forward(embeddings);
}

std::uint64_t parameter_hash(const Mlp& net) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (const Matrix* p : net.parameters()) {
    for (double v : p->values()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof v);
      for (unsigned char b : bytes) {
        hash ^= b;
        hash *= 0x100000001b3ULL;
      }
    }
  }
  return hash;
}

}  // namespace emtune
