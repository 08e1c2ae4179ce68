#pragma once

#include <cstdint>
#include <vector>

#include "emtune/tensor.hpp"

namespace emtune {

struct PcaResult {
  Matrix coordinates;  // N x 2
  Matrix components;   // 2 x D, unit rows
  double variance[2] = {0.0, 0.0};
  double total_variance = 0.0;
};

struct PcaOptions {
  std::size_t max_iterations = 1000;
  std::uint64_t seed = 0;
};

// Top-2 principal components by orthogonal subspace iteration.
PcaResult pca_project(const Matrix& data, const PcaOptions& options = {});

struct TsneOptions {
  double perplexity = 30.0;
  std::size_t iterations = 1000;
  std::uint64_t seed = 0;
  double learning_rate = 200.0;
  double exaggeration = 12.0;
  std::size_t exaggeration_iterations = 250;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  // Record the KL divergence every this many iterations; 0 disables.
  std::size_t cost_interval = 0;
};

struct TsneResult {
  Matrix coordinates;  // N x 2
  // (iteration, KL(P || Q)) pairs against the unexaggerated P.
  std::vector<std::pair<std::size_t, double>> costs;
};

inline constexpr std::size_t kTsneMaxPoints = 5000;

// Exact O(N^2) t-SNE.
TsneResult tsne_project(const Matrix& data, const TsneOptions& options = {});

// Row-stochastic conditional affinities with per-row bandwidth found by
// bisection on the entropy. Exposed for testing.
Matrix tsne_conditional_affinities(const Matrix& data, double perplexity);

// Fraction of points whose nearest other point (Euclidean) shares the label.
double neighbor_purity(const Matrix& coordinates, const std::vector<int>& labels);

}  // namespace emtune
