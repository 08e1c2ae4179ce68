#pragma once

#include <span>
#include <vector>

#include "emtune/tensor.hpp"

namespace emtune {

// Anchor/positive/negative embedding batches, each B x D.
struct TripletBatch {
  Matrix anchor;
  Matrix positive;
  Matrix negative;
};

struct TripletLossOutput {
  double loss = 0.0;
  std::vector<double> dist_pos;  // squared distances anchor-positive per row
  std::vector<double> dist_neg;  // squared distances anchor-negative per row
  Matrix grad_anchor;
  Matrix grad_positive;
  Matrix grad_negative;
};

// Sum over rows of max(||a-p||^2 - ||a-n||^2 + margin, 0). At the hinge
// boundary the active branch is taken.
TripletLossOutput triplet_loss(const TripletBatch& batch, double margin);

struct CrossCorrelationOptions {
  // Subtract the per-dimension batch mean before normalizing.
  bool center = false;
};

inline constexpr double kCorrelationEpsilon = 1e-12;

// D x D batch cosine between anchor dimension i and positive dimension j.
// Columns with norm below kCorrelationEpsilon produce zero entries.
Matrix cross_correlation(const Matrix& anchor, const Matrix& positive,
                         CrossCorrelationOptions options = {});

struct LossOutput {
  double loss = 0.0;
  Matrix grad_anchor;
  Matrix grad_positive;
  // Empty when the loss ignores negatives.
  Matrix grad_negative;
};

inline constexpr double kDefaultBarlowLambda = 0.005;
inline constexpr double kDefaultCombinationBeta = 0.01;

// Redundancy-reduction loss: sum_i (1 - C_ii)^2 + lambda * sum_{i!=j} C_ij^2.
LossOutput barlow_twins_loss(const Matrix& anchor, const Matrix& positive, double lambda,
                             CrossCorrelationOptions options = {});

// triplet + beta * barlow(anchor, positive). The negative batch only
// receives the triplet gradient.
LossOutput combined_loss(const TripletBatch& batch, double margin, double lambda, double beta,
                         CrossCorrelationOptions options = {});

struct CrossEntropyOutput {
  double loss = 0.0;
  Matrix grad_logits;
};

// Mean over rows of -log softmax(logits)[label].
CrossEntropyOutput cross_entropy_loss(const Matrix& logits, std::span<const int> labels);

}  // namespace emtune
