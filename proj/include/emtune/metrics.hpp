#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "emtune/tensor.hpp"

namespace emtune {

double accuracy(std::span<const int> predictions, std::span<const int> labels);

// Default decade-bucket midpoints: twenties..sixties-and-above.
std::map<std::string, double> default_age_midpoints();

// Mean |midpoint(pred) - midpoint(true)| with midpoints indexed by class.
double age_mae(std::span<const int> predictions, std::span<const int> labels,
               std::span<const double> midpoints);

struct LabeledEmbeddingSet {
  Matrix embeddings;  // N x D
  std::vector<int> labels;
  std::size_t num_classes = 0;
};

struct InvariantDistance {
  std::vector<double> per_class;
  double mean = 0.0;  // unweighted over classes
};

// Mean unsquared Euclidean distance to the class centroid.
InvariantDistance invariant_distance(const LabeledEmbeddingSet& set);

double davies_bouldin(const LabeledEmbeddingSet& set);

struct ClusterReport {
  Matrix centroids;  // K x D
  std::vector<double> invariant_distance;
  double mean_invariant_distance = 0.0;
  double davies_bouldin = 0.0;
};

ClusterReport cluster_report(const LabeledEmbeddingSet& set);

// Class centroids, K x D. Throws DataError if a class is empty.
Matrix class_centroids(const LabeledEmbeddingSet& set);

}  // namespace emtune
