#include "emtune/metrics.hpp"

#include <cmath>
#include <limits>

#include "emtune/error.hpp"

namespace emtune {
namespace {

void require_labels(const LabeledEmbeddingSet& set) {
  if (set.labels.size() != set.embeddings.rows()) {
    throw DimensionError("labeled set: " + std::to_string(set.labels.size()) +
                         " labels for embeddings " + set.embeddings.shape_string());
  }
  for (std::size_t i = 0; i < set.labels.size(); ++i) {
    const int l = set.labels[i];
    if (l < 0 || static_cast<std::size_t>(l) >= set.num_classes) {
      throw DataError("labeled set: label " + std::to_string(l) + " at row " + std::to_string(i) +
                      " outside [0, " + std::to_string(set.num_classes) + ")");
    }
  }
}

double euclidean(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

}  // namespace

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw DataError("accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                    std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw DataError("accuracy: no samples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::map<std::string, double> default_age_midpoints() {
  return {{"twenties", 25.0}, {"thirties", 35.0}, {"forties", 45.0}, {"fifties", 55.0},
          {"sixties", 65.0}};
}

double age_mae(std::span<const int> predictions, std::span<const int> labels,
               std::span<const double> midpoints) {
  if (predictions.size() != labels.size()) {
    throw DataError("age_mae: " + std::to_string(predictions.size()) + " predictions for " +
                    std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw DataError("age_mae: no samples");
  auto midpoint = [&](int cls) {
    if (cls < 0 || static_cast<std::size_t>(cls) >= midpoints.size()) {
      throw ConfigError("age_mae: no midpoint defined for class " + std::to_string(cls));
    }
    return midpoints[static_cast<std::size_t>(cls)];
  };
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    total += std::abs(midpoint(predictions[i]) - midpoint(labels[i]));
  return total / static_cast<double>(labels.size());
}

Matrix class_centroids(const LabeledEmbeddingSet& set) {
  require_labels(set);
  Matrix centroids(set.num_classes, set.embeddings.cols());
  std::vector<std::size_t> counts(set.num_classes, 0);
  for (std::size_t i = 0; i < set.labels.size(); ++i) {
    const auto c = static_cast<std::size_t>(set.labels[i]);
    ++counts[c];
    auto row = set.embeddings.row(i);
    auto out = centroids.row(c);
    for (std::size_t k = 0; k < row.size(); ++k) out[k] += row[k];
  }
  for (std::size_t c = 0; c < set.num_classes; ++c) {
    if (counts[c] == 0) throw DataError("class " + std::to_string(c) + " has no members");
    for (auto& v : centroids.row(c)) v /= static_cast<double>(counts[c]);
  }
  return centroids;
}

namespace {

std::vector<double> class_scatter(const LabeledEmbeddingSet& set, const Matrix& centroids) {
  std::vector<double> sums(set.num_classes, 0.0);
  std::vector<std::size_t> counts(set.num_classes, 0);
  for (std::size_t i = 0; i < set.labels.size(); ++i) {
    const auto c = static_cast<std::size_t>(set.labels[i]);
    sums[c] += euclidean(set.embeddings.row(i), centroids.row(c));
    ++counts[c];
  }
  for (std::size_t c = 0; c < set.num_classes; ++c) sums[c] /= static_cast<double>(counts[c]);
  return sums;
}

}  // namespace

InvariantDistance invariant_distance(const LabeledEmbeddingSet& set) {
  const Matrix centroids = class_centroids(set);
  InvariantDistance out;
  out.per_class = class_scatter(set, centroids);
  double total = 0.0;
  for (double d : out.per_class) total += d;
  out.mean = out.per_class.empty() ? 0.0 : total / static_cast<double>(out.per_class.size());
  return out;
}

namespace {

double davies_bouldin_from(const Matrix& centroids, const std::vector<double>& scatter) {
  const std::size_t k = centroids.rows();
  if (k < 2) throw DataError("davies_bouldin: needs at least 2 classes");
  double total = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t d = 0; d < k; ++d) {
      if (d == c) continue;
      const double separation = euclidean(centroids.row(c), centroids.row(d));
      if (separation == 0.0) {
        throw DegenerateGeometryError("davies_bouldin: centroids of classes " + std::to_string(c) +
                                      " and " + std::to_string(d) + " coincide");
      }
      worst = std::max(worst, (scatter[c] + scatter[d]) / separation);
    }
    total += worst;
  }
  return total / static_cast<double>(k);
}

}  // namespace

double davies_bouldin(const LabeledEmbeddingSet& set) {
  const Matrix centroids = class_centroids(set);
  return davies_bouldin_from(centroids, class_scatter(set, centroids));
}

ClusterReport cluster_report(const LabeledEmbeddingSet& set) {
  ClusterReport report;
  report.centroids = class_centroids(set);
  report.invariant_distance = class_scatter(set, report.centroids);
  double total = 0.0;
  for (double d : report.invariant_distance) total += d;
  report.mean_invariant_distance = total / static_cast<double>(report.invariant_distance.size());
  report.davies_bouldin = davies_bouldin_from(report.centroids, report.invariant_distance);
  return report;
}

}  // namespace emtune
