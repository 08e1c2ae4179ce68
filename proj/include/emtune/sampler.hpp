#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace emtune {

struct IndexTriple {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
  friend bool operator==(const IndexTriple&, const IndexTriple&) = default;
};

using TripletIndexBatch = std::vector<IndexTriple>;

struct TripletEpoch {
  std::vector<TripletIndexBatch> batches;
  // Samples that could not serve as anchors (their class has one sample).
  std::vector<std::size_t> skipped_anchors;
};

struct TripletSamplerOptions {
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::uint64_t epoch = 1;
  // Keep a final batch holding fewer than batch_size (but >= 2) triples.
  bool keep_partial = true;
};

// One epoch visits every eligible anchor exactly once in a seeded shuffle.
// Positives are drawn uniformly from the anchor's class minus the anchor,
// negatives uniformly from all other classes. Throws ConfigError with fewer
// than two classes or batch_size < 2.
TripletEpoch sample_triplets(std::span<const int> labels, const TripletSamplerOptions& options);

}  // namespace emtune
