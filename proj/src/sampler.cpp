#include "emtune/sampler.hpp"

#include <map>

#include "emtune/error.hpp"
#include "emtune/log.hpp"
#include "emtune/random.hpp"

namespace emtune {

TripletEpoch sample_triplets(std::span<const int> labels, const TripletSamplerOptions& options) {
  if (options.batch_size < 2) {
    throw ConfigError("sample_triplets: batch size must be at least 2, got " +
                      std::to_string(options.batch_size));
  }
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
  if (members.size() < 2) {
    throw ConfigError("sample_triplets: need at least 2 classes, found " +
                      std::to_string(members.size()));
  }

  std::map<int, std::vector<std::size_t>> others;
  for (const auto& [label, _] : members) {
    auto& list = others[label];
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] != label) list.push_back(i);
  }

  TripletEpoch out;
  std::vector<std::size_t> anchors;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (members[labels[i]].size() >= 2) {
      anchors.push_back(i);
    } else {
      out.skipped_anchors.push_back(i);
    }
  }
  if (!out.skipped_anchors.empty()) {
    log_warning("sample_triplets: " + std::to_string(out.skipped_anchors.size()) +
                " sample(s) belong to single-sample classes and are never used as anchors");
  }

  Rng rng(Rng::derive(options.seed, options.epoch));
  rng.shuffle(anchors.begin(), anchors.end());

  TripletIndexBatch batch;
  batch.reserve(options.batch_size);
  for (std::size_t anchor : anchors) {
    const auto& same = members[labels[anchor]];
    // Draw among the class minus the anchor itself.
    auto pick = rng.below(same.size() - 1);
    std::size_t positive = same[pick];
    if (positive == anchor) positive = same.back();
    const auto& diff = others[labels[anchor]];
    const std::size_t negative = diff[rng.below(diff.size())];
    batch.push_back({anchor, positive, negative});
    if (batch.size() == options.batch_size) {
      out.batches.push_back(std::move(batch));
      batch.clear();
      batch.reserve(options.batch_size);
    }
  }
  if (options.keep_partial && batch.size() >= 2) out.batches.push_back(std::move(batch));
  return out;
}

}  // namespace emtune
