#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "emtune/tensor.hpp"

namespace emtune {

enum class Split { train, dev, test };

const char* split_name(Split split);
// Throws DataError for anything other than train|dev|test.
Split parse_split(const std::string& name);

struct ManifestRecord {
  std::string id;
  std::string feature_path;  // relative to the manifest directory
  std::string label;
  Split split = Split::train;
  std::size_t line = 0;      // 1-based source line
};

struct Manifest {
  std::filesystem::path base_dir;
  std::size_t feature_dim = 0;  // 0 when the manifest declares none
  std::vector<ManifestRecord> records;
  std::map<std::string, int> label_map;
  std::map<std::string, double> label_midpoints;

  std::size_t num_classes() const { return label_map.size(); }
  int class_index(const std::string& label) const;
  // Labels ordered by class index.
  std::vector<std::string> labels_by_index() const;
  // Midpoints ordered by class index; empty unless every class has one.
  std::vector<double> midpoints_by_index() const;
};

// One JSON object per line. An optional header object (no "id" key) may
// declare "dim", "labels" (class order) and "midpoints" (label -> value).
// Records: {"id", "path", "label", "split"}. Without a "labels" header,
// class indices follow sorted label order.
Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir);
Manifest load_manifest(const std::filesystem::path& path);
std::string format_manifest(const Manifest& manifest);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

// Frame-level features for one utterance, widened from f32.
struct FeatureSequence {
  Matrix frames;  // frames x dim
};

inline constexpr std::uint32_t kFeatVersion = 1;

// "FEAT", u32 version, u32 frames, u32 dim, frames*dim f32 LE, row-major.
std::string encode_feature_file(const FeatureSequence& seq);
// expected_dim == 0 accepts any dimension.
FeatureSequence decode_feature_file(std::string_view bytes, std::size_t expected_dim);
void write_feature_file(const FeatureSequence& seq, const std::filesystem::path& path);
FeatureSequence read_feature_file(const std::filesystem::path& path, std::size_t expected_dim);

struct SynthSpec {
  std::size_t num_classes = 4;
  std::size_t samples_per_class = 200;
  std::size_t dim = 64;
  std::size_t min_frames = 10;
  std::size_t max_frames = 30;
  double separation = 8.0;
  double noise = 2.0;
  std::uint64_t seed = 7;

  void validate() const;
};

// Writes <out_dir>/features/*.feat and <out_dir>/manifest.jsonl and returns
// the manifest. Per class, samples cycle through a 14/3/3 train/dev/test
// pattern.
Manifest synth_generate(const SynthSpec& spec, const std::filesystem::path& out_dir);

// Class mean vectors at exact pairwise distance spec.separation.
std::vector<std::vector<double>> synth_class_means(const SynthSpec& spec);

// Mean-pooled features of every record in one split.
struct PooledSplit {
  Matrix features;  // N x dim
  std::vector<int> labels;
  std::vector<std::string> ids;

  std::size_t size() const { return labels.size(); }
};

struct Dataset {
  Manifest manifest;
  PooledSplit train;
  PooledSplit dev;
  PooledSplit test;

  const PooledSplit& split(Split s) const;
  std::size_t feature_dim() const { return manifest.feature_dim; }
  std::size_t num_classes() const { return manifest.num_classes(); }
};

// Reads and pools every feature file in the manifest. The feature dimension
// is taken from the manifest header, or the first file when undeclared.
Dataset load_dataset(const Manifest& manifest);
Dataset load_dataset(const std::filesystem::path& manifest_path);

}  // namespace emtune
