#include "emtune/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "emtune/error.hpp"
#include "emtune/model.hpp"
#include "emtune/random.hpp"

namespace emtune {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

const char* split_name(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "dev") return Split::dev;
  if (name == "test") return Split::test;
  throw DataError("unknown split '" + name + "' (must be train|dev|test)");
}

int Manifest::class_index(const std::string& label) const {
  auto it = label_map.find(label);
  if (it == label_map.end()) throw DataError("label '" + label + "' is not in the label map");
  return it->second;
}

std::vector<std::string> Manifest::labels_by_index() const {
  std::vector<std::string> out(label_map.size());
  for (const auto& [label, index] : label_map) out[static_cast<std::size_t>(index)] = label;
  return out;
}

std::vector<double> Manifest::midpoints_by_index() const {
  if (label_midpoints.empty()) return {};
  std::vector<double> out(label_map.size());
  for (const auto& [label, index] : label_map) {
    auto it = label_midpoints.find(label);
    if (it == label_midpoints.end()) return {};
    out[static_cast<std::size_t>(index)] = it->second;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

Manifest parse_manifest(std::string_view text, const fs::path& base_dir) {
  Manifest manifest;
  manifest.base_dir = base_dir;
  std::vector<std::string> errors;
  std::vector<std::string> header_labels;
  bool has_header_labels = false;
  std::map<std::string, std::vector<std::size_t>> id_lines;

  std::istringstream lines{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      errors.push_back(where + "not a JSON object (" + e.what() + ")");
      continue;
    }
    if (!obj.is_object()) {
      errors.push_back(where + "not a JSON object");
      continue;
    }
    try {
      if (!obj.contains("id")) {
        if (!manifest.records.empty()) {
          errors.push_back(where + "header object must precede records");
          continue;
        }
        if (obj.contains("dim")) manifest.feature_dim = obj.at("dim").get<std::size_t>();
        if (obj.contains("labels")) {
          header_labels = obj.at("labels").get<std::vector<std::string>>();
          has_header_labels = true;
        }
        if (obj.contains("midpoints")) {
          manifest.label_midpoints = obj.at("midpoints").get<std::map<std::string, double>>();
        }
        continue;
      }
      ManifestRecord rec;
      rec.id = obj.at("id").get<std::string>();
      rec.feature_path = obj.at("path").get<std::string>();
      rec.label = obj.at("label").get<std::string>();
      rec.line = line_no;
      const auto split = obj.at("split").get<std::string>();
      try {
        rec.split = parse_split(split);
      } catch (const DataError& e) {
        errors.push_back(where + e.what());
        continue;
      }
      id_lines[rec.id].push_back(line_no);
      manifest.records.push_back(std::move(rec));
    } catch (const json::exception& e) {
      errors.push_back(where + "bad record field (" + e.what() + ")");
    }
  }

  for (const auto& [id, lines] : id_lines) {
    if (lines.size() < 2) continue;
    std::ostringstream os;
    os << "duplicate id '" << id << "' on lines ";
    for (std::size_t i = 0; i < lines.size(); ++i) os << (i ? "," : "") << lines[i];
    errors.push_back(os.str());
  }

  if (has_header_labels) {
    for (std::size_t i = 0; i < header_labels.size(); ++i) {
      if (!manifest.label_map.emplace(header_labels[i], static_cast<int>(i)).second) {
        errors.push_back("header lists label '" + header_labels[i] + "' twice");
      }
    }
    for (const auto& rec : manifest.records) {
      if (!manifest.label_map.contains(rec.label)) {
        errors.push_back("line " + std::to_string(rec.line) + ": label '" + rec.label +
                         "' is not declared in the header labels");
      }
    }
  } else {
    std::set<std::string> labels;
    for (const auto& rec : manifest.records) labels.insert(rec.label);
    int index = 0;
    for (const auto& l : labels) manifest.label_map[l] = index++;
  }
  for (const auto& [label, value] : manifest.label_midpoints) {
    if (!manifest.label_map.contains(label)) {
      errors.push_back("midpoint given for unknown label '" + label + "'");
    } else if (!std::isfinite(value)) {
      errors.push_back("midpoint for label '" + label + "' is not finite");
    }
  }

  if (!errors.empty()) {
    std::string msg = "invalid manifest";
    for (const auto& e : errors) msg += "\n  " + e;
    throw DataError(msg);
  }
  return manifest;
}

Manifest load_manifest(const fs::path& path) {
  const std::string text = detail::read_file_bytes(path.string(), "manifest");
  try {
    return parse_manifest(text, path.parent_path());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string format_manifest(const Manifest& manifest) {
  std::string out;
  ordered_json header;
  if (manifest.feature_dim) header["dim"] = manifest.feature_dim;
  header["labels"] = manifest.labels_by_index();
  if (!manifest.label_midpoints.empty()) header["midpoints"] = manifest.label_midpoints;
  out += header.dump() + "\n";
  for (const auto& rec : manifest.records) {
    ordered_json line;
    line["id"] = rec.id;
    line["path"] = rec.feature_path;
    line["label"] = rec.label;
    line["split"] = split_name(rec.split);
    out += line.dump() + "\n";
  }
  return out;
}

void write_manifest(const Manifest& manifest, const fs::path& path) {
  detail::write_file_bytes(path.string(), format_manifest(manifest), "manifest");
}

// ---------------------------------------------------------------------------
// FEAT files

namespace {
constexpr std::string_view kFeatMagic = "FEAT";
}

std::string encode_feature_file(const FeatureSequence& seq) {
  detail::ByteWriter w;
  w.bytes(kFeatMagic);
  w.le<std::uint32_t>(kFeatVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(seq.frames.rows()));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(seq.frames.cols()));
  for (double v : seq.frames.values()) w.f32(static_cast<float>(v));
  return w.take();
}

FeatureSequence decode_feature_file(std::string_view bytes, std::size_t expected_dim) {
  detail::ByteReader r(bytes, "feature file");
  if (r.bytes(kFeatMagic.size()) != kFeatMagic) throw FormatError("feature file: bad magic bytes");
  const auto version = r.le<std::uint32_t>();
  if (version != kFeatVersion) {
    throw FormatError("feature file: unsupported version " + std::to_string(version));
  }
  const auto frames = r.le<std::uint32_t>();
  const auto dim = r.le<std::uint32_t>();
  if (frames == 0) throw DataError("feature file: sequence has zero frames");
  if (dim == 0) throw DataError("feature file: dimension is zero");
  if (expected_dim != 0 && dim != expected_dim) {
    throw DataError("feature file: dimension " + std::to_string(dim) + " does not match expected " +
                    std::to_string(expected_dim));
  }
  const std::size_t count = static_cast<std::size_t>(frames) * dim;
  if (r.remaining() < count * sizeof(float)) {
    throw ParseError("feature file: truncated payload, header promises " + std::to_string(count) +
                         " floats but only " + std::to_string(r.remaining()) + " byte(s) follow",
                     r.offset() + (r.remaining() / sizeof(float)) * sizeof(float));
  }
  FeatureSequence seq{Matrix(frames, dim)};
  for (auto& v : seq.frames.values()) {
    const float f = r.f32();
    if (!std::isfinite(f)) {
      throw DataError("feature file: non-finite value at byte offset " +
                      std::to_string(r.offset() - sizeof(float)));
    }
    v = static_cast<double>(f);
  }
  if (r.remaining() != 0) {
    throw ParseError("feature file: " + std::to_string(r.remaining()) + " trailing byte(s)",
                     r.offset());
  }
  return seq;
}

void write_feature_file(const FeatureSequence& seq, const fs::path& path) {
  detail::write_file_bytes(path.string(), encode_feature_file(seq), "feature file");
}

FeatureSequence read_feature_file(const fs::path& path, std::size_t expected_dim) {
  const std::string bytes = detail::read_file_bytes(path.string(), "feature file");
  try {
    return decode_feature_file(bytes, expected_dim);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.detail(), e.offset());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Synthetic clusters

void SynthSpec::validate() const {
  if (num_classes < 2) throw ConfigError("synth: need at least 2 classes");
  if (samples_per_class == 0) throw ConfigError("synth: samples per class must be positive");
  if (dim == 0) throw ConfigError("synth: dimension must be positive");
  if (num_classes > dim) {
    throw ConfigError("synth: " + std::to_string(num_classes) + " classes cannot be placed " +
                      "equidistantly in " + std::to_string(dim) + " dimensions");
  }
  if (min_frames == 0 || min_frames > max_frames) {
    throw ConfigError("synth: frame range [" + std::to_string(min_frames) + ", " +
                      std::to_string(max_frames) + "] is invalid");
  }
  if (!(separation >= 0.0) || !std::isfinite(separation)) {
    throw ConfigError("synth: separation must be >= 0");
  }
  if (!(noise > 0.0) || !std::isfinite(noise)) throw ConfigError("synth: noise must be > 0");
}

std::vector<std::vector<double>> synth_class_means(const SynthSpec& spec) {
  spec.validate();
  // Orthonormal random directions scaled by separation / sqrt(2) sit at
  // pairwise distance exactly `separation`.
  Rng rng(Rng::derive(spec.seed, 0));
  std::vector<std::vector<double>> basis;
  while (basis.size() < spec.num_classes) {
    std::vector<double> v(spec.dim);
    for (auto& x : v) x = rng.normal();
    for (const auto& b : basis) {
      double dot = 0.0;
      for (std::size_t k = 0; k < spec.dim; ++k) dot += v[k] * b[k];
      for (std::size_t k = 0; k < spec.dim; ++k) v[k] -= dot * b[k];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-6) continue;
    for (auto& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  const double scale = spec.separation / std::sqrt(2.0);
  for (auto& b : basis)
    for (auto& x : b) x *= scale;
  return basis;
}

Manifest synth_generate(const SynthSpec& spec, const fs::path& out_dir) {
  const auto means = synth_class_means(spec);
  const fs::path feature_dir = out_dir / "features";
  std::error_code ec;
  fs::create_directories(feature_dir, ec);
  if (ec) throw IoError("synth: cannot create '" + feature_dir.string() + "': " + ec.message());

  Manifest manifest;
  manifest.base_dir = out_dir;
  manifest.feature_dim = spec.dim;
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    manifest.label_map["class_" + std::to_string(k)] = static_cast<int>(k);
  }

  const std::size_t frame_span = spec.max_frames - spec.min_frames + 1;
  std::size_t line = 2;
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
      Rng rng(Rng::derive(spec.seed, 1 + k * spec.samples_per_class + i));
      const std::size_t frames = spec.min_frames + rng.below(frame_span);
      FeatureSequence seq{Matrix(frames, spec.dim)};
      for (std::size_t f = 0; f < frames; ++f)
        for (std::size_t d = 0; d < spec.dim; ++d)
          seq.frames(f, d) = static_cast<float>(means[k][d] + spec.noise * rng.normal());

      char id[64];
      std::snprintf(id, sizeof id, "c%zu_s%05zu", k, i);
      const std::string rel = std::string("features/") + id + ".feat";
      write_feature_file(seq, out_dir / rel);

      const std::size_t slot = i % 20;
      const Split split = slot < 14 ? Split::train : (slot < 17 ? Split::dev : Split::test);
      manifest.records.push_back({id, rel, "class_" + std::to_string(k), split, line++});
    }
  }
  write_manifest(manifest, out_dir / "manifest.jsonl");
  return manifest;
}

// ---------------------------------------------------------------------------
// Pooled dataset

const PooledSplit& Dataset::split(Split s) const {
  switch (s) {
    case Split::train: return train;
    case Split::dev: return dev;
    case Split::test: return test;
  }
  return train;
}

Dataset load_dataset(const Manifest& manifest) {
  Dataset data;
  data.manifest = manifest;
  std::array<std::vector<std::vector<double>>, 3> rows;
  std::array<PooledSplit*, 3> splits{&data.train, &data.dev, &data.test};

  for (const auto& rec : manifest.records) {
    const fs::path path = manifest.base_dir / rec.feature_path;
    const auto seq = read_feature_file(path, data.manifest.feature_dim);
    if (data.manifest.feature_dim == 0) data.manifest.feature_dim = seq.frames.cols();
    const Matrix pooled = mean_pool(seq.frames);
    const auto s = static_cast<std::size_t>(rec.split);
    rows[s].emplace_back(pooled.values().begin(), pooled.values().end());
    splits[s]->labels.push_back(manifest.class_index(rec.label));
    splits[s]->ids.push_back(rec.id);
  }
  for (std::size_t s = 0; s < 3; ++s) {
    Matrix m(rows[s].size(), data.manifest.feature_dim);
    for (std::size_t r = 0; r < rows[s].size(); ++r)
      std::copy(rows[s][r].begin(), rows[s][r].end(), m.row(r).begin());
    splits[s]->features = std::move(m);
  }
  return data;
}

Dataset load_dataset(const fs::path& manifest_path) {
  return load_dataset(load_manifest(manifest_path));
}

}  // namespace emtune
