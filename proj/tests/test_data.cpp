#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "emtune/data.hpp"
#include "emtune/error.hpp"
#include "emtune/sampler.hpp"
#include "test_support.hpp"

using namespace emtune;
namespace fs = std::filesystem;

namespace {

// Builds a FEAT byte string by hand so the decoder is checked against the
// layout rather than against its own encoder.
std::string hand_feat(std::uint32_t version, std::uint32_t frames, std::uint32_t dim,
                      const std::vector<float>& values, const char* magic = "FEAT") {
  std::string out(magic, 4);
  auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  put32(version);
  put32(frames);
  put32(dim);
  for (float f : values) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put32(bits);
  }
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

// Held-out nearest-centroid accuracy with centroids from the train split.
double nearest_centroid_accuracy(const Dataset& data) {
  const std::size_t k = data.num_classes(), d = data.feature_dim();
  Matrix centroids(k, d);
  std::vector<double> counts(k, 0.0);
  for (std::size_t i = 0; i < data.train.size(); ++i) {
    const auto c = static_cast<std::size_t>(data.train.labels[i]);
    for (std::size_t j = 0; j < d; ++j) centroids(c, j) += data.train.features(i, j);
    counts[c] += 1.0;
  }
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t j = 0; j < d; ++j) centroids(c, j) /= counts[c];
  std::size_t correct = 0, total = 0;
  for (const PooledSplit* s : {&data.dev, &data.test}) {
    for (std::size_t i = 0; i < s->size(); ++i) {
      std::size_t best = 0;
      double best_dist = INFINITY;
      for (std::size_t c = 0; c < k; ++c) {
        double dist = 0.0;
        for (std::size_t j = 0; j < d; ++j) dist += std::pow(s->features(i, j) - centroids(c, j), 2);
        if (dist < best_dist) best_dist = dist, best = c;
      }
      correct += static_cast<int>(best) == s->labels[i];
      ++total;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

void check_triple_invariants(const TripletEpoch& epoch, std::span<const int> labels) {
  std::set<std::size_t> anchors;
  for (const auto& batch : epoch.batches) {
    for (const auto& t : batch) {
      CHECK(t.anchor != t.positive);
      CHECK(labels[t.anchor] == labels[t.positive]);
      CHECK(labels[t.anchor] != labels[t.negative]);
      CHECK(anchors.insert(t.anchor).second);
    }
  }
}

}  // namespace

TEST_CASE("split names") {
  CHECK(parse_split("train") == Split::train);
  CHECK(parse_split("dev") == Split::dev);
  CHECK(parse_split("test") == Split::test);
  CHECK_THROWS_AS(parse_split("validation"), DataError);
}

TEST_CASE("manifest parsing") {
  SUBCASE("three valid records") {
    const auto m = parse_manifest(
        R"({"id":"a","path":"a.feat","label":"x","split":"train"}
{"id":"b","path":"b.feat","label":"y","split":"dev"}
{"id":"c","path":"c.feat","label":"x","split":"test"}
)",
        "/data");
    CHECK(m.records.size() == 3);
    CHECK(m.num_classes() == 2);
    CHECK(m.class_index("x") == 0);
    CHECK(m.class_index("y") == 1);
    CHECK(m.records[1].split == Split::dev);
    CHECK(m.records[2].line == 3);
  }
  SUBCASE("header declares order, dim and midpoints") {
    const auto m = parse_manifest(
        R"({"dim":8,"labels":["thirties","twenties"],"midpoints":{"twenties":25,"thirties":35}}
{"id":"a","path":"a.feat","label":"twenties","split":"train"}
)",
        "/data");
    CHECK(m.feature_dim == 8);
    CHECK(m.class_index("thirties") == 0);
    CHECK(m.midpoints_by_index() == std::vector<double>{35, 25});
  }
  SUBCASE("duplicate ids name every offending line") {
    try {
      parse_manifest(R"({"dim":2}
{"id":"a","path":"a.feat","label":"x","split":"train"}
{"id":"b","path":"b.feat","label":"x","split":"train"}
{"id":"c","path":"c.feat","label":"x","split":"train"}
{"id":"a","path":"d.feat","label":"x","split":"train"}
)",
                     "/data");
      FAIL("expected a data error");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("lines 2,5") != std::string::npos);
    }
  }
  SUBCASE("unknown split") {
    CHECK_THROWS_AS(parse_manifest(R"({"id":"a","path":"a.feat","label":"x","split":"validation"})", "/"),
                    DataError);
  }
  SUBCASE("malformed json") { CHECK_THROWS(parse_manifest("{\"id\": \n", "/")); }
  SUBCASE("format and parse agree") {
    const auto m = parse_manifest(
        R"({"id":"a","path":"a.feat","label":"x","split":"train"}
{"id":"b","path":"b.feat","label":"y","split":"test"})",
        "/data");
    const auto again = parse_manifest(format_manifest(m), "/data");
    CHECK(again.records.size() == 2);
    CHECK(again.label_map == m.label_map);
    CHECK(again.records[1].split == Split::test);
  }
}

TEST_CASE("feature file decoding") {
  const std::vector<float> six{1, 2, 3, 4, 5, 6.5f};
  SUBCASE("2 x 3 sequence") {
    const auto seq = decode_feature_file(hand_feat(1, 2, 3, six), 3);
    CHECK(seq.frames == Matrix{{1, 2, 3}, {4, 5, 6.5}});
  }
  SUBCASE("dimension mismatch names both dims") {
    try {
      decode_feature_file(hand_feat(1, 2, 3, six), 4);
      FAIL("expected a data error");
    } catch (const DataError& e) {
      const std::string what = e.what();
      CHECK(what.find('3') != std::string::npos);
      CHECK(what.find('4') != std::string::npos);
    }
  }
  SUBCASE("short payload is a truncation with offset") {
    try {
      decode_feature_file(hand_feat(1, 2, 3, {1, 2, 3, 4, 5}), 3);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      // The offset marks where the data ran out: 16 header bytes + 5 floats.
      CHECK(e.offset() == 36);
    }
  }
  SUBCASE("bad magic and version") {
    CHECK_THROWS_AS(decode_feature_file(hand_feat(1, 2, 3, six, "FEAX"), 3), FormatError);
    CHECK_THROWS_AS(decode_feature_file(hand_feat(2, 2, 3, six), 3), FormatError);
  }
  SUBCASE("zero frames and non-finite values") {
    CHECK_THROWS_AS(decode_feature_file(hand_feat(1, 0, 3, {}), 3), DataError);
    CHECK_THROWS_AS(decode_feature_file(hand_feat(1, 1, 2, {1, NAN}), 2), DataError);
  }
  SUBCASE("encoder matches the hand layout") {
    CHECK(encode_feature_file({Matrix{{1, 2, 3}, {4, 5, 6.5}}}) == hand_feat(1, 2, 3, six));
  }
}

TEST_CASE("feature files round trip bit-exactly") {
  emtune::testing::TempDir dir("feat");
  Rng rng(404);
  for (int i = 0; i < 20; ++i) {
    const std::size_t frames = 1 + rng.below(12), dim = 1 + rng.below(9);
    FeatureSequence seq{Matrix(frames, dim)};
    for (auto& v : seq.frames.values()) v = static_cast<float>(rng.normal() * std::pow(10.0, rng.uniform(-30, 30)));
    const auto path = dir / ("f" + std::to_string(i) + ".feat");
    write_feature_file(seq, path);
    CHECK(read_feature_file(path, dim).frames == seq.frames);
    CHECK(read_feature_file(path, 0).frames == seq.frames);
  }
  CHECK_THROWS_AS(read_feature_file(dir / "nope.feat", 0), IoError);
}

TEST_CASE("synthetic generator") {
  emtune::testing::quiet_info_logs();
  SUBCASE("same spec gives a byte-identical tree") {
    emtune::testing::TempDir a("synth_a"), b("synth_b");
    SynthSpec spec;
    spec.samples_per_class = 20;
    spec.dim = 8;
    synth_generate(spec, a.path());
    synth_generate(spec, b.path());
    const auto ta = tree_contents(a.path());
    CHECK(ta.size() == 81);
    CHECK(ta == tree_contents(b.path()));
  }
  SUBCASE("class means sit at the requested separation") {
    SynthSpec spec;
    spec.separation = 5.0;
    const auto means = synth_class_means(spec);
    for (std::size_t i = 0; i < means.size(); ++i) {
      for (std::size_t j = i + 1; j < means.size(); ++j) {
        double d2 = 0.0;
        for (std::size_t k = 0; k < spec.dim; ++k) d2 += std::pow(means[i][k] - means[j][k], 2);
        CHECK(std::sqrt(d2) == doctest::Approx(5.0).epsilon(1e-12));
      }
    }
  }
  SUBCASE("zero separation is indistinguishable") {
    emtune::testing::TempDir dir("synth_zero");
    SynthSpec spec;
    spec.separation = 0.0;
    spec.noise = 1.0;
    const Dataset data = load_dataset(synth_generate(spec, dir.path()));
    CHECK(data.train.size() == 560);
    CHECK(data.dev.size() == 120);
    CHECK(data.test.size() == 120);
    CHECK(nearest_centroid_accuracy(data) < 0.40);
  }
  SUBCASE("large separation is perfectly separable by nearest centroid") {
    emtune::testing::TempDir dir("synth_sep");
    SynthSpec spec;
    spec.separation = 50.0;
    spec.noise = 0.1;
    const Dataset data = load_dataset(synth_generate(spec, dir.path()) );
    CHECK(nearest_centroid_accuracy(data) == 1.0);
  }
  CHECK_THROWS_AS(SynthSpec({5, 10, 4}).validate(), ConfigError);
}

TEST_CASE("triplet sampler") {
  emtune::testing::quiet_info_logs();
  SUBCASE("two classes of two with B = 2") {
    const std::vector<int> labels{0, 0, 1, 1};
    for (std::uint64_t epoch = 1; epoch <= 5; ++epoch) {
      const auto e = sample_triplets(labels, {2, 3, epoch, true});
      CHECK(e.batches.size() == 2);
      for (const auto& b : e.batches) CHECK(b.size() == 2);
      check_triple_invariants(e, labels);
      // With two per class the positive is forced.
      for (const auto& b : e.batches)
        for (const auto& t : b) CHECK(t.positive == (t.anchor ^ 1u));
    }
  }
  SUBCASE("singleton classes never anchor and are reported") {
    emtune::testing::CapturedLog log;
    const std::vector<int> labels{0, 0, 0, 1, 2, 2};
    const auto e = sample_triplets(labels, {4, 0, 1, true});
    CHECK(e.skipped_anchors == std::vector<std::size_t>{3});
    CHECK_FALSE(log.warnings.empty());
    check_triple_invariants(e, labels);
  }
  SUBCASE("determinism and epoch dependence") {
    std::vector<int> labels;
    for (int i = 0; i < 60; ++i) labels.push_back(i % 4);
    const auto a = sample_triplets(labels, {8, 5, 2, true});
    const auto b = sample_triplets(labels, {8, 5, 2, true});
    const auto c = sample_triplets(labels, {8, 5, 3, true});
    CHECK(a.batches == b.batches);
    CHECK_FALSE(a.batches == c.batches);
  }
  SUBCASE("partial batches") {
    std::vector<int> labels;
    for (int i = 0; i < 21; ++i) labels.push_back(i % 3);
    CHECK(sample_triplets(labels, {8, 1, 1, true}).batches.size() == 3);
    CHECK(sample_triplets(labels, {8, 1, 1, false}).batches.size() == 2);
    labels.resize(17);  // remainder of one triple is always dropped
    CHECK(sample_triplets(labels, {8, 1, 1, true}).batches.size() == 2);
  }
  SUBCASE("exhaustive invariants across random label sets") {
    Rng rng(55);
    for (int trial = 0; trial < 30; ++trial) {
      std::vector<int> labels(10 + rng.below(60));
      for (auto& l : labels) l = static_cast<int>(rng.below(2 + rng.below(5)));
      std::map<int, int> counts;
      for (int l : labels) ++counts[l];
      if (counts.size() < 2) continue;
      const auto e = sample_triplets(labels, {2 + rng.below(10), rng.below(100), 1 + rng.below(9), true});
      check_triple_invariants(e, labels);
      std::size_t seen = e.skipped_anchors.size();
      for (const auto& b : e.batches) seen += b.size();
      CHECK(seen <= labels.size());
    }
  }
  CHECK_THROWS_AS(sample_triplets(std::vector<int>{0, 0, 0}, {2, 0, 1, true}), ConfigError);
  CHECK_THROWS_AS(sample_triplets(std::vector<int>{0, 1, 0}, {1, 0, 1, true}), ConfigError);
}
