#include <doctest.h>

#include <algorithm>

#include "emtune/error.hpp"
#include "emtune/training.hpp"
#include "test_support.hpp"

using namespace emtune;

namespace {

struct SynthFixture {
  emtune::testing::TempDir dir{"train"};
  Dataset data;

  SynthFixture(double separation, double noise, std::size_t per_class = 60, std::size_t dim = 16,
               std::uint64_t seed = 3) {
    emtune::testing::quiet_info_logs();
    SynthSpec spec;
    spec.samples_per_class = per_class;
    spec.dim = dim;
    spec.separation = separation;
    spec.noise = noise;
    spec.seed = seed;
    data = load_dataset(synth_generate(spec, dir.path()));
  }
};

EncoderConfig small_encoder(std::size_t dim, std::uint64_t seed = 1) { return {dim, {16}, 8, seed}; }

TrainConfig quick_config(LossMode mode, std::size_t epochs = 5) {
  TrainConfig cfg;
  cfg.loss_mode = mode;
  cfg.epochs = epochs;
  cfg.batch_size = 16;
  cfg.learning_rate = 1e-3;
  cfg.seed = 9;
  return cfg;
}

// Pooled one-hot fixtures: sample i of class c is e_c in R^4.
PooledSplit one_hot_split(const std::vector<int>& labels) {
  PooledSplit s;
  s.features = Matrix(labels.size(), 4);
  for (std::size_t i = 0; i < labels.size(); ++i) s.features(i, static_cast<std::size_t>(labels[i])) = 1.0;
  s.labels = labels;
  for (std::size_t i = 0; i < labels.size(); ++i) s.ids.push_back("u" + std::to_string(i));
  return s;
}

Encoder identity_encoder() {
  Encoder enc;
  enc.config = EncoderConfig{4, {}, 4, 0};
  enc.net = Mlp({AffineParams{Matrix::identity(4), Matrix(1, 4)}});
  return enc;
}

Adapter adapter_with_head(const Matrix& head) {
  Adapter ad;
  ad.shape = AdapterShape{4, 4, head.cols()};
  ad.net = Mlp({AffineParams{Matrix::identity(4), Matrix(1, 4)}, AffineParams{head, Matrix(1, head.cols())}});
  return ad;
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.batch_size = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.margin = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.learning_rate = NAN;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK(parse_loss_mode("noncontrastive") == LossMode::noncontrastive);
  CHECK_THROWS_AS(parse_loss_mode("triplet"), ConfigError);
}

TEST_CASE("stage 1") {
  SynthFixture fx(20.0, 1.0);

  SUBCASE("combined loss decreases on well separated classes") {
    const auto run = train_stage1(fx.data, small_encoder(16), quick_config(LossMode::combined));
    REQUIRE(run.log.epochs.size() == 5);
    CHECK(run.log.epochs.back().mean_loss < run.log.epochs.front().mean_loss);
  }
  SUBCASE("epochs = 0 is rejected before training") {
    CHECK_THROWS_AS(train_stage1(fx.data, small_encoder(16), quick_config(LossMode::combined, 0)),
                    ConfigError);
  }
  SUBCASE("same seed gives bit-identical encoders") {
    const auto a = train_stage1(fx.data, small_encoder(16), quick_config(LossMode::combined, 3));
    const auto b = train_stage1(fx.data, small_encoder(16), quick_config(LossMode::combined, 3));
    CHECK(a.encoder == b.encoder);
    CHECK(a.log.to_jsonl() == b.log.to_jsonl());
  }
  SUBCASE("combined with beta 0 follows the contrastive trajectory exactly") {
    TrainConfig combined = quick_config(LossMode::combined, 3);
    combined.beta = 0.0;
    const auto a = train_stage1(fx.data, small_encoder(16), combined);
    const auto b = train_stage1(fx.data, small_encoder(16), quick_config(LossMode::contrastive, 3));
    CHECK(a.encoder.net == b.encoder.net);
  }
  SUBCASE("learning rate 0 leaves the encoder at its initialization") {
    TrainConfig cfg = quick_config(LossMode::combined, 2);
    cfg.learning_rate = 0.0;
    CHECK(train_stage1(fx.data, small_encoder(16), cfg).encoder == init_encoder(small_encoder(16)));
  }
  SUBCASE("encoder shape must match the features") {
    CHECK_THROWS_AS(train_stage1(fx.data, small_encoder(12), quick_config(LossMode::combined)), DimensionError);
  }
}

TEST_CASE("loss decreases in every mode on the default synthetic spec") {
  SynthFixture fx(8.0, 2.0, 200, 64, 7);
  for (LossMode mode : {LossMode::contrastive, LossMode::noncontrastive, LossMode::combined}) {
    INFO(std::string(loss_mode_name(mode)));
    TrainConfig cfg = quick_config(mode, 20);
    cfg.batch_size = 32;
    const auto run = train_stage1(fx.data, EncoderConfig{64, {64}, 32, 1}, cfg);
    REQUIRE(run.log.epochs.size() == 20);
    CHECK(run.log.epochs.back().mean_loss < run.log.epochs.front().mean_loss);
  }
}

TEST_CASE("stage 2 and the end-to-end baseline on separable data") {
  SynthFixture fx(50.0, 0.1);
  const Encoder encoder = train_stage1(fx.data, small_encoder(16), quick_config(LossMode::combined)).encoder;

  SUBCASE("the encoder is frozen and the adapter is perfect") {
    const auto before = parameter_hash(encoder.net);
    const auto run = train_stage2(fx.data, encoder, 16, quick_config(LossMode::combined, 20));
    CHECK(parameter_hash(encoder.net) == before);
    CHECK(evaluate(fx.data, Split::test, encoder, run.adapter).accuracy == 1.0);
    CHECK(run.log.epochs.back().dev_accuracy.has_value());
    const auto again = train_stage2(fx.data, encoder, 16, quick_config(LossMode::combined, 20));
    CHECK(again.adapter == run.adapter);
  }
  SUBCASE("end-to-end baseline reaches 95%") {
    const auto run = train_end2end_baseline(fx.data, small_encoder(16), 16, quick_config(LossMode::combined, 20));
    CHECK(evaluate(fx.data, Split::test, run.encoder, run.adapter).accuracy >= 0.95);
    const auto again = train_end2end_baseline(fx.data, small_encoder(16), 16, quick_config(LossMode::combined, 20));
    CHECK(again.encoder == run.encoder);
    CHECK(again.adapter == run.adapter);
  }
  SUBCASE("end-to-end with learning rate 0 stays at initialization") {
    TrainConfig cfg = quick_config(LossMode::combined, 2);
    cfg.learning_rate = 0.0;
    const auto run = train_end2end_baseline(fx.data, small_encoder(16), 16, cfg);
    CHECK(run.encoder == init_encoder(small_encoder(16)));
    const auto fresh = train_stage2(fx.data, run.encoder, 16, cfg);
    CHECK(run.adapter == fresh.adapter);
  }
  SUBCASE("evaluation without an adapter is a state error") {
    CHECK_THROWS_AS(evaluate(fx.data, Split::test, encoder, std::nullopt), StateError);
  }
}

TEST_CASE("evaluation fixtures") {
  const std::vector<int> labels{0, 0, 1, 1, 2, 2, 3, 3};
  const PooledSplit split = one_hot_split(labels);
  const Encoder enc = identity_encoder();

  SUBCASE("perfect predictor") {
    const auto r = evaluate_pooled(split, {}, enc, adapter_with_head(Matrix::identity(4)));
    CHECK(r.accuracy == 1.0);
    CHECK(r.predictions == labels);
    CHECK_FALSE(r.mae.has_value());
  }
  SUBCASE("constant predictor breaks ties toward class 0") {
    const auto r = evaluate_pooled(split, {}, enc, adapter_with_head(Matrix(4, 4)));
    CHECK(r.accuracy == 0.25);
    CHECK(r.predictions == std::vector<int>(8, 0));
  }
  SUBCASE("known confusion") {
    // Class 3 is routed to logit 2; everything else is correct: 6 of 8.
    Matrix head = Matrix::identity(4);
    head(3, 3) = 0.0;
    head(3, 2) = 1.0;
    const auto r = evaluate_pooled(split, {25, 35, 45, 55}, enc, adapter_with_head(head));
    CHECK(r.accuracy == 0.75);
    // Two of eight samples are off by one decade.
    CHECK(r.mae.value() == doctest::Approx(20.0 / 8.0));
  }
}

TEST_CASE("argmax ties and run log") {
  CHECK(argmax_rows(Matrix{{1, 3, 3}, {2, 2, 2}, {-1, -5, 0}}) == std::vector<int>{1, 0, 2});
  RunLog log;
  log.epochs.push_back({1, 0.5, std::nullopt});
  log.epochs.push_back({2, 0.25, 0.75});
  log.checkpoint_path = "out.ckpt";
  const std::string text = log.to_jsonl();
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);
  CHECK(text.find("out.ckpt") != std::string::npos);
}
