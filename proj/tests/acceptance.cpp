// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Tolerances and workloads are fixed here on purpose so a
// regression cannot hide behind a loosened threshold elsewhere.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "emtune/checkpoint.hpp"
#include "emtune/data.hpp"
#include "emtune/gradcheck_suite.hpp"
#include "emtune/log.hpp"
#include "emtune/losses.hpp"
#include "emtune/metrics.hpp"
#include "emtune/projection.hpp"
#include "emtune/random.hpp"
#include "emtune/report_io.hpp"
#include "emtune/training.hpp"

using namespace emtune;
namespace fs = std::filesystem;

namespace {

constexpr double kGradTolerance = 1e-4;
constexpr double kGradSeconds = 10.0;
constexpr double kFixtureTolerance = 1e-9;
constexpr double kCompositionTolerance = 1e-12;
constexpr double kInvarianceTolerance = 1e-9;
constexpr double kTable4Seconds = 120.0;
constexpr double kTables13Seconds = 300.0;

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void report(int id, const char* title, const Outcome& o) {
  std::printf("[%s] criterion %d: %s (%s)\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Matrix gaussian(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (auto& v : m.values()) v = rng.normal();
  return m;
}

class ScratchDir {
public:
  ScratchDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("emtune_accept_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  fs::path operator/(const std::string& s) const { return path_ / s; }

private:
  fs::path path_;
};

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run_gradcheck_suite(0, 10);
  const double secs = seconds_since(t0);
  return {r.max_relative_error < kGradTolerance && secs < kGradSeconds,
          fmt("max rel err %.3g over %zu objectives, %.2f s", r.max_relative_error, r.cases.size(), secs)};
}

Outcome loss_fixtures() {
  double worst = 0.0;
  Rng rng(101);
  const Matrix e = gaussian(rng, 5, 3);
  worst = std::max(worst, std::abs(triplet_loss({e, e, e}, 1.0).loss - 5.0));
  const Matrix id{{1, 1}, {1, -1}};
  worst = std::max(worst, std::abs(barlow_twins_loss(id, id, kDefaultBarlowLambda).loss));
  const Matrix ones{{1, 1}, {1, 1}};
  worst = std::max(worst, std::abs(barlow_twins_loss(ones, ones, kDefaultBarlowLambda).loss -
                                   2.0 * kDefaultBarlowLambda));
  for (int i = 0; i < 100; ++i) {
    const TripletBatch b{gaussian(rng, 6, 4), gaussian(rng, 6, 4), gaussian(rng, 6, 4)};
    worst = std::max(worst, std::abs(combined_loss(b, 1.0, kDefaultBarlowLambda, 0.0).loss -
                                     triplet_loss(b, 1.0).loss));
  }
  return {worst <= kFixtureTolerance, fmt("worst deviation %.3g", worst)};
}

Outcome composition() {
  Rng rng(202);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const TripletBatch b{gaussian(rng, 8, 16), gaussian(rng, 8, 16), gaussian(rng, 8, 16)};
    const double whole = combined_loss(b, 1.0, kDefaultBarlowLambda, kDefaultCombinationBeta).loss;
    const double parts = triplet_loss(b, 1.0).loss +
                         kDefaultCombinationBeta * barlow_twins_loss(b.anchor, b.positive, kDefaultBarlowLambda).loss;
    worst = std::max(worst, std::abs(whole - parts));
  }
  return {worst <= kCompositionTolerance, fmt("worst |L_com - (L_t + beta L_bt)| = %.3g", worst)};
}

Outcome metric_oracles() {
  bool exact = true;
  const auto inv = invariant_distance({Matrix{{0, 0}, {2, 0}, {5, 5}}, {0, 0, 1}, 2});
  exact &= inv.per_class[0] == 1.0 && inv.per_class[1] == 0.0;
  exact &= davies_bouldin({Matrix{{0, 0}, {10, 0}}, {0, 1}, 2}) == 0.0;
  const double db = davies_bouldin({Matrix{{0, 0}, {0, 2}, {10, 0}, {10, 2}}, {0, 0, 1, 1}, 2});
  exact &= std::abs(db - 0.2) <= 1e-15;

  Rng rng(303);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t k = 2 + rng.below(4), per = 2 + rng.below(6), d = 2 + rng.below(6);
    LabeledEmbeddingSet s{gaussian(rng, k * per, d), {}, k};
    for (std::size_t i = 0; i < k * per; ++i) s.labels.push_back(static_cast<int>(i % k));
    const double base = davies_bouldin(s);

    auto moved = s;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = rng.uniform(-50, 50);
      for (std::size_t r = 0; r < moved.embeddings.rows(); ++r) moved.embeddings(r, j) += c;
    }
    auto scaled = s;
    scaled.embeddings *= rng.uniform(0.05, 20.0);
    std::vector<int> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm.begin(), perm.end());
    auto relabeled = s;
    for (auto& l : relabeled.labels) l = perm[static_cast<std::size_t>(l)];

    worst = std::max({worst, std::abs(davies_bouldin(moved) - base), std::abs(davies_bouldin(scaled) - base),
                      std::abs(davies_bouldin(relabeled) - base)});
  }
  return {exact && worst <= kInvarianceTolerance,
          fmt("fixtures %s, worst DB invariance deviation %.3g", exact ? "exact" : "MISMATCH", worst)};
}

// ---------------------------------------------------------------------------
// Synthetic-data criteria share one generated dataset per spec.

SynthSpec table_spec() {
  SynthSpec s;  // K=4, D=64, 200/class, separation 8, noise 2, seed 7
  return s;
}

EncoderConfig encoder_config(std::size_t dim, std::uint64_t seed) { return {dim, {64}, 32, seed}; }

TrainConfig stage1_config(LossMode mode, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.loss_mode = mode;
  cfg.epochs = 20;
  cfg.seed = seed;
  return cfg;
}

ClusterReport test_geometry(const Dataset& data, const Encoder& enc) {
  return cluster_report({encoder_forward(enc, data.test.features), data.test.labels, data.num_classes()});
}

struct Table4Run {
  Encoder combined;
  ClusterReport combined_report;
};

Outcome table4(const Dataset& data, Table4Run& keep) {
  const auto t0 = std::chrono::steady_clock::now();
  const EncoderConfig ec = encoder_config(data.feature_dim(), 1);
  const auto untrained = test_geometry(data, init_encoder(ec));
  const auto contrastive = train_stage1(data, ec, stage1_config(LossMode::contrastive, 1));
  const auto combined = train_stage1(data, ec, stage1_config(LossMode::combined, 1));
  const auto rc = test_geometry(data, contrastive.encoder);
  const auto rm = test_geometry(data, combined.encoder);
  const double secs = seconds_since(t0);
  keep = {combined.encoder, rm};

  const bool a = rm.mean_invariant_distance < untrained.mean_invariant_distance &&
                 rm.davies_bouldin < untrained.davies_bouldin;
  const bool b = rm.davies_bouldin <= rc.davies_bouldin;
  return {a && b && secs < kTable4Seconds,
          fmt("inv untrained %.4f -> combined %.4f; DB untrained %.4f, contrastive %.4f, combined %.4f; "
              "(a) %s (b) %s; %.1f s",
              untrained.mean_invariant_distance, rm.mean_invariant_distance, untrained.davies_bouldin,
              rc.davies_bouldin, rm.davies_bouldin, a ? "holds" : "fails", b ? "holds" : "fails", secs)};
}

Outcome tables13(const Dataset& data, bool& freeze_ok, std::string& freeze_detail) {
  const auto t0 = std::chrono::steady_clock::now();
  int wins = 0;
  std::string per_seed;
  freeze_ok = true;
  std::size_t freeze_runs = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const EncoderConfig ec = encoder_config(data.feature_dim(), seed);
    const TrainConfig cfg = stage1_config(LossMode::combined, seed);
    const Encoder enc = train_stage1(data, ec, cfg).encoder;
    const auto before = parameter_hash(enc.net);
    const auto stage2 = train_stage2(data, enc, 64, cfg);
    freeze_ok &= parameter_hash(enc.net) == before;
    ++freeze_runs;
    const double two_stage = evaluate(data, Split::test, enc, stage2.adapter).accuracy;

    const auto e2e = train_end2end_baseline(data, ec, 64, cfg);
    const double baseline = evaluate(data, Split::test, e2e.encoder, e2e.adapter).accuracy;
    wins += two_stage >= baseline;
    per_seed += fmt("%sseed %llu: %.4f vs %.4f", seed > 1 ? "; " : "", static_cast<unsigned long long>(seed),
                    two_stage, baseline);
  }
  freeze_detail = fmt("%zu stage-2 runs, encoder hash unchanged in %s", freeze_runs, freeze_ok ? "all" : "NOT all");
  const double secs = seconds_since(t0);
  return {wins >= 2 && secs < kTables13Seconds,
          fmt("two-stage vs end-to-end test accuracy, %s; %d/3 seeds >=; %.1f s", per_seed.c_str(), wins, secs)};
}

Outcome determinism(const Dataset& data, const Table4Run& first) {
  const EncoderConfig ec = encoder_config(data.feature_dim(), 1);
  const auto again = train_stage1(data, ec, stage1_config(LossMode::combined, 1));
  auto ckpt = [](const Encoder& e) {
    return serialize_checkpoint({kCheckpointVersion, e, std::nullopt, {"combined", 20, 1}});
  };
  const auto names = data.manifest.labels_by_index();
  const bool same_ckpt = ckpt(first.combined) == ckpt(again.encoder);
  const bool same_report = format_cluster_report_csv(first.combined_report, names) ==
                           format_cluster_report_csv(test_geometry(data, again.encoder), names);
  return {same_ckpt && same_report, fmt("checkpoint bytes %s, metric report %s", same_ckpt ? "identical" : "DIFFER",
                                        same_report ? "identical" : "DIFFERS")};
}

Outcome separable(const fs::path& dir) {
  SynthSpec spec;
  spec.separation = 50.0;
  spec.noise = 0.1;
  const Dataset data = load_dataset(synth_generate(spec, dir));
  const EncoderConfig ec = encoder_config(data.feature_dim(), 1);
  const TrainConfig cfg = stage1_config(LossMode::combined, 1);
  const Encoder enc = train_stage1(data, ec, cfg).encoder;
  const auto stage2 = train_stage2(data, enc, 64, cfg);
  const double acc = evaluate(data, Split::test, enc, stage2.adapter).accuracy;
  TsneOptions opts;
  opts.seed = 1;
  const auto tsne = tsne_project(encoder_forward(enc, data.test.features), opts);
  const double purity = neighbor_purity(tsne.coordinates, data.test.labels);
  return {acc == 1.0 && purity == 1.0,
          fmt("stage-2 test accuracy %.4f, t-SNE neighbor purity %.4f on %zu points", acc, purity, data.test.size())};
}

Outcome round_trips(const fs::path& dir) {
  Rng rng(1010);
  int ok = 0;
  for (int i = 0; i < 20; ++i) {
    FeatureSequence seq{Matrix(1 + rng.below(40), 1 + rng.below(32))};
    for (auto& v : seq.frames.values()) v = static_cast<float>(rng.normal() * std::exp(rng.uniform(-20, 20)));
    const fs::path fp = dir / ("rt" + std::to_string(i) + ".feat");
    write_feature_file(seq, fp);
    const bool feat_ok = read_feature_file(fp, seq.frames.cols()).frames == seq.frames;

    const std::size_t in = 3 + rng.below(20);
    EncoderConfig ec{in, {}, 2 + rng.below(in - 2), rng.below(1u << 20)};
    for (std::size_t h = rng.below(3); h > 0; --h) ec.hidden_dims.push_back(1 + rng.below(16));
    Checkpoint ckpt{kCheckpointVersion, init_encoder(ec), std::nullopt, {"combined", rng.below(100), ec.seed}};
    for (Matrix* p : ckpt.encoder.net.parameters())
      for (double& v : p->values()) v = rng.normal() * std::exp(rng.uniform(-30, 30));
    if (i % 2 == 0) ckpt.adapter = init_adapter(AdapterShape{ec.bottleneck_dim, 1 + rng.below(16), 2 + rng.below(6)}, static_cast<std::uint64_t>(i));
    const fs::path cp = dir / ("rt" + std::to_string(i) + ".ckpt");
    save_checkpoint(ckpt, cp);
    const bool ckpt_ok = load_checkpoint(cp) == ckpt;
    ok += feat_ok && ckpt_ok;
  }
  return {ok == 20, fmt("%d/20 FEAT+checkpoint instances bit-exact", ok)};
}

template <typename F>
Outcome guarded(F&& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    return {false, std::string("exception: ") + e.what()};
  }
}

}  // namespace

int main() {
  set_log_sink([](LogLevel level, std::string_view msg) {
    if (level == LogLevel::warning) std::fprintf(stderr, "warning: %.*s\n", static_cast<int>(msg.size()), msg.data());
  });

  report(1, "gradient suite", guarded(gradient_suite));
  report(2, "analytic loss fixtures", guarded(loss_fixtures));
  report(3, "combined-loss composition", guarded(composition));
  report(4, "metric oracles and DB invariance", guarded(metric_oracles));

  ScratchDir scratch;
  Dataset table_data;
  bool have_data = false;
  try {
    table_data = load_dataset(synth_generate(table_spec(), scratch / "table"));
    have_data = true;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "cannot build the synthetic dataset: %s\n", e.what());
  }

  Table4Run t4;
  bool have_t4 = false;
  report(5, "embedding geometry direction", guarded([&]() -> Outcome {
           if (!have_data) return {false, "no dataset"};
           auto o = table4(table_data, t4);
           have_t4 = true;
           return o;
         }));

  bool freeze_ok = false;
  std::string freeze_detail = "not run";
  report(6, "two-stage vs end-to-end accuracy", guarded([&]() -> Outcome {
           if (!have_data) return {false, "no dataset"};
           return tables13(table_data, freeze_ok, freeze_detail);
         }));
  report(7, "stage-2 freeze contract", Outcome{freeze_ok, freeze_detail});
  report(8, "determinism", guarded([&]() -> Outcome {
           if (!have_t4) return {false, "criterion 5 did not complete"};
           return determinism(table_data, t4);
         }));
  report(9, "separable sanity", guarded([&] { return separable(scratch / "separable"); }));
  report(10, "format round trips", guarded([&] {
           fs::create_directories(scratch / "rt");
           return round_trips(scratch / "rt");
         }));

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
