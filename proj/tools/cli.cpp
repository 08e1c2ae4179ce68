#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <sstream>

#include "emtune/checkpoint.hpp"
#include "emtune/data.hpp"
#include "emtune/error.hpp"
#include "emtune/gradcheck_suite.hpp"
#include "emtune/metrics.hpp"
#include "emtune/projection.hpp"
#include "emtune/report_io.hpp"
#include "emtune/training.hpp"

namespace emtune::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

// Margins per downstream task.
const std::map<std::string, double> kTaskMargins{
    {"ser", 1.0}, {"gender", 1.0}, {"age", 1.2}, {"sid", 1.0}};

std::vector<std::size_t> parse_widths(const std::string& text, const char* flag) {
  std::vector<std::size_t> out;
  if (text.empty() || text == "none") return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError(std::string(flag) + ": '" + item + "' is not a positive integer");
    }
  }
  return out;
}

struct TrainFlags {
  std::string loss = "combined";
  std::string task_preset;
  double margin = 1.0;
  double lambda = kDefaultBarlowLambda;
  double beta = kDefaultCombinationBeta;
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
  bool center = false;
  CLI::Option* margin_opt = nullptr;

  TrainConfig resolve() const {
    TrainConfig c;
    c.loss_mode = parse_loss_mode(loss);
    c.margin = margin;
    if (!task_preset.empty() && (margin_opt == nullptr || margin_opt->count() == 0)) {
      c.margin = kTaskMargins.at(task_preset);
    }
    c.lambda = lambda;
    c.beta = beta;
    c.learning_rate = lr;
    c.batch_size = batch_size;
    c.epochs = epochs;
    c.seed = seed;
    c.center = center;
    c.validate();
    return c;
  }
};

void add_optimizer_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--lr", f.lr, "Adam learning rate");
  cmd->add_option("--batch-size", f.batch_size, "Mini-batch size (>= 2)");
  cmd->add_option("--epochs", f.epochs, "Training epochs (>= 1)");
  cmd->add_option("--seed", f.seed, "Seed for initialization and sampling");
}

struct EncoderFlags {
  std::size_t bottleneck_dim = 128;
  std::string hidden_dims = "256";

  EncoderConfig resolve(std::size_t input_dim, std::uint64_t seed) const {
    EncoderConfig c;
    c.input_dim = input_dim;
    c.hidden_dims = parse_widths(hidden_dims, "--hidden-dims");
    c.bottleneck_dim = bottleneck_dim;
    c.seed = seed;
    c.validate();
    return c;
  }
};

void add_encoder_flags(CLI::App* cmd, EncoderFlags& f) {
  cmd->add_option("--bottleneck-dim", f.bottleneck_dim, "Embedding (bottleneck) dimension");
  cmd->add_option("--hidden-dims", f.hidden_dims,
                  "Comma-separated hidden layer widths of the encoder, or 'none'");
}

void write_run_log(const std::string& path, RunLog log, const std::string& checkpoint) {
  if (path.empty()) return;
  log.checkpoint_path = checkpoint;
  write_text_file(path, log.to_jsonl());
}

void print_json(std::ostream& out, const ordered_json& j) { out << j.dump() << '\n'; }

struct Inputs {
  std::string manifest;
  std::string checkpoint;
  std::string split = "test";
  std::string out;
};

LabeledEmbeddingSet embed_split(const Dataset& data, const PooledSplit& split,
                                const std::optional<Encoder>& encoder) {
  LabeledEmbeddingSet set;
  set.embeddings = encoder ? encoder_forward(*encoder, split.features) : split.features;
  set.labels = split.labels;
  set.num_classes = data.num_classes();
  return set;
}

std::vector<std::string> label_names(const Dataset& data, const PooledSplit& split) {
  const auto names = data.manifest.labels_by_index();
  std::vector<std::string> out;
  for (int l : split.labels) out.push_back(names[static_cast<std::size_t>(l)]);
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-stage embedding finetuning: metric-learning encoder training, frozen-encoder "
               "adapter training, and cluster-geometry evaluation",
               "emtune"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  // synth
  SynthSpec synth;
  std::string synth_dir;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic clustered feature dataset");
  synth_cmd->add_option("--out-dir", synth_dir, "Output directory")->required();
  synth_cmd->add_option("--classes", synth.num_classes, "Number of classes");
  synth_cmd->add_option("--per-class", synth.samples_per_class, "Samples per class");
  synth_cmd->add_option("--dim", synth.dim, "Frame feature dimension");
  synth_cmd->add_option("--min-frames", synth.min_frames, "Minimum frames per sample");
  synth_cmd->add_option("--max-frames", synth.max_frames, "Maximum frames per sample");
  synth_cmd->add_option("--separation", synth.separation, "Pairwise distance between class means");
  synth_cmd->add_option("--noise", synth.noise, "Per-frame Gaussian noise scale");
  synth_cmd->add_option("--seed", synth.seed, "Generator seed");

  // train-encoder
  TrainFlags enc_train;
  EncoderFlags enc_flags;
  Inputs enc_io;
  std::string enc_log;
  auto* enc_cmd = app.add_subcommand("train-encoder", "Stage 1: finetune the encoder");
  enc_cmd->add_option("--manifest", enc_io.manifest, "Dataset manifest")->required();
  enc_cmd->add_option("--out", enc_io.out, "Output checkpoint path")->required();
  enc_cmd->add_option("--log", enc_log, "Run log path (JSON lines)");
  enc_cmd->add_option("--loss", enc_train.loss, "Objective")
      ->check(CLI::IsMember({"contrastive", "noncontrastive", "combined"}));
  enc_cmd->add_option("--task-preset", enc_train.task_preset,
                      "Task margin preset: ser, gender, sid (m=1) or age (m=1.2); --margin wins")
      ->check(CLI::IsMember({"ser", "gender", "age", "sid"}));
  enc_train.margin_opt = enc_cmd->add_option("--margin", enc_train.margin, "Triplet margin m");
  enc_cmd->add_option("--lambda", enc_train.lambda, "Off-diagonal weight of the redundancy loss");
  enc_cmd->add_option("--beta", enc_train.beta, "Weight of the redundancy loss in combined mode");
  enc_cmd->add_flag("--center", enc_train.center,
                    "Mean-center each dimension over the batch before correlating");
  add_optimizer_flags(enc_cmd, enc_train);
  add_encoder_flags(enc_cmd, enc_flags);

  // train-adapter
  TrainFlags ada_train;
  Inputs ada_io;
  std::string ada_log;
  std::size_t ada_hidden = 256;
  auto* ada_cmd = app.add_subcommand("train-adapter", "Stage 2: train the adapter on a frozen encoder");
  ada_cmd->add_option("--manifest", ada_io.manifest, "Dataset manifest")->required();
  ada_cmd->add_option("--encoder-checkpoint", ada_io.checkpoint, "Stage-1 checkpoint")->required();
  ada_cmd->add_option("--out", ada_io.out, "Output checkpoint path")->required();
  ada_cmd->add_option("--log", ada_log, "Run log path (JSON lines)");
  ada_cmd->add_option("--adapter-hidden", ada_hidden, "Adapter hidden width");
  add_optimizer_flags(ada_cmd, ada_train);

  // train-e2e
  TrainFlags e2e_train;
  EncoderFlags e2e_flags;
  Inputs e2e_io;
  std::string e2e_log;
  std::size_t e2e_hidden = 256;
  auto* e2e_cmd = app.add_subcommand("train-e2e", "Baseline: train encoder and adapter jointly");
  e2e_cmd->add_option("--manifest", e2e_io.manifest, "Dataset manifest")->required();
  e2e_cmd->add_option("--out", e2e_io.out, "Output checkpoint path")->required();
  e2e_cmd->add_option("--log", e2e_log, "Run log path (JSON lines)");
  e2e_cmd->add_option("--adapter-hidden", e2e_hidden, "Adapter hidden width");
  add_optimizer_flags(e2e_cmd, e2e_train);
  add_encoder_flags(e2e_cmd, e2e_flags);

  // evaluate
  Inputs eval_io;
  auto* eval_cmd = app.add_subcommand("evaluate", "Classification accuracy (and MAE) on a split");
  eval_cmd->add_option("--manifest", eval_io.manifest, "Dataset manifest")->required();
  eval_cmd->add_option("--checkpoint", eval_io.checkpoint, "Checkpoint with an adapter")->required();
  eval_cmd->add_option("--split", eval_io.split, "Split to evaluate")
      ->check(CLI::IsMember({"train", "dev", "test"}));

  // embed
  Inputs embed_io;
  auto* embed_cmd = app.add_subcommand("embed", "Write encoder embeddings of a split as CSV");
  embed_cmd->add_option("--manifest", embed_io.manifest, "Dataset manifest")->required();
  embed_cmd->add_option("--checkpoint", embed_io.checkpoint, "Encoder checkpoint")->required();
  embed_cmd->add_option("--split", embed_io.split, "Split to embed")
      ->check(CLI::IsMember({"train", "dev", "test"}));
  embed_cmd->add_option("--out", embed_io.out, "Output CSV path")->required();

  // report
  Inputs report_io;
  auto* report_cmd = app.add_subcommand("report", "Invariant distance and Davies-Bouldin index");
  report_cmd->add_option("--manifest", report_io.manifest, "Dataset manifest")->required();
  report_cmd->add_option("--checkpoint", report_io.checkpoint,
                         "Encoder checkpoint; omit to measure raw pooled features");
  report_cmd->add_option("--split", report_io.split, "Split to measure")
      ->check(CLI::IsMember({"train", "dev", "test"}));
  report_cmd->add_option("--out", report_io.out, "Output CSV path");

  // project
  Inputs proj_io;
  std::string method = "tsne";
  TsneOptions tsne;
  auto* proj_cmd = app.add_subcommand("project", "2-D projection of a split's embeddings");
  proj_cmd->add_option("--manifest", proj_io.manifest, "Dataset manifest")->required();
  proj_cmd->add_option("--checkpoint", proj_io.checkpoint,
                       "Encoder checkpoint; omit to project raw pooled features");
  proj_cmd->add_option("--split", proj_io.split, "Split to project")
      ->check(CLI::IsMember({"train", "dev", "test"}));
  proj_cmd->add_option("--method", method, "Projection method")->check(CLI::IsMember({"pca", "tsne"}));
  proj_cmd->add_option("--perplexity", tsne.perplexity, "t-SNE perplexity");
  proj_cmd->add_option("--iterations", tsne.iterations, "t-SNE iterations");
  proj_cmd->add_option("--learning-rate", tsne.learning_rate, "t-SNE gradient step size");
  proj_cmd->add_option("--seed", tsne.seed, "Seed for the initial layout / PCA start");
  proj_cmd->add_option("--out", proj_io.out, "Output CSV path (id,label,x,y)")->required();

  // gradcheck
  std::uint64_t gc_seed = 0;
  std::size_t gc_points = 10;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every analytic gradient");
  gc_cmd->add_option("--seed", gc_seed, "Seed for the sampled points");
  gc_cmd->add_option("--points", gc_points, "Random points per objective")->check(CLI::PositiveNumber);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    if (*synth_cmd) {
      synth.validate();
      const auto manifest = synth_generate(synth, synth_dir);
      print_json(out, {{"manifest", (fs::path(synth_dir) / "manifest.jsonl").string()},
                       {"records", manifest.records.size()},
                       {"classes", manifest.num_classes()},
                       {"dim", manifest.feature_dim}});
    } else if (*enc_cmd) {
      const TrainConfig config = enc_train.resolve();
      const Dataset data = load_dataset(enc_io.manifest);
      const EncoderConfig ec = enc_flags.resolve(data.feature_dim(), config.seed);
      auto result = train_stage1(data, ec, config);
      Checkpoint ckpt{kCheckpointVersion, result.encoder, std::nullopt,
                      {loss_mode_name(config.loss_mode), config.epochs, config.seed}};
      save_checkpoint(ckpt, enc_io.out);
      write_run_log(enc_log, result.log, enc_io.out);
      print_json(out, {{"checkpoint", enc_io.out},
                       {"loss_mode", loss_mode_name(config.loss_mode)},
                       {"margin", config.margin},
                       {"beta", config.beta},
                       {"first_epoch_loss", result.log.epochs.front().mean_loss},
                       {"final_epoch_loss", result.log.epochs.back().mean_loss}});
    } else if (*ada_cmd) {
      const TrainConfig config = ada_train.resolve();
      if (ada_hidden == 0) throw ConfigError("--adapter-hidden must be positive");
      const Dataset data = load_dataset(ada_io.manifest);
      const Checkpoint stage1 = load_checkpoint(ada_io.checkpoint);
      auto result = train_stage2(data, stage1.encoder, ada_hidden, config);
      Checkpoint ckpt{kCheckpointVersion, stage1.encoder, result.adapter,
                      {"adapter", config.epochs, config.seed}};
      save_checkpoint(ckpt, ada_io.out);
      write_run_log(ada_log, result.log, ada_io.out);
      ordered_json j{{"checkpoint", ada_io.out},
                     {"final_epoch_loss", result.log.epochs.back().mean_loss}};
      if (result.log.epochs.back().dev_accuracy) j["dev_accuracy"] = *result.log.epochs.back().dev_accuracy;
      print_json(out, j);
    } else if (*e2e_cmd) {
      const TrainConfig config = e2e_train.resolve();
      if (e2e_hidden == 0) throw ConfigError("--adapter-hidden must be positive");
      const Dataset data = load_dataset(e2e_io.manifest);
      const EncoderConfig ec = e2e_flags.resolve(data.feature_dim(), config.seed);
      auto result = train_end2end_baseline(data, ec, e2e_hidden, config);
      Checkpoint ckpt{kCheckpointVersion, result.encoder, result.adapter,
                      {"end-to-end", config.epochs, config.seed}};
      save_checkpoint(ckpt, e2e_io.out);
      write_run_log(e2e_log, result.log, e2e_io.out);
      ordered_json j{{"checkpoint", e2e_io.out},
                     {"final_epoch_loss", result.log.epochs.back().mean_loss}};
      if (result.log.epochs.back().dev_accuracy) j["dev_accuracy"] = *result.log.epochs.back().dev_accuracy;
      print_json(out, j);
    } else if (*eval_cmd) {
      const Dataset data = load_dataset(eval_io.manifest);
      const Checkpoint ckpt = load_checkpoint(eval_io.checkpoint);
      const auto report = evaluate(data, parse_split(eval_io.split), ckpt.encoder, ckpt.adapter);
      ordered_json j{{"split", eval_io.split}, {"samples", report.samples}, {"accuracy", report.accuracy}};
      if (report.mae) j["mae"] = *report.mae;
      print_json(out, j);
    } else if (*embed_cmd) {
      const Dataset data = load_dataset(embed_io.manifest);
      const Checkpoint ckpt = load_checkpoint(embed_io.checkpoint);
      const auto& split = data.split(parse_split(embed_io.split));
      const Matrix emb = encoder_forward(ckpt.encoder, split.features);
      write_text_file(embed_io.out, format_embeddings_csv(split.ids, label_names(data, split), emb));
      print_json(out, {{"out", embed_io.out}, {"rows", emb.rows()}, {"dim", emb.cols()}});
    } else if (*report_cmd) {
      const Dataset data = load_dataset(report_io.manifest);
      std::optional<Encoder> encoder;
      if (!report_io.checkpoint.empty()) encoder = load_checkpoint(report_io.checkpoint).encoder;
      const auto& split = data.split(parse_split(report_io.split));
      const auto report = cluster_report(embed_split(data, split, encoder));
      if (!report_io.out.empty()) {
        write_text_file(report_io.out,
                        format_cluster_report_csv(report, data.manifest.labels_by_index()));
      }
      ordered_json per_class = ordered_json::object();
      const auto names = data.manifest.labels_by_index();
      for (std::size_t c = 0; c < names.size(); ++c) per_class[names[c]] = report.invariant_distance[c];
      print_json(out, {{"split", report_io.split},
                       {"invariant_distance", per_class},
                       {"mean_invariant_distance", report.mean_invariant_distance},
                       {"davies_bouldin", report.davies_bouldin}});
    } else if (*proj_cmd) {
      const Dataset data = load_dataset(proj_io.manifest);
      std::optional<Encoder> encoder;
      if (!proj_io.checkpoint.empty()) encoder = load_checkpoint(proj_io.checkpoint).encoder;
      const auto& split = data.split(parse_split(proj_io.split));
      const auto set = embed_split(data, split, encoder);
      Matrix coords;
      if (method == "pca") {
        coords = pca_project(set.embeddings, {1000, tsne.seed}).coordinates;
      } else {
        coords = tsne_project(set.embeddings, tsne).coordinates;
      }
      write_text_file(proj_io.out, format_projection_csv(split.ids, label_names(data, split), coords));
      print_json(out, {{"out", proj_io.out},
                       {"method", method},
                       {"points", coords.rows()},
                       {"neighbor_purity", neighbor_purity(coords, split.labels)}});
    } else if (*gc_cmd) {
      const auto report = run_gradcheck_suite(gc_seed, gc_points);
      ordered_json cases = ordered_json::array();
      for (const auto& c : report.cases) {
        cases.push_back({{"name", c.name}, {"points", c.points}, {"max_relative_error", c.max_relative_error}});
        err << c.name << ": max relative error " << c.max_relative_error << '\n';
      }
      print_json(out, {{"cases", cases},
                       {"max_relative_error", report.max_relative_error},
                       {"tolerance", kGradCheckTolerance},
                       {"passed", report.passed()}});
      return report.passed() ? kExitOk : kExitRuntime;
    }
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace emtune::cli
