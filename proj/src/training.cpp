#include "emtune/training.hpp"

#include <cmath>
#include <numeric>

#include <json.hpp>

#include "emtune/adam.hpp"
#include "emtune/error.hpp"
#include "emtune/log.hpp"
#include "emtune/metrics.hpp"
#include "emtune/random.hpp"
#include "emtune/sampler.hpp"

namespace emtune {
namespace {

// Seed streams so that stages drawing from the same run seed stay independent.
constexpr std::uint64_t kAdapterInitStream = 0xada7;
constexpr std::uint64_t kMinibatchStream = 0xba7c;

void check_finite(double loss, std::size_t epoch) {
  if (!std::isfinite(loss)) {
    throw NumericError("training diverged: non-finite loss in epoch " + std::to_string(epoch));
  }
}

void require_trainable_split(const PooledSplit& train, std::size_t classes) {
  if (train.size() == 0) throw DataError("training split is empty");
  if (classes < 2) throw ConfigError("training needs at least 2 classes");
}

std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch_size,
                                                  std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(Rng::derive(Rng::derive(seed, kMinibatchStream), epoch));
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += batch_size) {
    const std::size_t end = std::min(n, i + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::vector<int> gather_labels(const std::vector<int>& labels, std::span<const std::size_t> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(labels[i]);
  return out;
}

std::optional<double> dev_accuracy(const Dataset& data, const Encoder& encoder,
                                   const Adapter& adapter) {
  if (data.dev.size() == 0) return std::nullopt;
  return evaluate_pooled(data.dev, {}, encoder, adapter).accuracy;
}

void require_encoder_matches(const Encoder& encoder, const Dataset& data) {
  if (encoder.net.input_dim() != data.feature_dim()) {
    throw DimensionError("encoder input dimension " + std::to_string(encoder.net.input_dim()) +
                         " does not match feature dimension " +
                         std::to_string(data.feature_dim()));
  }
}

}  // namespace

const char* loss_mode_name(LossMode mode) {
  switch (mode) {
    case LossMode::contrastive: return "contrastive";
    case LossMode::noncontrastive: return "noncontrastive";
    case LossMode::combined: return "combined";
  }
  return "?";
}

LossMode parse_loss_mode(const std::string& name) {
  if (name == "contrastive") return LossMode::contrastive;
  if (name == "noncontrastive") return LossMode::noncontrastive;
  if (name == "combined") return LossMode::combined;
  throw ConfigError("unknown loss mode '" + name + "' (contrastive|noncontrastive|combined)");
}

void TrainConfig::validate() const {
  if (!(margin >= 0.0)) throw ConfigError("margin must be >= 0");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be finite and >= 0");
  }
  if (batch_size < 2) throw ConfigError("batch size must be at least 2");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
}

bool TrainConfig::uses_barlow() const {
  return loss_mode == LossMode::noncontrastive || (loss_mode == LossMode::combined && beta > 0.0);
}

std::string RunLog::to_jsonl() const {
  std::string out;
  for (const auto& rec : epochs) {
    nlohmann::ordered_json line;
    line["epoch"] = rec.epoch;
    line["mean_loss"] = rec.mean_loss;
    if (rec.dev_accuracy) line["dev_accuracy"] = *rec.dev_accuracy;
    out += line.dump() + "\n";
  }
  if (!checkpoint_path.empty()) {
    out += nlohmann::ordered_json{{"checkpoint", checkpoint_path}}.dump() + "\n";
  }
  return out;
}

Stage1Result train_stage1(const Dataset& data, const EncoderConfig& encoder_config,
                          const TrainConfig& config) {
  config.validate();
  return train_stage1(data, init_encoder(encoder_config), config);
}

Stage1Result train_stage1(const Dataset& data, Encoder encoder, const TrainConfig& config) {
  config.validate();
  require_trainable_split(data.train, data.num_classes());
  require_encoder_matches(encoder, data);

  const auto& train = data.train;
  const CrossCorrelationOptions corr{config.center};
  auto params = encoder.net.parameters();
  auto adam = AdamState::for_params(params);
  Stage1Result result;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    TripletSamplerOptions sampler{config.batch_size, config.seed, epoch, !config.uses_barlow()};
    const auto plan = sample_triplets(train.labels, sampler);
    if (plan.batches.empty()) {
      throw DataError("epoch " + std::to_string(epoch) + " produced no triplet batches");
    }
    double loss_sum = 0.0;
    for (const auto& batch : plan.batches) {
      const std::size_t b = batch.size();
      std::vector<std::size_t> ia, ip, in;
      for (const auto& t : batch) {
        ia.push_back(t.anchor);
        ip.push_back(t.positive);
        in.push_back(t.negative);
      }
      // All roles share the encoder, so one stacked pass covers them.
      std::vector<Matrix> parts{gather_rows(train.features, ia), gather_rows(train.features, ip)};
      const bool needs_negative = config.loss_mode != LossMode::noncontrastive;
      if (needs_negative) parts.push_back(gather_rows(train.features, in));
      Mlp::Tape tape;
      const Matrix emb = encoder.net.forward(vstack(parts), tape);

      TripletBatch roles{slice_rows(emb, 0, b), slice_rows(emb, b, b), {}};
      std::vector<Matrix> grads;
      double loss = 0.0;
      switch (config.loss_mode) {
        case LossMode::contrastive: {
          roles.negative = slice_rows(emb, 2 * b, b);
          auto out = triplet_loss(roles, config.margin);
          loss = out.loss;
          grads = {std::move(out.grad_anchor), std::move(out.grad_positive),
                   std::move(out.grad_negative)};
          break;
        }
        case LossMode::noncontrastive: {
          auto out = barlow_twins_loss(roles.anchor, roles.positive, config.lambda, corr);
          loss = out.loss;
          grads = {std::move(out.grad_anchor), std::move(out.grad_positive)};
          break;
        }
        case LossMode::combined: {
          roles.negative = slice_rows(emb, 2 * b, b);
          auto out = combined_loss(roles, config.margin, config.lambda, config.beta, corr);
          loss = out.loss;
          grads = {std::move(out.grad_anchor), std::move(out.grad_positive),
                   std::move(out.grad_negative)};
          break;
        }
      }
      check_finite(loss, epoch);
      const auto g = encoder.net.backward(tape, vstack(grads));
      adam_update(params, g.params, adam, config.learning_rate);
      loss_sum += loss;
    }
    const double mean = loss_sum / static_cast<double>(plan.batches.size());
    result.log.epochs.push_back({epoch, mean, std::nullopt});
    log_info("stage1 epoch " + std::to_string(epoch) + " " + loss_mode_name(config.loss_mode) +
             " loss " + std::to_string(mean));
  }
  result.encoder = std::move(encoder);
  return result;
}

Stage2Result train_stage2(const Dataset& data, const Encoder& encoder, std::size_t adapter_hidden,
                          const TrainConfig& config) {
  config.validate();
  require_trainable_split(data.train, data.num_classes());
  require_encoder_matches(encoder, data);

  const AdapterShape shape{encoder.net.output_dim(), adapter_hidden, data.num_classes()};
  Stage2Result result{init_adapter(shape, Rng::derive(config.seed, kAdapterInitStream)), {}};
  auto params = result.adapter.net.parameters();
  auto adam = AdamState::for_params(params);

  // The encoder is only read here; its embeddings are computed once.
  const Matrix embeddings = encoder_forward(encoder, data.train.features);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto batches = minibatches(data.train.size(), config.batch_size, config.seed, epoch);
    double loss_sum = 0.0;
    for (const auto& idx : batches) {
      const auto labels = gather_labels(data.train.labels, idx);
      Mlp::Tape tape;
      const Matrix logits = result.adapter.net.forward(gather_rows(embeddings, idx), tape);
      const auto ce = cross_entropy_loss(logits, labels);
      check_finite(ce.loss, epoch);
      const auto g = result.adapter.net.backward(tape, ce.grad_logits);
      adam_update(params, g.params, adam, config.learning_rate);
      loss_sum += ce.loss;
    }
    const double mean = loss_sum / static_cast<double>(batches.size());
    result.log.epochs.push_back({epoch, mean, dev_accuracy(data, encoder, result.adapter)});
    log_info("stage2 epoch " + std::to_string(epoch) + " loss " + std::to_string(mean));
  }
  return result;
}

EndToEndResult train_end2end_baseline(const Dataset& data, const EncoderConfig& encoder_config,
                                      std::size_t adapter_hidden, const TrainConfig& config) {
  config.validate();
  require_trainable_split(data.train, data.num_classes());
  EndToEndResult result;
  result.encoder = init_encoder(encoder_config);
  require_encoder_matches(result.encoder, data);
  const AdapterShape shape{result.encoder.net.output_dim(), adapter_hidden, data.num_classes()};
  result.adapter = init_adapter(shape, Rng::derive(config.seed, kAdapterInitStream));

  auto params = result.encoder.net.parameters();
  const std::size_t encoder_param_count = params.size();
  for (Matrix* p : result.adapter.net.parameters()) params.push_back(p);
  auto adam = AdamState::for_params(params);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto batches = minibatches(data.train.size(), config.batch_size, config.seed, epoch);
    double loss_sum = 0.0;
    for (const auto& idx : batches) {
      const auto labels = gather_labels(data.train.labels, idx);
      Mlp::Tape enc_tape;
      Mlp::Tape ada_tape;
      const Matrix emb = result.encoder.net.forward(gather_rows(data.train.features, idx), enc_tape);
      const Matrix logits = result.adapter.net.forward(emb, ada_tape);
      const auto ce = cross_entropy_loss(logits, labels);
      check_finite(ce.loss, epoch);
      auto ga = result.adapter.net.backward(ada_tape, ce.grad_logits);
      auto ge = result.encoder.net.backward(enc_tape, ga.input_grad);
      std::vector<Matrix> grads = std::move(ge.params);
      grads.reserve(encoder_param_count + ga.params.size());
      for (auto& g : ga.params) grads.push_back(std::move(g));
      adam_update(params, grads, adam, config.learning_rate);
      loss_sum += ce.loss;
    }
    const double mean = loss_sum / static_cast<double>(batches.size());
    result.log.epochs.push_back({epoch, mean, dev_accuracy(data, result.encoder, result.adapter)});
    log_info("end-to-end epoch " + std::to_string(epoch) + " loss " + std::to_string(mean));
  }
  return result;
}

std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;
    out[r] = static_cast<int>(best);
  }
  return out;
}

EvaluationReport evaluate_pooled(const PooledSplit& split, const std::vector<double>& midpoints,
                                 const Encoder& encoder, const std::optional<Adapter>& adapter) {
  if (!adapter) throw StateError("evaluate: no adapter available (train one with stage 2)");
  if (split.size() == 0) throw DataError("evaluate: split is empty");
  EvaluationReport report;
  report.samples = split.size();
  report.predictions = argmax_rows(adapter_forward(*adapter, encoder_forward(encoder, split.features)));
  report.accuracy = accuracy(report.predictions, split.labels);
  if (!midpoints.empty()) report.mae = age_mae(report.predictions, split.labels, midpoints);
  return report;
}

EvaluationReport evaluate(const Dataset& data, Split split, const Encoder& encoder,
                          const std::optional<Adapter>& adapter) {
  return evaluate_pooled(data.split(split), data.manifest.midpoints_by_index(), encoder, adapter);
}

}  // namespace emtune
