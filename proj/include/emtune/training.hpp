#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "emtune/data.hpp"
#include "emtune/losses.hpp"
#include "emtune/model.hpp"

namespace emtune {

enum class LossMode { contrastive, noncontrastive, combined };

const char* loss_mode_name(LossMode mode);
LossMode parse_loss_mode(const std::string& name);

struct TrainConfig {
  LossMode loss_mode = LossMode::combined;
  double margin = 1.0;
  double lambda = kDefaultBarlowLambda;
  double beta = kDefaultCombinationBeta;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
  bool center = false;

  // Throws ConfigError on m < 0, lambda < 0, beta < 0, B < 2, epochs < 1,
  // or a negative / non-finite learning rate.
  void validate() const;
  // True when batches feed the cross-correlation term.
  bool uses_barlow() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> dev_accuracy;
};

struct RunLog {
  std::vector<EpochRecord> epochs;
  std::string checkpoint_path;

  // One JSON object per epoch, then one {"checkpoint": ...} line when set.
  std::string to_jsonl() const;
};

struct Stage1Result {
  Encoder encoder;
  RunLog log;
};

// Encoder finetuning with the configured metric-learning objective.
Stage1Result train_stage1(const Dataset& data, const EncoderConfig& encoder_config,
                          const TrainConfig& config);
// Continues from an existing encoder instead of a fresh initialization.
Stage1Result train_stage1(const Dataset& data, Encoder encoder, const TrainConfig& config);

struct Stage2Result {
  Adapter adapter;
  RunLog log;
};

// Adapter training on embeddings of a frozen encoder.
Stage2Result train_stage2(const Dataset& data, const Encoder& encoder, std::size_t adapter_hidden,
                          const TrainConfig& config);

struct EndToEndResult {
  Encoder encoder;
  Adapter adapter;
  RunLog log;
};

// Single-stage baseline: encoder and adapter trained jointly on
// cross-entropy only.
EndToEndResult train_end2end_baseline(const Dataset& data, const EncoderConfig& encoder_config,
                                      std::size_t adapter_hidden, const TrainConfig& config);

struct EvaluationReport {
  std::size_t samples = 0;
  double accuracy = 0.0;
  std::optional<double> mae;
  std::vector<int> predictions;
};

// pooled -> encoder -> adapter -> argmax (lowest index wins ties).
EvaluationReport evaluate(const Dataset& data, Split split, const Encoder& encoder,
                          const std::optional<Adapter>& adapter);
EvaluationReport evaluate_pooled(const PooledSplit& split, const std::vector<double>& midpoints,
                                 const Encoder& encoder, const std::optional<Adapter>& adapter);

// Row-wise argmax, ties to the lowest index.
std::vector<int> argmax_rows(const Matrix& logits);

}  // namespace emtune
