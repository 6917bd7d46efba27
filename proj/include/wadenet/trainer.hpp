#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "wadenet/dataset.hpp"
#include "wadenet/model.hpp"
#include "wadenet/metrics.hpp"

namespace wadenet {

struct TrainConfig {
  double lr0 = 0.001;
  int epochs = 150;
  int drop_epoch = 50;       // learning rate divides once, from this epoch on
  double drop_factor = 10.0;
  int batch_size = 32;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

// lr0 before drop_epoch, lr0 / drop_factor from drop_epoch on (single drop).
double lr_at_epoch(int epoch, const TrainConfig& config);

// Plain SGD: w <- w - lr * g. Every parameter must carry a gradient.
void sgd_step(ParamSet& params, double lr);

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;  // mean over batches
  double val_accuracy = 0.0;
  double val_macro_f1 = 0.0;
  double wall_seconds = 0.0;
};

// One JSONL metrics line. Wall time is reported only when `include_timing`
// is set; the default emits 0.0 so that runs with the same seed produce
// byte-identical metric streams.
std::string metrics_json_line(const EpochMetrics& m, bool include_timing = false);

struct EvalResult {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<std::vector<long long>> confusion;
};

// Eval-mode pass over `examples` (argmax prediction per window).
EvalResult evaluate(Model& model, std::span<const WindowedExample> examples,
                    int batch_size);

struct Dataset {
  std::vector<WindowedExample> examples;
  std::vector<std::string> vocab;
};

using EpochCallback = std::function<void(const EpochMetrics&, Model&)>;

// The full optimization loop: per epoch, shuffle the train windows, iterate
// batches (the final partial batch is kept), take one SGD step per batch
// with batch-norm in train mode, then run an eval-mode pass over the val
// split. Deterministic given (seed, data, config).
std::vector<EpochMetrics> train(Model& model, const Dataset& data,
                                const TrainConfig& config,
                                const EpochCallback& on_epoch = {});

// ---------------------------------------------------------------------------
// checkpoints

struct TrainerState {
  int epochs_completed = 0;
  double lr = 0.0;
  std::array<std::uint64_t, 4> shuffle_rng{};
  std::array<std::uint64_t, 4> dropout_rng{};
};

// Windowing parameters embedded in a checkpoint so evaluation reproduces the
// training-time pipeline.
struct DataParams {
  int sample_rate = 16000;
  int hop = 1280;
  std::vector<std::string> vocab;
};

struct Checkpoint {
  ModelConfig config;
  ParamSet params;                       // float32-quantized on disk
  std::map<std::string, BnStats> bn;
  TrainerState trainer;
  DataParams data;
  std::vector<EpochMetrics> history;
};

// Binary format: magic "WDN1", u32 version=1, u32 JSON header length, JSON
// header (config, data params, trainer state, metrics history, tensor
// directory), then float32 LE tensor payloads in directory order.
void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const TrainerState& trainer, const DataParams& data,
                     const std::vector<EpochMetrics>& history);

Checkpoint load_checkpoint(const std::filesystem::path& path);

// Model with the checkpoint's parameters and running statistics.
Model model_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace wadenet
