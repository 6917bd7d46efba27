#include "wadenet/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>

#include "json.hpp"

namespace wadenet {

void TrainConfig::validate() const {
  if (lr0 < 0.0) throw ConfigError("learning rate must be non-negative");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (drop_epoch < 1 || drop_epoch > epochs) {
    throw ConfigError("drop_epoch must be in [1, epochs]");
  }
  if (drop_factor <= 1.0) throw ConfigError("drop_factor must be > 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

double lr_at_epoch(int epoch, const TrainConfig& config) {
  return epoch < config.drop_epoch ? config.lr0
                                   : config.lr0 / config.drop_factor;
}

void sgd_step(ParamSet& params, double lr) {
  for (auto& [name, tensor] : params) {
    if (!tensor.has_grad()) {
      throw ContractError("sgd_step: parameter \"" + name +
                          "\" has no gradient");
    }
    double* w = tensor.data().data();
    const double* g = tensor.grad().data();
    const std::size_t n = tensor.numel();
    for (std::size_t i = 0; i < n; ++i) w[i] -= lr * g[i];
  }
}

namespace {

// Upcasts a set of float32 windows into one (B, 1, L) batch.
Tensor make_batch(std::span<const WindowedExample> examples,
                  std::span<const std::size_t> indices,
                  std::vector<int>& targets) {
  const int window_len = static_cast<int>(examples[indices[0]].window.size());
  Tensor x({static_cast<int>(indices.size()), 1, window_len});
  targets.clear();
  double* out = x.data().data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const WindowedExample& ex = examples[indices[i]];
    targets.push_back(ex.label);
    for (int t = 0; t < window_len; ++t) {
      out[i * static_cast<std::size_t>(window_len) +
          static_cast<std::size_t>(t)] = ex.window[static_cast<std::size_t>(t)];
    }
  }
  return x;
}

std::vector<std::size_t> split_indices(std::span<const WindowedExample> examples,
                                       Split split) {
  std::vector<std::size_t> indices;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].split == split) indices.push_back(i);
  }
  return indices;
}

}  // namespace

EvalResult evaluate(Model& model, std::span<const WindowedExample> examples,
                    int batch_size) {
  if (examples.empty()) throw DataError("evaluate: empty example set");
  std::vector<int> y_true, y_pred;
  y_true.reserve(examples.size());
  y_pred.reserve(examples.size());

  Rng unused(0);
  std::vector<std::size_t> indices(examples.size());
  std::iota(indices.begin(), indices.end(), 0);
  std::vector<int> targets;
  const int classes = model.config.num_classes;
  for (std::size_t at = 0; at < indices.size();
       at += static_cast<std::size_t>(batch_size)) {
    const std::size_t count =
        std::min<std::size_t>(static_cast<std::size_t>(batch_size),
                              indices.size() - at);
    Tensor x = make_batch(examples, {indices.data() + at, count}, targets);
    Tensor logits = model.forward(x, Mode::kEval, unused);
    for (std::size_t i = 0; i < count; ++i) {
      y_true.push_back(targets[i]);
      y_pred.push_back(argmax({logits.data().data() +
                                   i * static_cast<std::size_t>(classes),
                               static_cast<std::size_t>(classes)}));
    }
  }

  EvalResult result;
  result.confusion = confusion_matrix(y_true, y_pred, classes);
  result.accuracy = accuracy(result.confusion);
  result.macro_f1 = macro_f1(result.confusion);
  return result;
}

std::vector<EpochMetrics> train(Model& model, const Dataset& data,
                                const TrainConfig& config,
                                const EpochCallback& on_epoch) {
  config.validate();
  auto train_idx = split_indices(data.examples, Split::kTrain);
  auto val_idx = split_indices(data.examples, Split::kVal);
  if (train_idx.empty()) throw DataError("train split is empty");
  if (val_idx.empty()) throw DataError("val split is empty");

  std::vector<WindowedExample> val_examples;
  val_examples.reserve(val_idx.size());
  for (std::size_t i : val_idx) val_examples.push_back(data.examples[i]);

  Rng shuffle_rng = Rng(config.seed).derive(0x53485546u);
  Rng dropout_rng = Rng(config.seed).derive(0x44524f50u);

  std::vector<EpochMetrics> history;
  std::vector<int> targets;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const double lr = lr_at_epoch(epoch, config);
    shuffle_rng.shuffle(train_idx);

    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t at = 0; at < train_idx.size();
         at += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t count =
          std::min<std::size_t>(static_cast<std::size_t>(config.batch_size),
                                train_idx.size() - at);
      Tensor x = make_batch(data.examples, {train_idx.data() + at, count},
                            targets);
      Tape tape;
      for (auto& [name, tensor] : model.params) {
        (void)name;
        tape.watch(tensor);
      }
      Tensor logits = model.forward(x, Mode::kTrain, dropout_rng);
      Tensor loss = softmax_cross_entropy(logits, targets);
      tape.backward(loss);
      sgd_step(model.params, lr);
      loss_sum += loss.item();
      ++batches;
    }

    const EvalResult val = evaluate(model, val_examples, config.batch_size);
    EpochMetrics m;
    m.epoch = epoch;
    m.lr = lr;
    m.train_loss = loss_sum / batches;
    m.val_accuracy = val.accuracy;
    m.val_macro_f1 = val.macro_f1;
    m.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
            .count();
    history.push_back(m);
    if (on_epoch) on_epoch(m, model);
  }
  return history;
}

std::string metrics_json_line(const EpochMetrics& m, bool include_timing) {
  nlohmann::ordered_json line;
  line["epoch"] = m.epoch;
  line["lr"] = m.lr;
  line["train_loss"] = m.train_loss;
  line["val_acc"] = m.val_accuracy;
  line["val_f1"] = m.val_macro_f1;
  line["seconds"] = include_timing ? m.wall_seconds : 0.0;
  return line.dump();
}

// ---------------------------------------------------------------------------
// checkpoints

namespace {

using nlohmann::json;

constexpr char kCheckpointMagic[4] = {'W', 'D', 'N', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

json metrics_to_json(const std::vector<EpochMetrics>& history) {
  json out = json::array();
  for (const auto& m : history) {
    out.push_back({{"epoch", m.epoch},
                   {"lr", m.lr},
                   {"train_loss", m.train_loss},
                   {"val_acc", m.val_accuracy},
                   {"val_f1", m.val_macro_f1},
                   {"seconds", 0.0}});
  }
  return out;
}

std::vector<EpochMetrics> metrics_from_json(const json& doc) {
  std::vector<EpochMetrics> history;
  for (const auto& item : doc) {
    EpochMetrics m;
    m.epoch = item.at("epoch").get<int>();
    m.lr = item.at("lr").get<double>();
    m.train_loss = item.at("train_loss").get<double>();
    m.val_accuracy = item.at("val_acc").get<double>();
    m.val_macro_f1 = item.at("val_f1").get<double>();
    m.wall_seconds = item.at("seconds").get<double>();
    history.push_back(m);
  }
  return history;
}

void put_u32le_stream(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {
      static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
      static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes, 4);
}

std::uint32_t get_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

// Stats tensors are serialized alongside parameters under reserved names.
std::vector<std::pair<std::string, const std::vector<double>*>>
tensor_directory(const ParamSet& params, const std::map<std::string, BnStats>& bn) {
  std::vector<std::pair<std::string, const std::vector<double>*>> entries;
  for (const auto& [name, tensor] : params) {
    entries.emplace_back(name, &tensor.data());
  }
  for (const auto& [name, stats] : bn) {
    entries.emplace_back(name + ".running_mean", &stats.running_mean);
    entries.emplace_back(name + ".running_var", &stats.running_var);
  }
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return entries;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const TrainerState& trainer, const DataParams& data,
                     const std::vector<EpochMetrics>& history) {
  const auto entries = tensor_directory(model.params, model.bn);

  json header;
  header["config"] = json::parse(model.config.to_json());
  header["data"] = {{"sample_rate", data.sample_rate},
                    {"hop", data.hop},
                    {"vocab", data.vocab}};
  header["trainer"] = {{"epochs_completed", trainer.epochs_completed},
                       {"lr", trainer.lr},
                       {"shuffle_rng", trainer.shuffle_rng},
                       {"dropout_rng", trainer.dropout_rng}};
  header["metrics"] = metrics_to_json(history);

  json directory = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, values] : entries) {
    json entry;
    entry["name"] = name;
    if (auto it = model.params.find(name); it != model.params.end()) {
      entry["shape"] = it->second.shape();
    } else {
      entry["shape"] = {static_cast<int>(values->size())};
    }
    entry["offset"] = offset;
    directory.push_back(entry);
    offset += values->size() * 4;
  }
  header["tensors"] = directory;

  const std::string header_text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  out.write(kCheckpointMagic, 4);
  put_u32le_stream(out, kCheckpointVersion);
  put_u32le_stream(out, static_cast<std::uint32_t>(header_text.size()));
  out.write(header_text.data(),
            static_cast<std::streamsize>(header_text.size()));
  for (const auto& [name, values] : entries) {
    (void)name;
    for (double v : *values) {
      const float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_u32le_stream(out, bits);
    }
  }
  if (!out) throw DataError("short write to checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw DataError("checkpoint has bad magic: " + path.string());
  }
  if (get_u32le(bytes.data() + 4) != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version in " + path.string());
  }
  const std::uint32_t header_len = get_u32le(bytes.data() + 8);
  if (12 + static_cast<std::size_t>(header_len) > bytes.size()) {
    throw DataError("checkpoint truncated inside header: " + path.string());
  }
  json header;
  try {
    header = json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("checkpoint header is not valid JSON: ") +
                    e.what());
  }

  Checkpoint ck;
  try {
    ck.config = ModelConfig::from_json(header.at("config").dump());
    ck.data.sample_rate = header.at("data").at("sample_rate").get<int>();
    ck.data.hop = header.at("data").at("hop").get<int>();
    ck.data.vocab =
        header.at("data").at("vocab").get<std::vector<std::string>>();
    ck.trainer.epochs_completed =
        header.at("trainer").at("epochs_completed").get<int>();
    ck.trainer.lr = header.at("trainer").at("lr").get<double>();
    ck.trainer.shuffle_rng =
        header.at("trainer").at("shuffle_rng").get<std::array<std::uint64_t, 4>>();
    ck.trainer.dropout_rng =
        header.at("trainer").at("dropout_rng").get<std::array<std::uint64_t, 4>>();
    ck.history = metrics_from_json(header.at("metrics"));
  } catch (const json::exception& e) {
    throw DataError(std::string("bad checkpoint header field: ") + e.what());
  }

  // Expected tensor set for the embedded config.
  Model expected(ck.config);
  ck.params = std::move(expected.params);
  ck.bn = std::move(expected.bn);
  std::map<std::string, std::vector<double>*> sinks;
  for (auto& [name, tensor] : ck.params) sinks[name] = &tensor.data();
  for (auto& [name, stats] : ck.bn) {
    sinks[name + ".running_mean"] = &stats.running_mean;
    sinks[name + ".running_var"] = &stats.running_var;
  }

  const std::size_t payload_start = 12 + header_len;
  std::size_t consumed = 0;
  std::set<std::string> filled;
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<int>>();
    const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
    auto sink = sinks.find(name);
    if (sink == sinks.end()) {
      throw DataError("checkpoint tensor \"" + name +
                      "\" is not part of the configured model");
    }
    std::size_t count = 1;
    for (int d : shape) count *= static_cast<std::size_t>(d);
    if (count != sink->second->size()) {
      throw DataError("checkpoint tensor \"" + name + "\" has shape " +
                      shape_string(shape) + ", expected " +
                      std::to_string(sink->second->size()) + " values");
    }
    if (auto it = ck.params.find(name);
        it != ck.params.end() && shape != it->second.shape()) {
      throw DataError("checkpoint tensor \"" + name +
                      "\" shape mismatch against config");
    }
    const std::size_t begin = payload_start + offset;
    if (begin + count * 4 > bytes.size()) {
      throw DataError("checkpoint truncated inside tensor \"" + name + "\"");
    }
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint32_t bits = get_u32le(bytes.data() + begin + i * 4);
      float f;
      std::memcpy(&f, &bits, 4);
      (*sink->second)[i] = static_cast<double>(f);
    }
    consumed += count * 4;
    filled.insert(name);
  }
  if (filled.size() != sinks.size()) {
    for (const auto& [name, ptr] : sinks) {
      (void)ptr;
      if (!filled.count(name)) {
        throw DataError("checkpoint is missing tensor \"" + name + "\"");
      }
    }
  }
  if (payload_start + consumed != bytes.size()) {
    throw DataError("checkpoint has trailing or missing payload bytes");
  }
  return ck;
}

Model model_from_checkpoint(const Checkpoint& checkpoint) {
  Model model(checkpoint.config);
  for (auto& [name, tensor] : model.params) {
    tensor.data() = checkpoint.params.at(name).data();
  }
  model.bn = checkpoint.bn;
  return model;
}

}  // namespace wadenet
