// Command-line entry point: synth | preprocess | train | eval | params |
// gradcheck. stdout carries machine-readable JSON/JSONL; diagnostics go to
// stderr. Exit codes: 0 success, 1 internal error, 2 config error,
// 3 data error.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "wadenet/dataset.hpp"
#include "wadenet/gradcheck.hpp"
#include "wadenet/model.hpp"
#include "wadenet/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace wadenet;

namespace {

constexpr int kExitInternal = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

void require_file(const fs::path& path, const char* what, bool config_class) {
  if (!fs::exists(path)) {
    const std::string message =
        std::string(what) + " not found: " + path.string();
    if (config_class) throw ConfigError(message);
    throw DataError(message);
  }
}

fs::path default_out_dir(std::uint64_t seed) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm_utc);
  return fs::path("runs") / (std::string(stamp) + "-seed" + std::to_string(seed));
}

struct TrainFlags {
  std::string config_path;
  std::string manifest_path;
  std::string cache_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  double lr = 0.001;
  int epochs = 150;
  int drop_epoch = 50;
  double drop_factor = 10.0;
  int batch_size = 32;
  double overlap = 0.75;
  int sample_rate = 16000;
  int threads = 0;
  bool wall_clock = false;
};

Dataset windows_for_run(const ModelConfig& model_config, Manifest& manifest,
                        const TrainFlags& flags, int hop) {
  Dataset data;
  data.vocab = manifest.vocab();
  if (static_cast<int>(data.vocab.size()) != model_config.num_classes) {
    throw ConfigError("config expects " +
                      std::to_string(model_config.num_classes) +
                      " classes but the manifest has " +
                      std::to_string(data.vocab.size()));
  }
  if (!flags.cache_path.empty()) {
    int cached_len = 0;
    data.examples = read_window_cache(flags.cache_path, &cached_len);
    if (cached_len != model_config.window_len) {
      throw ConfigError("window cache length " + std::to_string(cached_len) +
                        " does not match config window_len " +
                        std::to_string(model_config.window_len));
    }
    return data;
  }
  WindowingOptions options;
  options.sample_rate = flags.sample_rate;
  options.window_len = model_config.window_len;
  options.hop = hop;
  options.max_threads = flags.threads;
  data.examples = window_manifest(manifest, options).examples;
  return data;
}

int cmd_synth(const std::string& out_dir, const SynthOptions& options) {
  fs::create_directories(out_dir);
  Manifest manifest = synth_dataset(options, out_dir);
  write_manifest(manifest, fs::path(out_dir) / "manifest.csv");
  json summary;
  summary["clips"] = manifest.rows.size();
  summary["classes"] = options.classes;
  summary["dir"] = out_dir;
  summary["manifest"] = (fs::path(out_dir) / "manifest.csv").string();
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_preprocess(const std::string& manifest_path, const std::string& out_dir,
                   int window_samples, double window_ms, double overlap,
                   int sample_rate, std::uint64_t seed, int threads) {
  require_file(manifest_path, "manifest", false);
  Manifest manifest = read_manifest(manifest_path);
  if (manifest.rows.empty()) throw DataError("manifest has no rows");
  if (!manifest.fully_split()) {
    split_stratified(manifest, {0.6, 0.2, 0.2}, seed);
  }

  WindowingOptions options;
  options.sample_rate = sample_rate;
  if (window_samples > 0) {
    if (overlap < 0.0 || overlap >= 1.0) {
      throw ConfigError("overlap must be in [0, 1)");
    }
    options.window_len = window_samples;
    options.hop = std::max(
        1, static_cast<int>(std::lround(window_samples * (1.0 - overlap))));
  } else {
    const WindowGeometry g = window_geometry(sample_rate, window_ms, overlap);
    options.window_len = g.window_len;
    options.hop = g.hop;
  }
  options.max_threads = threads;

  fs::create_directories(out_dir);
  const WindowingReport report = window_manifest(manifest, options);
  const fs::path cache_path = fs::path(out_dir) / "windows.wdnw";
  const fs::path manifest_out = fs::path(out_dir) / "manifest.csv";
  write_window_cache(cache_path, report.examples, options.window_len);
  // Re-written rows keep paths resolvable from the new location.
  Manifest annotated = manifest;
  for (auto& row : annotated.rows) {
    row.path = fs::absolute(manifest.resolve(row)).lexically_normal().string();
  }
  write_manifest(annotated, manifest_out);

  json summary;
  summary["windows"] = report.examples.size();
  summary["window_len"] = options.window_len;
  summary["hop"] = options.hop;
  summary["skipped_short_clips"] = report.skipped_short_clips;
  summary["cache"] = cache_path.string();
  summary["manifest"] = manifest_out.string();
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_train(const TrainFlags& flags) {
  require_file(flags.config_path, "config file", true);
  require_file(flags.manifest_path, "manifest", false);
  ModelConfig model_config = ModelConfig::from_json_file(flags.config_path);

  Manifest manifest = read_manifest(flags.manifest_path);
  if (manifest.rows.empty()) throw DataError("manifest has no rows");
  if (!manifest.fully_split()) {
    split_stratified(manifest, {0.6, 0.2, 0.2}, flags.seed);
  }

  const int hop = std::max(
      1, static_cast<int>(
             std::lround(model_config.window_len * (1.0 - flags.overlap))));
  Dataset data = windows_for_run(model_config, manifest, flags, hop);

  TrainConfig train_config;
  train_config.lr0 = flags.lr;
  train_config.epochs = flags.epochs;
  train_config.drop_epoch = std::min(flags.drop_epoch, flags.epochs);
  train_config.drop_factor = flags.drop_factor;
  train_config.batch_size = flags.batch_size;
  train_config.seed = flags.seed;

  const fs::path out_dir =
      flags.out_dir.empty() ? default_out_dir(flags.seed) : fs::path(flags.out_dir);
  fs::create_directories(out_dir);
  {
    Manifest annotated = manifest;
    for (auto& row : annotated.rows) {
      row.path = fs::absolute(manifest.resolve(row)).lexically_normal().string();
    }
    write_manifest(annotated, out_dir / "manifest.csv");
  }

  Model model(model_config);
  Rng init_rng = Rng(flags.seed).derive(0x494e4954u);
  model.init(init_rng);

  DataParams data_params;
  data_params.sample_rate = flags.sample_rate;
  data_params.hop = hop;
  data_params.vocab = data.vocab;

  std::ofstream metrics_out(out_dir / "metrics.jsonl", std::ios::binary);
  if (!metrics_out) throw DataError("cannot write metrics.jsonl");

  std::vector<EpochMetrics> history;
  double best_val = -1.0;
  const bool wall_clock = flags.wall_clock;
  auto on_epoch = [&](const EpochMetrics& m, Model& current) {
    history.push_back(m);
    const std::string line = metrics_json_line(m, wall_clock);
    metrics_out << line << "\n";
    metrics_out.flush();
    std::cout << line << "\n";
    std::cerr << "epoch " << m.epoch << ": loss " << m.train_loss << ", val acc "
              << m.val_accuracy << ", " << m.wall_seconds << " s\n";
    TrainerState state;
    state.epochs_completed = m.epoch + 1;
    state.lr = m.lr;
    if (m.val_accuracy > best_val) {
      best_val = m.val_accuracy;
      save_checkpoint(out_dir / "checkpoint_best.wdn", current, state,
                      data_params, history);
    }
  };

  train(model, data, train_config, on_epoch);

  TrainerState state;
  state.epochs_completed = train_config.epochs;
  state.lr = lr_at_epoch(train_config.epochs - 1, train_config);
  save_checkpoint(out_dir / "checkpoint_final.wdn", model, state, data_params,
                  history);
  std::cerr << "finished " << train_config.epochs << " epochs; best val acc "
            << best_val << "; artifacts in " << out_dir << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& manifest_path,
             const std::string& split_str, int batch_size, int threads) {
  require_file(checkpoint_path, "checkpoint", false);
  require_file(manifest_path, "manifest", false);
  const Split split = split_from_name(split_str);
  if (split == Split::kUnassigned) throw ConfigError("invalid --split value");

  Checkpoint ck = load_checkpoint(checkpoint_path);
  Manifest manifest = read_manifest(manifest_path);
  if (manifest.vocab() != ck.data.vocab) {
    throw ConfigError(
        "manifest label vocabulary does not match the checkpoint's");
  }

  WindowingOptions options;
  options.sample_rate = ck.data.sample_rate;
  options.window_len = ck.config.window_len;
  options.hop = ck.data.hop;
  options.max_threads = threads;

  Manifest filtered;
  filtered.base_dir = manifest.base_dir;
  for (const auto& row : manifest.rows) {
    if (row.split == split) filtered.rows.push_back(row);
  }
  if (filtered.rows.empty()) {
    throw DataError("split \"" + split_str + "\" has no clips");
  }
  const auto examples = window_manifest(filtered, options).examples;
  if (examples.empty()) throw DataError("split \"" + split_str + "\" has no windows");

  Model model = model_from_checkpoint(ck);
  const EvalResult result = evaluate(model, examples, batch_size);

  nlohmann::ordered_json out;
  out["acc"] = result.accuracy;
  out["macro_f1"] = result.macro_f1;
  out["confusion"] = result.confusion;
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_params(const std::string& config_path) {
  require_file(config_path, "config file", true);
  const ModelConfig config = ModelConfig::from_json_file(config_path);
  const ParamCountTable table = param_count(config);
  nlohmann::ordered_json out;
  out["model"] = config.kind == ModelConfig::Kind::kNaive ? "naive" : "wadenet";
  out["layers"] = json::array();
  for (const auto& layer : table.layers) {
    out["layers"].push_back({{"name", layer.name},
                             {"shape", layer.shape},
                             {"count", layer.count}});
  }
  out["total"] = table.total;
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_gradcheck(const std::string& corrupt_op) {
  const auto results = run_gradcheck_all(corrupt_op);
  bool all_pass = true;
  std::string first_failure;
  for (const auto& r : results) {
    nlohmann::ordered_json line;
    line["op"] = r.op;
    line["max_rel_err"] = r.max_rel_err;
    line["pass"] = r.pass;
    std::cout << line.dump() << "\n";
    if (!r.pass && all_pass) {
      all_pass = false;
      first_failure = r.op;
    }
  }
  if (!all_pass) {
    std::cerr << "gradcheck failed: " << first_failure << "\n";
    return kExitInternal;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"WaDeNet speech classifier: training, evaluation and data tools"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic sinusoid corpus");
  std::string synth_out;
  SynthOptions synth_options;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--classes", synth_options.classes, "number of classes");
  synth->add_option("--clips", synth_options.clips_per_class, "clips per class");
  synth->add_option("--seconds", synth_options.seconds, "clip length in seconds");
  synth->add_option("--rate", synth_options.sample_rate, "sample rate in Hz");
  synth->add_option("--seed", synth_options.seed, "generator seed");

  // preprocess
  auto* preprocess =
      app.add_subcommand("preprocess", "split, window and cache a corpus");
  std::string pre_manifest, pre_out;
  int pre_window_samples = 0;
  double pre_window_ms = 320.0, pre_overlap = 0.75;
  int pre_rate = 16000, pre_threads = 0;
  std::uint64_t pre_seed = 0;
  preprocess->add_option("--manifest", pre_manifest, "input manifest CSV")->required();
  preprocess->add_option("--out", pre_out, "output directory")->required();
  preprocess->add_option("--window-samples", pre_window_samples,
                         "window length in samples (overrides --window-ms)");
  preprocess->add_option("--window-ms", pre_window_ms, "window length in ms");
  preprocess->add_option("--overlap", pre_overlap, "fractional window overlap");
  preprocess->add_option("--rate", pre_rate, "target sample rate in Hz");
  preprocess->add_option("--seed", pre_seed, "split seed");
  preprocess->add_option("--threads", pre_threads, "datapipe worker cap");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model");
  TrainFlags train_flags;
  train_cmd->add_option("--config", train_flags.config_path, "model config JSON")
      ->required();
  train_cmd->add_option("--manifest", train_flags.manifest_path, "manifest CSV")
      ->required();
  train_cmd->add_option("--cache", train_flags.cache_path,
                        "windowed cache (.wdnw) to train from");
  train_cmd->add_option("--out", train_flags.out_dir,
                        "run directory (default runs/<stamp>-seed<seed>)");
  train_cmd->add_option("--seed", train_flags.seed, "training seed");
  train_cmd->add_option("--lr", train_flags.lr, "initial learning rate");
  train_cmd->add_option("--epochs", train_flags.epochs, "training epochs");
  train_cmd->add_option("--drop-epoch", train_flags.drop_epoch,
                        "epoch at which the learning rate divides");
  train_cmd->add_option("--drop-factor", train_flags.drop_factor,
                        "learning rate division factor");
  train_cmd->add_option("--batch-size", train_flags.batch_size, "batch size");
  train_cmd->add_option("--overlap", train_flags.overlap, "window overlap");
  train_cmd->add_option("--rate", train_flags.sample_rate, "sample rate in Hz");
  train_cmd->add_option("--threads", train_flags.threads, "datapipe worker cap");
  train_cmd->add_flag("--wall-clock", train_flags.wall_clock,
                      "report real wall time in metrics.jsonl (breaks "
                      "byte-level reproducibility)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_checkpoint, eval_manifest, eval_split = "test";
  int eval_batch = 64, eval_threads = 0;
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint file")
      ->required();
  eval_cmd->add_option("--manifest", eval_manifest, "manifest CSV")->required();
  eval_cmd->add_option("--split", eval_split, "train | val | test");
  eval_cmd->add_option("--batch-size", eval_batch, "batch size");
  eval_cmd->add_option("--threads", eval_threads, "datapipe worker cap");

  // params
  auto* params_cmd =
      app.add_subcommand("params", "per-layer parameter table for a config");
  std::string params_config;
  params_cmd->add_option("--config", params_config, "model config JSON")
      ->required();

  // gradcheck
  auto* gradcheck_cmd = app.add_subcommand(
      "gradcheck", "finite-difference check of every differentiable op");
  std::string corrupt_op;
  gradcheck_cmd
      ->add_option("--corrupt-op", corrupt_op,
                   "deliberately corrupt one op's gradients (test fixture)")
      ->group("");  // hidden

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_out, synth_options);
    if (preprocess->parsed()) {
      return cmd_preprocess(pre_manifest, pre_out, pre_window_samples,
                            pre_window_ms, pre_overlap, pre_rate, pre_seed,
                            pre_threads);
    }
    if (train_cmd->parsed()) return cmd_train(train_flags);
    if (eval_cmd->parsed()) {
      return cmd_eval(eval_checkpoint, eval_manifest, eval_split, eval_batch,
                      eval_threads);
    }
    if (params_cmd->parsed()) return cmd_params(params_config);
    if (gradcheck_cmd->parsed()) return cmd_gradcheck(corrupt_op);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
