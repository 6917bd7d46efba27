#include "wadenet/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

#include "wadenet/error.hpp"
#include "wadenet/rng.hpp"

namespace wadenet {

std::string split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
    case Split::kUnassigned: return "";
  }
  return "";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  if (name.empty()) return Split::kUnassigned;
  throw DataError("unknown split name: " + name);
}

std::vector<std::string> Manifest::vocab() const {
  std::set<std::string> labels;
  for (const auto& row : rows) labels.insert(row.label);
  return {labels.begin(), labels.end()};
}

bool Manifest::fully_split() const {
  for (const auto& row : rows) {
    if (row.split == Split::kUnassigned) return false;
  }
  return !rows.empty();
}

std::filesystem::path Manifest::resolve(const ManifestRow& row) const {
  std::filesystem::path p(row.path);
  return p.is_absolute() ? p : base_dir / p;
}

// ---------------------------------------------------------------------------
// manifest CSV

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path.string());
  Manifest manifest;
  manifest.base_dir = path.parent_path();

  std::string line;
  if (!std::getline(in, line)) throw DataError("empty manifest: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "path,label,split") {
    throw DataError("manifest header must be \"path,label,split\", got \"" +
                    line + "\"");
  }
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto first = line.find(',');
    const auto second = line.find(',', first + 1);
    if (first == std::string::npos || second == std::string::npos) {
      throw DataError("malformed manifest row: " + line);
    }
    ManifestRow row;
    row.path = line.substr(0, first);
    row.label = line.substr(first + 1, second - first - 1);
    row.split = split_from_name(line.substr(second + 1));
    if (row.path.empty() || row.label.empty()) {
      throw DataError("manifest row with empty path or label: " + line);
    }
    if (!seen.insert(row.path).second) {
      throw DataError("duplicate manifest path: " + row.path);
    }
    manifest.rows.push_back(std::move(row));
  }
  return manifest;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);  // binary keeps LF endings
  if (!out) throw DataError("cannot write manifest: " + path.string());
  out << "path,label,split\n";
  for (const auto& row : manifest.rows) {
    out << row.path << ',' << row.label << ',' << split_name(row.split) << '\n';
  }
  if (!out) throw DataError("short write to manifest: " + path.string());
}

// ---------------------------------------------------------------------------
// stratified split

void split_stratified(Manifest& manifest, std::array<double, 3> ratios,
                      std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
    by_label[manifest.rows[i].label].push_back(i);
  }
  Rng rng = Rng(seed).derive(0x53504c49u);  // split substream
  for (auto& [label, indices] : by_label) {
    if (indices.size() < 3) {
      throw DataError("stratified split needs at least 3 clips per class; \"" +
                      label + "\" has " + std::to_string(indices.size()));
    }
    rng.shuffle(indices);

    const double n = static_cast<double>(indices.size());
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> remainder{};
    std::size_t assigned = 0;
    for (int s = 0; s < 3; ++s) {
      const double exact = n * ratios[static_cast<std::size_t>(s)];
      counts[static_cast<std::size_t>(s)] =
          static_cast<std::size_t>(std::floor(exact));
      remainder[static_cast<std::size_t>(s)] =
          exact - std::floor(exact);
      assigned += counts[static_cast<std::size_t>(s)];
    }
    // Largest remainder first; ties go to the earlier split.
    while (assigned < indices.size()) {
      int best = 0;
      for (int s = 1; s < 3; ++s) {
        if (remainder[static_cast<std::size_t>(s)] >
            remainder[static_cast<std::size_t>(best)]) {
          best = s;
        }
      }
      counts[static_cast<std::size_t>(best)] += 1;
      remainder[static_cast<std::size_t>(best)] = -1.0;
      ++assigned;
    }

    std::size_t cursor = 0;
    for (int s = 0; s < 3; ++s) {
      for (std::size_t i = 0; i < counts[static_cast<std::size_t>(s)]; ++i) {
        manifest.rows[indices[cursor++]].split = static_cast<Split>(s);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// windowing

std::vector<double> normalize_window(std::vector<double> window) {
  const double n = static_cast<double>(window.size());
  double mean = 0.0;
  for (double v : window) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : window) {
    const double d = v - mean;
    var += d * d;
  }
  var /= n;
  const double scale = 1.0 / (std::sqrt(var) + 1e-8);
  for (double& v : window) v = (v - mean) * scale;
  return window;
}

std::vector<std::size_t> window_starts(std::size_t samples,
                                       std::size_t window_len,
                                       std::size_t hop) {
  if (window_len == 0 || hop == 0) {
    throw ShapeError("window length and hop must be positive");
  }
  std::vector<std::size_t> starts;
  if (samples < window_len) return starts;
  const std::size_t count = (samples - window_len) / hop + 1;
  starts.reserve(count);
  for (std::size_t i = 0; i < count; ++i) starts.push_back(i * hop);
  return starts;
}

std::vector<WindowedExample> segment_windows(const AudioClip& clip,
                                             int window_len, int hop,
                                             int clip_id, Split split) {
  std::vector<WindowedExample> out;
  const auto starts =
      window_starts(clip.samples.size(), static_cast<std::size_t>(window_len),
                    static_cast<std::size_t>(hop));
  out.reserve(starts.size());
  for (std::size_t start : starts) {
    std::vector<double> window(clip.samples.begin() + static_cast<std::ptrdiff_t>(start),
                               clip.samples.begin() + static_cast<std::ptrdiff_t>(start) +
                                   window_len);
    window = normalize_window(std::move(window));
    WindowedExample ex;
    ex.window.assign(window.begin(), window.end());  // quantize to float32
    ex.label = clip.label;
    ex.split = split;
    ex.clip_id = clip_id;
    out.push_back(std::move(ex));
  }
  return out;
}

WindowGeometry window_geometry(int sample_rate, double window_ms,
                               double overlap) {
  if (overlap < 0.0 || overlap >= 1.0) {
    throw ConfigError("overlap must be in [0, 1)");
  }
  WindowGeometry g;
  g.window_len =
      static_cast<int>(std::lround(sample_rate * window_ms / 1000.0));
  g.hop = std::max(1, static_cast<int>(std::lround(g.window_len * (1.0 - overlap))));
  return g;
}

int datapipe_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("WADENET_THREADS")) {
    const int parsed = std::atoi(env);
    if (parsed > 0) return std::min(parsed, 256);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

WindowingReport window_manifest(const Manifest& manifest,
                                const WindowingOptions& options) {
  const std::size_t n = manifest.rows.size();
  std::vector<std::vector<WindowedExample>> per_clip(n);
  std::vector<std::string> errors(n);

  const auto vocab = manifest.vocab();
  std::map<std::string, int> label_ids;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    label_ids[vocab[i]] = static_cast<int>(i);
  }

  const int workers =
      std::max(1, std::min<int>(datapipe_threads(options.max_threads),
                                static_cast<int>(std::max<std::size_t>(n, 1))));
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      const auto& row = manifest.rows[i];
      try {
        AudioClip clip = read_wav(manifest.resolve(row));
        clip.label = label_ids.at(row.label);
        clip = resample_linear(clip, options.sample_rate);
        per_clip[i] = segment_windows(clip, options.window_len, options.hop,
                                      static_cast<int>(i), row.split);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) throw DataError(errors[i]);
  }

  WindowingReport report;
  for (std::size_t i = 0; i < n; ++i) {
    if (per_clip[i].empty()) {
      ++report.skipped_short_clips;
      std::cerr << "warning: clip shorter than one window, skipped: "
                << manifest.rows[i].path << "\n";
      continue;
    }
    report.examples.insert(report.examples.end(),
                           std::make_move_iterator(per_clip[i].begin()),
                           std::make_move_iterator(per_clip[i].end()));
  }
  return report;
}

// ---------------------------------------------------------------------------
// EmoDB adapter

Manifest emodb_manifest(const std::filesystem::path& dir,
                        std::vector<std::string>* rejects) {
  static const std::map<char, std::string> kEmotionCodes = {
      {'W', "anger"},   {'L', "boredom"},  {'E', "disgust", },
      {'A', "fear"},    {'F', "happiness"}, {'T', "sadness"},
      {'N', "neutral"}};

  Manifest manifest;
  manifest.base_dir = dir;
  if (!std::filesystem::is_directory(dir)) {
    throw DataError("EmoDB directory does not exist: " + dir.string());
  }
  std::vector<std::string> names;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().extension() != ".wav") continue;
    names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());

  for (const auto& name : names) {
    const std::string stem = std::filesystem::path(name).stem().string();
    if (stem.size() < 6) {
      if (rejects) rejects->push_back(name + ": file name too short");
      continue;
    }
    const char code = stem[5];
    auto it = kEmotionCodes.find(code);
    if (it == kEmotionCodes.end()) {
      if (rejects) {
        rejects->push_back(name + ": unknown emotion code '" +
                           std::string(1, code) + "'");
      }
      continue;
    }
    manifest.rows.push_back({name, it->second, Split::kUnassigned});
  }
  if (manifest.rows.empty()) {
    std::cerr << "warning: EmoDB manifest of " << dir << " is empty\n";
  }
  return manifest;
}

// ---------------------------------------------------------------------------
// synthetic corpus

std::pair<double, double> synth_class_band(int class_index, int sample_rate) {
  // Disjoint octave-spaced bands: [200*3^j, 2*200*3^j).
  const double low = 200.0 * std::pow(3.0, class_index);
  const double high = 2.0 * low;
  if (high >= sample_rate / 2.0) {
    throw ConfigError("class " + std::to_string(class_index) +
                      " band reaches " + std::to_string(high) +
                      " Hz, above the Nyquist rate of " +
                      std::to_string(sample_rate / 2.0) + " Hz");
  }
  return {low, high};
}

Manifest synth_dataset(const SynthOptions& options,
                       const std::filesystem::path& out_dir) {
  if (options.classes < 2) throw ConfigError("synth needs at least 2 classes");
  if (options.clips_per_class < 1) {
    throw ConfigError("synth needs at least 1 clip per class");
  }
  if (options.seconds <= 0) throw ConfigError("synth clip length must be positive");
  for (int j = 0; j < options.classes; ++j) {
    synth_class_band(j, options.sample_rate);  // validates against Nyquist
  }
  std::filesystem::create_directories(out_dir);

  const auto n_samples = static_cast<std::size_t>(
      std::llround(options.seconds * options.sample_rate));
  constexpr int kComponents = 3;
  constexpr double kSnrDb = 10.0;

  Manifest manifest;
  manifest.base_dir = out_dir;
  Rng rng = Rng(options.seed).derive(0x53594e54u);  // synth substream

  std::vector<double> signal(n_samples);
  for (int j = 0; j < options.classes; ++j) {
    const auto [low, high] = synth_class_band(j, options.sample_rate);
    for (int c = 0; c < options.clips_per_class; ++c) {
      std::fill(signal.begin(), signal.end(), 0.0);
      for (int s = 0; s < kComponents; ++s) {
        const double freq = rng.uniform(low, high);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double step = 2.0 * std::numbers::pi * freq / options.sample_rate;
        for (std::size_t t = 0; t < n_samples; ++t) {
          signal[t] += std::sin(step * static_cast<double>(t) + phase);
        }
      }
      double power = 0.0;
      for (double v : signal) power += v * v;
      const double rms = std::sqrt(power / static_cast<double>(n_samples));
      const double noise_sigma = rms / std::pow(10.0, kSnrDb / 20.0);
      for (double& v : signal) v += noise_sigma * rng.normal();

      double peak = 0.0;
      for (double v : signal) peak = std::max(peak, std::fabs(v));
      const double gain = peak > 0.0 ? 0.9 / peak : 1.0;
      for (double& v : signal) v *= gain;

      std::ostringstream name;
      name << "class" << j << '_';
      name.fill('0');
      name.width(3);
      name << c;
      name << ".wav";
      write_wav_pcm16(out_dir / name.str(), signal, options.sample_rate);
      manifest.rows.push_back(
          {name.str(), "class" + std::to_string(j), Split::kUnassigned});
    }
  }
  return manifest;
}

// ---------------------------------------------------------------------------
// window cache

namespace {

constexpr char kCacheMagic[4] = {'W', 'D', 'N', 'W'};
constexpr std::uint32_t kCacheVersion = 1;

void put_u32le_stream(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {
      static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
      static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes, 4);
}

std::uint32_t get_u32le_stream(std::istream& in, const char* field) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) {
    throw DataError(std::string("window cache truncated while reading ") + field);
  }
  return static_cast<std::uint32_t>(bytes[0]) |
         (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) |
         (static_cast<std::uint32_t>(bytes[3]) << 24);
}

}  // namespace

void write_window_cache(const std::filesystem::path& path,
                        std::span<const WindowedExample> examples,
                        int window_len) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write window cache: " + path.string());
  out.write(kCacheMagic, 4);
  put_u32le_stream(out, kCacheVersion);
  put_u32le_stream(out, static_cast<std::uint32_t>(window_len));
  put_u32le_stream(out, static_cast<std::uint32_t>(examples.size()));
  for (const auto& ex : examples) {
    if (static_cast<int>(ex.window.size()) != window_len) {
      throw ContractError("window cache entry length mismatch");
    }
    put_u32le_stream(out, static_cast<std::uint32_t>(ex.label));
    const char split_byte = static_cast<char>(ex.split);
    out.write(&split_byte, 1);
    for (float v : ex.window) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_u32le_stream(out, bits);
    }
  }
  if (!out) throw DataError("short write to window cache: " + path.string());
}

std::vector<WindowedExample> read_window_cache(
    const std::filesystem::path& path, int* window_len_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open window cache: " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCacheMagic, 4) != 0) {
    throw DataError("window cache has bad magic: " + path.string());
  }
  const std::uint32_t version = get_u32le_stream(in, "version");
  if (version != kCacheVersion) {
    throw DataError("unsupported window cache version " +
                    std::to_string(version));
  }
  const std::uint32_t window_len = get_u32le_stream(in, "window length");
  const std::uint32_t count = get_u32le_stream(in, "record count");
  if (window_len_out) *window_len_out = static_cast<int>(window_len);

  std::vector<WindowedExample> examples;
  examples.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    WindowedExample ex;
    ex.label = static_cast<int>(get_u32le_stream(in, "record label"));
    char split_byte;
    if (!in.read(&split_byte, 1)) {
      throw DataError("window cache truncated while reading record split");
    }
    ex.split = static_cast<Split>(static_cast<std::uint8_t>(split_byte));
    ex.window.resize(window_len);
    for (std::uint32_t t = 0; t < window_len; ++t) {
      const std::uint32_t bits = get_u32le_stream(in, "record samples");
      float v;
      std::memcpy(&v, &bits, 4);
      ex.window[t] = v;
    }
    examples.push_back(std::move(ex));
  }
  return examples;
}

}  // namespace wadenet
