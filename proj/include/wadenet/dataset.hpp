#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wadenet/audio.hpp"

namespace wadenet {

enum class Split : std::uint8_t {
  kTrain = 0,
  kVal = 1,
  kTest = 2,
  kUnassigned = 255,
};

std::string split_name(Split s);
Split split_from_name(const std::string& name);

// One normalized waveform window. Samples are stored as float32 so that
// cached and freshly windowed data are bit-identical; training upcasts to
// float64.
struct WindowedExample {
  std::vector<float> window;
  int label = -1;
  Split split = Split::kUnassigned;
  int clip_id = -1;
};

struct ManifestRow {
  std::string path;  // relative to base_dir unless absolute
  std::string label;
  Split split = Split::kUnassigned;
};

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<ManifestRow> rows;

  // Sorted unique label strings; index in this list is the class id.
  std::vector<std::string> vocab() const;
  bool fully_split() const;
  std::filesystem::path resolve(const ManifestRow& row) const;
};

// CSV with header "path,label,split", UTF-8, LF line endings.
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

// Per-class clip-level assignment with largest-remainder rounding;
// deterministic given the seed. Classes need at least 3 clips.
void split_stratified(Manifest& manifest, std::array<double, 3> ratios,
                      std::uint64_t seed);

// Subtract the mean and divide by (stddev + 1e-8), per window.
std::vector<double> normalize_window(std::vector<double> window);

// Start offsets of length-`window_len` windows with the given hop.
// count = floor((samples - window_len) / hop) + 1 when samples >= window_len,
// otherwise zero windows.
std::vector<std::size_t> window_starts(std::size_t samples,
                                       std::size_t window_len,
                                       std::size_t hop);

// Windows one clip; each window is normalized, then quantized to float32.
// Clips shorter than one window yield no output.
std::vector<WindowedExample> segment_windows(const AudioClip& clip,
                                             int window_len, int hop,
                                             int clip_id, Split split);

// Window length and hop for a window of `window_ms` milliseconds with
// fractional `overlap` at `sample_rate`.
struct WindowGeometry {
  int window_len = 0;
  int hop = 0;
};
WindowGeometry window_geometry(int sample_rate, double window_ms,
                               double overlap);

struct WindowingOptions {
  int sample_rate = 16000;
  int window_len = 5120;
  int hop = 1280;
  int max_threads = 0;  // 0: WADENET_THREADS or hardware concurrency
};

struct WindowingReport {
  std::vector<WindowedExample> examples;
  int skipped_short_clips = 0;
};

// Decodes, resamples and windows every manifest row. Clips are processed in
// parallel but merged in manifest order, so the output is independent of the
// worker count.
WindowingReport window_manifest(const Manifest& manifest,
                                const WindowingOptions& options);

// Manifest over a directory of EmoDB-convention files: the 6th character of
// the file name encodes the emotion (W,L,E,A,F,T,N). Unknown codes are
// reported in `rejects` rather than failing.
Manifest emodb_manifest(const std::filesystem::path& dir,
                        std::vector<std::string>* rejects = nullptr);

// Synthetic corpus: class j is a sum of sinusoids inside a class-specific
// frequency band plus Gaussian noise at roughly 10 dB SNR, written as
// PCM-16 WAV files plus a manifest. Byte-identical for a given seed.
struct SynthOptions {
  int classes = 3;
  int clips_per_class = 60;
  double seconds = 2.0;
  int sample_rate = 16000;
  std::uint64_t seed = 1;
};
std::pair<double, double> synth_class_band(int class_index, int sample_rate);
Manifest synth_dataset(const SynthOptions& options,
                       const std::filesystem::path& out_dir);

// Binary window cache: magic "WDNW", u32 version=1, u32 window_len,
// u32 count, then count records of (u32 label, u8 split, window_len
// float32 LE samples).
void write_window_cache(const std::filesystem::path& path,
                        std::span<const WindowedExample> examples,
                        int window_len);
std::vector<WindowedExample> read_window_cache(
    const std::filesystem::path& path, int* window_len_out = nullptr);

// Worker count for datapipe parallelism: `requested` when positive, else the
// WADENET_THREADS environment variable, else the hardware concurrency.
int datapipe_threads(int requested);

}  // namespace wadenet
