#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace wadenet {

struct AudioClip {
  std::vector<double> samples;  // mono, in [-1, 1]
  int sample_rate = 0;
  std::string source_path;
  int label = -1;
};

// Reads a RIFF/WAVE file containing 16-bit PCM, mono or stereo. Samples are
// scaled by 1/32768; stereo is downmixed by channel mean. Anything else is a
// decode error naming the offending field.
AudioClip read_wav(const std::filesystem::path& path);

// Writes mono 16-bit PCM. Values are clamped to [-1, 1] and scaled by 32768,
// which makes write(read(file)) reproduce the original payload bit-exactly.
void write_wav_pcm16(const std::filesystem::path& path,
                     std::span<const double> samples, int sample_rate);

// Linear interpolation onto round(len * target / source) samples with the
// endpoints aligned. Identity when the rates already match.
AudioClip resample_linear(const AudioClip& clip, int target_rate);

}  // namespace wadenet
