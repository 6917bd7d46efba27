#include "wadenet/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "wadenet/error.hpp"

namespace wadenet {

namespace {

std::uint16_t read_u16le(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16le(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

[[noreturn]] void decode_error(const std::filesystem::path& path,
                               const std::string& field) {
  throw DataError("WAV decode error in " + path.string() + ": " + field);
}

}  // namespace

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open WAV file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());

  if (bytes.size() < 12) decode_error(path, "truncated RIFF header");
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0) {
    decode_error(path, "missing RIFF magic");
  }
  if (std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    decode_error(path, "missing WAVE form type");
  }

  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0, format = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data_ptr = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t chunk_size = read_u32le(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + chunk_size > bytes.size()) {
      decode_error(path, "chunk extends past end of file");
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (chunk_size < 16) decode_error(path, "fmt chunk too small");
      format = read_u16le(bytes.data() + body);
      channels = read_u16le(bytes.data() + body + 2);
      rate = read_u32le(bytes.data() + body + 4);
      bits = read_u16le(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data_ptr = bytes.data() + body;
      data_size = chunk_size;
    }
    pos = body + chunk_size + (chunk_size % 2);  // chunks are 2-byte aligned
  }

  if (!have_fmt) decode_error(path, "missing fmt chunk");
  if (format != 1) {
    decode_error(path, "audio format " + std::to_string(format) +
                           " (only PCM is supported)");
  }
  if (bits != 16) {
    decode_error(path, "bits per sample " + std::to_string(bits) +
                           " (only 16-bit is supported)");
  }
  if (channels != 1 && channels != 2) {
    decode_error(path, "channel count " + std::to_string(channels));
  }
  if (rate == 0) decode_error(path, "sample rate 0");
  if (data_ptr == nullptr) decode_error(path, "missing data chunk");
  const std::size_t frame_bytes = 2u * channels;
  if (data_size % frame_bytes != 0) {
    decode_error(path, "data chunk size not frame-aligned");
  }
  const std::size_t frames = data_size / frame_bytes;
  if (frames == 0) decode_error(path, "empty data chunk");

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.source_path = path.string();
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    const std::uint8_t* frame = data_ptr + i * frame_bytes;
    if (channels == 1) {
      const auto s = static_cast<std::int16_t>(read_u16le(frame));
      clip.samples[i] = s / 32768.0;
    } else {
      const auto l = static_cast<std::int16_t>(read_u16le(frame));
      const auto r = static_cast<std::int16_t>(read_u16le(frame + 2));
      clip.samples[i] = (static_cast<double>(l) + r) / 2.0 / 32768.0;
    }
  }
  return clip;
}

void write_wav_pcm16(const std::filesystem::path& path,
                     std::span<const double> samples, int sample_rate) {
  const std::uint32_t data_size = static_cast<std::uint32_t>(samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_size);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32le(out, 36 + data_size);
  out.insert(out.end(), {'W', 'A', 'V', 'E'});
  out.insert(out.end(), {'f', 'm', 't', ' '});
  put_u32le(out, 16);
  put_u16le(out, 1);  // PCM
  put_u16le(out, 1);  // mono
  put_u32le(out, static_cast<std::uint32_t>(sample_rate));
  put_u32le(out, static_cast<std::uint32_t>(sample_rate) * 2);
  put_u16le(out, 2);   // block align
  put_u16le(out, 16);  // bits per sample
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32le(out, data_size);
  for (double v : samples) {
    const double clamped = std::clamp(v, -1.0, 1.0);
    const long scaled = std::lround(clamped * 32768.0);
    const auto s = static_cast<std::int16_t>(
        std::clamp(scaled, -32768L, 32767L));
    put_u16le(out, static_cast<std::uint16_t>(s));
  }

  std::ofstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot write WAV file: " + path.string());
  file.write(reinterpret_cast<const char*>(out.data()),
             static_cast<std::streamsize>(out.size()));
  if (!file) throw DataError("short write to WAV file: " + path.string());
}

AudioClip resample_linear(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) throw ConfigError("target sample rate must be positive");
  if (clip.samples.empty()) throw DataError("resample of an empty clip");
  if (clip.sample_rate == target_rate) return clip;

  const std::size_t n_in = clip.samples.size();
  const auto n_out = static_cast<std::size_t>(std::llround(
      static_cast<double>(n_in) * target_rate / clip.sample_rate));

  AudioClip out;
  out.sample_rate = target_rate;
  out.source_path = clip.source_path;
  out.label = clip.label;
  out.samples.resize(std::max<std::size_t>(n_out, 1));

  if (n_in == 1 || out.samples.size() == 1) {
    std::fill(out.samples.begin(), out.samples.end(), clip.samples[0]);
    return out;
  }
  const double scale = static_cast<double>(n_in - 1) /
                       static_cast<double>(out.samples.size() - 1);
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    const double pos = static_cast<double>(i) * scale;
    const auto base = static_cast<std::size_t>(pos);
    const std::size_t next = std::min(base + 1, n_in - 1);
    const double frac = pos - static_cast<double>(base);
    out.samples[i] =
        clip.samples[base] * (1.0 - frac) + clip.samples[next] * frac;
  }
  return out;
}

}  // namespace wadenet
