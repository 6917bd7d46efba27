#include "wadenet/audio.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "wadenet/error.hpp"
#include "wadenet/rng.hpp"

using namespace wadenet;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "wadenet_audio_tests";
  fs::create_directories(dir);
  return dir / name;
}

// Hand-rolled WAV writer so read_wav is checked against independent bytes.
void write_raw_wav(const fs::path& path, int channels, int rate,
                   const std::vector<std::int16_t>& samples) {
  std::vector<std::uint8_t> out;
  auto u16 = [&](std::uint16_t v) {
    out.push_back(v & 0xff);
    out.push_back(v >> 8);
  };
  auto u32 = [&](std::uint32_t v) {
    out.push_back(v & 0xff);
    out.push_back((v >> 8) & 0xff);
    out.push_back((v >> 16) & 0xff);
    out.push_back((v >> 24) & 0xff);
  };
  const std::uint32_t data_size = static_cast<std::uint32_t>(samples.size() * 2);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  u32(36 + data_size);
  out.insert(out.end(), {'W', 'A', 'V', 'E'});
  out.insert(out.end(), {'f', 'm', 't', ' '});
  u32(16);
  u16(1);
  u16(static_cast<std::uint16_t>(channels));
  u32(static_cast<std::uint32_t>(rate));
  u32(static_cast<std::uint32_t>(rate * channels * 2));
  u16(static_cast<std::uint16_t>(channels * 2));
  u16(16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  u32(data_size);
  for (std::int16_t s : samples) u16(static_cast<std::uint16_t>(s));
  std::ofstream f(path, std::ios::binary);
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("read_wav scales 16-bit samples by 1/32768") {
  const auto path = temp_file("mono.wav");
  write_raw_wav(path, 1, 16000, {0, 16384, -16384});
  const AudioClip clip = read_wav(path);
  CHECK(clip.sample_rate == 16000);
  REQUIRE(clip.samples.size() == 3);
  CHECK(clip.samples[0] == 0.0);
  CHECK(clip.samples[1] == doctest::Approx(0.5));
  CHECK(clip.samples[2] == doctest::Approx(-0.5));
}

TEST_CASE("read_wav downmixes stereo by channel mean") {
  const auto path = temp_file("stereo.wav");
  write_raw_wav(path, 2, 8000, {1000, 3000, -2000, -2000});
  const AudioClip clip = read_wav(path);
  REQUIRE(clip.samples.size() == 2);
  CHECK(clip.samples[0] == doctest::Approx(2000.0 / 32768.0));
  CHECK(clip.samples[1] == doctest::Approx(-2000.0 / 32768.0));
}

TEST_CASE("read_wav reports a decode error on truncated headers") {
  const auto path = temp_file("truncated.wav");
  std::ofstream f(path, std::ios::binary);
  f.write("RIFF\x10\x00", 6);
  f.close();
  CHECK_THROWS_AS(read_wav(path), DataError);
}

TEST_CASE("read_wav rejects unsupported formats by field name") {
  const auto path = temp_file("float.wav");
  write_raw_wav(path, 1, 8000, {0, 0});
  auto bytes = read_bytes(path);
  bytes[20] = 3;  // format tag: IEEE float
  std::ofstream f(path, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  f.close();
  CHECK_THROWS_WITH_AS(read_wav(path),
                       doctest::Contains("audio format"), DataError);
}

// The round-trip property: bytes -> read -> write -> identical bytes.
TEST_CASE("read then write reproduces the PCM payload bit-exactly") {
  Rng rng(17);
  std::vector<std::int16_t> samples(997);
  for (auto& s : samples) {
    s = static_cast<std::int16_t>(static_cast<std::uint16_t>(rng.next_u64()));
  }
  const auto original = temp_file("roundtrip_in.wav");
  write_raw_wav(original, 1, 16000, samples);
  const AudioClip clip = read_wav(original);
  const auto rewritten = temp_file("roundtrip_out.wav");
  write_wav_pcm16(rewritten, clip.samples, clip.sample_rate);
  CHECK(read_bytes(original) == read_bytes(rewritten));
}

TEST_CASE("resample at the same rate is bit-identical") {
  AudioClip clip;
  clip.sample_rate = 16000;
  Rng rng(23);
  clip.samples.resize(100);
  for (double& v : clip.samples) v = rng.uniform(-1.0, 1.0);
  const AudioClip out = resample_linear(clip, 16000);
  CHECK(out.samples == clip.samples);
}

TEST_CASE("resample doubles [0,1] into thirds") {
  AudioClip clip;
  clip.sample_rate = 2;
  clip.samples = {0.0, 1.0};
  const AudioClip out = resample_linear(clip, 4);
  REQUIRE(out.samples.size() == 4);
  CHECK(out.samples[0] == doctest::Approx(0.0));
  CHECK(out.samples[1] == doctest::Approx(1.0 / 3.0));
  CHECK(out.samples[2] == doctest::Approx(2.0 / 3.0));
  CHECK(out.samples[3] == doctest::Approx(1.0));
}

TEST_CASE("resampling a constant signal keeps it constant") {
  AudioClip clip;
  clip.sample_rate = 44100;
  clip.samples.assign(441, 0.25);
  for (int target : {8000, 16000, 48000}) {
    const AudioClip out = resample_linear(clip, target);
    for (double v : out.samples) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
  }
}
