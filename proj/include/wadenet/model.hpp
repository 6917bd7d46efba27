#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "wadenet/tensor.hpp"
#include "wadenet/wavelet.hpp"

namespace wadenet {

// Fully determines either architecture.
struct ModelConfig {
  enum class Kind { kNaive, kWadenet };

  Kind kind = Kind::kWadenet;
  int num_blocks = 4;        // convolutional blocks (and wavelet levels)
  int base_channels = 64;    // output channels of block 1
  int kernel_size = 3;       // block convolution kernel
  int gate_channels = 16;    // wavelet gate output channels
  std::vector<int> inception_kernels = {1, 3, 5, 7};
  std::vector<int> fc_widths = {512, 128};
  int num_classes = 0;
  int window_len = 5120;     // input samples per window
  double dropout_p = 0.5;

  // Output channels of block n (1-based): base_channels * 2^(n-1).
  int block_channels(int n) const { return base_channels << (n - 1); }
  // Input channels of block n under the wiring in use.
  int block_input_channels(int n) const;
  // Feature count entering the fully connected stack.
  long long flatten_features() const;

  void validate() const;  // throws ConfigError

  static ModelConfig from_json(const std::string& text);
  static ModelConfig from_json_file(const std::filesystem::path& path);
  std::string to_json() const;
};

// Named parameters in deterministic (lexicographic) iteration order.
using ParamSet = std::map<std::string, Tensor>;

// Fresh parameters for `config`, deterministic given the generator state.
// Convolution and linear weights draw from uniform(-a, a) with
// a = sqrt(6 / fan_in); biases start at 0, batch-norm gamma at 1 and beta
// at 0. The classifier head starts at exactly zero so a fresh model emits
// uniform class probabilities.
ParamSet init_params(const ModelConfig& config, Rng& rng);

// Per-layer parameter table computed from the config alone.
struct LayerCount {
  std::string name;
  std::vector<int> shape;
  long long count = 0;
};
struct ParamCountTable {
  std::vector<LayerCount> layers;
  long long total = 0;
};
ParamCountTable param_count(const ModelConfig& config);

// Shapes observed while running the convolutional trunk.
struct ShapeTrace {
  std::vector<std::array<int, 2>> block_inputs;   // (channels, length) per block
  std::vector<std::array<int, 2>> block_outputs;  // after the conv block
  long long flatten_features = 0;
};

class Model {
 public:
  explicit Model(ModelConfig config);

  void init(Rng& rng) { params = init_params(config, rng); }

  // Logits (B, num_classes) for x (B, 1, window_len). Softmax is applied
  // only inside the loss or predict_probs, never here.
  Tensor forward(const Tensor& x, Mode mode, Rng& rng,
                 ShapeTrace* trace = nullptr);

  // Building blocks, exposed for tests and shape checks.
  Tensor conv_block(const Tensor& x, int n, Mode mode);
  Tensor inception_residual(const Tensor& x, int n, Mode mode);
  Tensor dwt_gate(const Tensor& coeffs, int n, Mode mode);

  ModelConfig config;
  ParamSet params;
  std::map<std::string, BnStats> bn;

 private:
  Tensor fc_stack(const Tensor& features, Mode mode, Rng& rng);
  const Tensor& p(const std::string& name) const;
};

}  // namespace wadenet
