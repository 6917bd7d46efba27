#include "wadenet/model.hpp"

#include <cmath>
#include <set>

#include "doctest.h"
#include "wadenet/gradcheck.hpp"

using namespace wadenet;

namespace {

ModelConfig toy_wadenet() {
  ModelConfig cfg;
  cfg.kind = ModelConfig::Kind::kWadenet;
  cfg.num_blocks = 2;
  cfg.base_channels = 4;
  cfg.gate_channels = 2;
  cfg.kernel_size = 3;
  cfg.fc_widths = {8};
  cfg.num_classes = 3;
  cfg.window_len = 64;
  cfg.dropout_p = 0.0;
  return cfg;
}

// Independently coded walk over the expected parameter tensors, used as the
// double-entry oracle for param_count.
long long shape_walk_total(const ModelConfig& cfg) {
  long long total = 0;
  auto conv = [&](long long co, long long ci, long long k) {
    total += co * ci * k + co;  // weight + bias
    total += 2 * co;            // batch norm gamma + beta
  };
  long long cin = 1;
  for (int n = 1; n <= cfg.num_blocks; ++n) {
    const long long ch = static_cast<long long>(cfg.base_channels) << (n - 1);
    conv(ch, cin, cfg.kernel_size);
    conv(ch, ch, cfg.kernel_size);
    if (cfg.kind == ModelConfig::Kind::kWadenet) {
      const long long branch = ch / static_cast<long long>(cfg.inception_kernels.size());
      for (int ks : cfg.inception_kernels) conv(branch, ch, ks);
      conv(cfg.gate_channels, 2, 3);
      conv(cfg.gate_channels, cfg.gate_channels, 3);
      cin = ch + cfg.gate_channels;
    } else {
      cin = ch;
    }
  }
  long long features = cin * (cfg.window_len >> cfg.num_blocks);
  for (int width : cfg.fc_widths) {
    total += static_cast<long long>(width) * features + width;
    features = width;
  }
  total += static_cast<long long>(cfg.num_classes) * features + cfg.num_classes;
  return total;
}

}  // namespace

TEST_CASE("conv block shapes follow the channel and length schedule") {
  ModelConfig cfg;
  cfg.kind = ModelConfig::Kind::kNaive;
  cfg.num_blocks = 4;
  cfg.base_channels = 64;
  cfg.num_classes = 7;
  cfg.window_len = 5120;
  cfg.fc_widths = {8};
  Model model(cfg);
  Rng rng(1);
  model.init(rng);

  Rng data_rng(2);
  Tensor x = random_tensor({1, 1, 5120}, data_rng, -0.5, 0.5);
  Tensor h = model.conv_block(x, 1, Mode::kEval);
  CHECK(h.shape() == std::vector<int>{1, 64, 2560});
  h = model.conv_block(h, 2, Mode::kEval);
  CHECK(h.shape() == std::vector<int>{1, 128, 1280});
  h = model.conv_block(h, 3, Mode::kEval);
  CHECK(h.shape() == std::vector<int>{1, 256, 640});
  h = model.conv_block(h, 4, Mode::kEval);
  CHECK(h.shape() == std::vector<int>{1, 512, 320});
}

TEST_CASE("a 1x1 identity conv block subsamples by two") {
  ModelConfig cfg;
  cfg.kind = ModelConfig::Kind::kNaive;
  cfg.num_blocks = 1;
  cfg.base_channels = 1;
  cfg.kernel_size = 1;
  cfg.num_classes = 2;
  cfg.window_len = 8;
  cfg.fc_widths = {2};
  Model model(cfg);
  model.params.at("block1.conv1.w").data() = {1.0};
  model.params.at("block1.conv2.w").data() = {1.0};
  // Running variance of 1 - eps makes eval batch norm an exact identity.
  model.bn.at("block1.bn1").running_var = {1.0 - 1e-5};
  model.bn.at("block1.bn2").running_var = {1.0 - 1e-5};

  Tensor x({1, 1, 8}, {1, 2, 3, 4, 5, 6, 7, 8});
  Tensor y = model.conv_block(x, 1, Mode::kEval);
  REQUIRE(y.shape() == std::vector<int>{1, 1, 4});
  for (int i = 0; i < 4; ++i) {
    CHECK(y.data()[static_cast<std::size_t>(i)] ==
          doctest::Approx(x.data()[static_cast<std::size_t>(2 * i)]));
  }
}

TEST_CASE("inception residual preserves shape") {
  ModelConfig cfg = toy_wadenet();
  cfg.base_channels = 8;
  cfg.window_len = 128;
  Model model(cfg);
  Rng rng(3);
  model.init(rng);
  Rng data_rng(4);
  Tensor x = random_tensor({1, 8, 32}, data_rng);
  Tensor y = model.inception_residual(x, 1, Mode::kEval);
  CHECK(y.shape() == x.shape());
}

TEST_CASE("inception residual with zero branches is the identity") {
  ModelConfig cfg = toy_wadenet();
  Model model(cfg);
  Rng rng(5);
  model.init(rng);
  for (int ks : cfg.inception_kernels) {
    const std::string branch = "incep1.k" + std::to_string(ks);
    for (double& v : model.params.at(branch + ".conv.w").data()) v = 0.0;
    for (double& v : model.params.at(branch + ".conv.b").data()) v = 0.0;
  }
  Rng data_rng(6);
  Tensor x = random_tensor({2, 4, 16}, data_rng);
  Tensor y = model.inception_residual(x, 1, Mode::kEval);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    CHECK(y.data()[i] == x.data()[i]);
  }
}

TEST_CASE("inception residual gradient matches finite differences") {
  ModelConfig cfg = toy_wadenet();
  Model model(cfg);
  Rng rng(7);
  model.init(rng);

  Rng data_rng(8);
  Tensor x = random_tensor({1, 4, 8}, data_rng);
  std::vector<Tensor> leaves = {x};
  for (int ks : cfg.inception_kernels) {
    const std::string branch = "incep1.k" + std::to_string(ks);
    leaves.push_back(model.params.at(branch + ".conv.w"));
    leaves.push_back(model.params.at(branch + ".bn.gamma"));
  }
  const auto saved_bn = model.bn;
  Rng wrng(9);
  std::vector<double> weights(x.numel());
  for (double& w : weights) w = wrng.uniform(-1.0, 1.0);
  auto loss = [&]() {
    model.bn = saved_bn;
    return weighted_sum(model.inception_residual(x, 1, Mode::kTrain), weights);
  };
  CHECK(finite_diff_max_rel_err(leaves, loss) < kGradCheckTol);
}

TEST_CASE("dwt gate emits gate_channels over the same length") {
  ModelConfig cfg;
  cfg.kind = ModelConfig::Kind::kWadenet;
  cfg.num_blocks = 3;
  cfg.base_channels = 4;
  cfg.gate_channels = 16;
  cfg.num_classes = 3;
  cfg.window_len = 5120;
  cfg.fc_widths = {8};
  Model model(cfg);
  Rng rng(10);
  model.init(rng);
  Rng data_rng(11);
  Tensor coeffs = random_tensor({1, 2, 640}, data_rng);
  Tensor y = model.dwt_gate(coeffs, 3, Mode::kEval);
  CHECK(y.shape() == std::vector<int>{1, 16, 640});
}

TEST_CASE("dwt gate on zero input is relu(beta) per channel") {
  ModelConfig cfg = toy_wadenet();
  Model model(cfg);
  Rng rng(12);
  model.init(rng);
  auto& beta = model.params.at("gate1.bn2.beta").data();
  beta = {0.7, -0.4};
  Tensor zero({1, 2, 8});
  Tensor y = model.dwt_gate(zero, 1, Mode::kEval);
  REQUIRE(y.shape() == std::vector<int>{1, 2, 8});
  for (int t = 0; t < 8; ++t) {
    CHECK(y.data()[static_cast<std::size_t>(t)] == doctest::Approx(0.7));
    CHECK(y.data()[static_cast<std::size_t>(8 + t)] == 0.0);
  }
}

TEST_CASE("wadenet block-input channel trace at the reference shape") {
  ModelConfig cfg;
  cfg.kind = ModelConfig::Kind::kWadenet;
  cfg.num_blocks = 4;
  cfg.base_channels = 64;
  cfg.gate_channels = 16;
  cfg.num_classes = 7;
  cfg.window_len = 5120;
  cfg.fc_widths = {8};  // narrow head keeps this test small
  Model model(cfg);
  Rng rng(13);
  model.init(rng);

  Rng data_rng(14);
  Tensor x = random_tensor({1, 1, 5120}, data_rng, -0.5, 0.5);
  ShapeTrace trace;
  Rng drop(1);
  Tensor logits = model.forward(x, Mode::kEval, drop, &trace);
  CHECK(logits.shape() == std::vector<int>{1, 7});
  REQUIRE(trace.block_inputs.size() == 4);
  CHECK(trace.block_inputs[0] == std::array<int, 2>{1, 5120});
  CHECK(trace.block_inputs[1] == std::array<int, 2>{80, 2560});
  CHECK(trace.block_inputs[2] == std::array<int, 2>{144, 1280});
  CHECK(trace.block_inputs[3] == std::array<int, 2>{272, 640});
  CHECK(trace.flatten_features == 168960);
}

TEST_CASE("wadenet logits are finite under random init") {
  ModelConfig cfg = toy_wadenet();
  Model model(cfg);
  Rng rng(15);
  model.init(rng);
  Rng data_rng(16);
  Tensor x = random_tensor({2, 1, 64}, data_rng);
  Rng drop(1);
  Tensor logits = model.forward(x, Mode::kEval, drop);
  REQUIRE(logits.shape() == std::vector<int>{2, 3});
  for (double v : logits.data()) CHECK(std::isfinite(v));
}

TEST_CASE("wadenet end-to-end gradient check at toy scale") {
  const OpCheck check = run_gradcheck_op("wadenet_end_to_end");
  CHECK(check.pass);
}

TEST_CASE("naive block outputs follow the closed formula") {
  ModelConfig cfg;
  cfg.kind = ModelConfig::Kind::kNaive;
  cfg.num_blocks = 4;
  cfg.base_channels = 64;
  cfg.num_classes = 7;
  cfg.window_len = 5120;
  cfg.fc_widths = {8};
  Model model(cfg);
  Rng rng(17);
  model.init(rng);
  Rng data_rng(18);
  Tensor x = random_tensor({1, 1, 5120}, data_rng, -0.5, 0.5);
  ShapeTrace trace;
  Rng drop(1);
  model.forward(x, Mode::kEval, drop, &trace);
  REQUIRE(trace.block_outputs.size() == 4);
  for (int n = 1; n <= 4; ++n) {
    CHECK(trace.block_outputs[static_cast<std::size_t>(n - 1)] ==
          std::array<int, 2>{64 << (n - 1), 5120 >> n});
  }
}

TEST_CASE("naive block outputs follow the formula on random configs") {
  Rng rng(19);
  for (int i = 0; i < 20; ++i) {
    ModelConfig cfg;
    cfg.kind = ModelConfig::Kind::kNaive;
    cfg.num_blocks = 1 + static_cast<int>(rng.below(3));
    cfg.base_channels = 1 + static_cast<int>(rng.below(6));
    cfg.kernel_size = 2 * static_cast<int>(rng.below(3)) + 1;
    cfg.num_classes = 2 + static_cast<int>(rng.below(3));
    cfg.window_len = (1 << cfg.num_blocks) * (1 + static_cast<int>(rng.below(6)));
    cfg.fc_widths = {4};
    Model model(cfg);
    Rng init(20 + static_cast<std::uint64_t>(i));
    model.init(init);
    Tensor x = random_tensor({2, 1, cfg.window_len}, rng, -0.5, 0.5);
    ShapeTrace trace;
    Rng drop(1);
    model.forward(x, Mode::kEval, drop, &trace);
    for (int n = 1; n <= cfg.num_blocks; ++n) {
      CHECK(trace.block_outputs[static_cast<std::size_t>(n - 1)] ==
            std::array<int, 2>{cfg.base_channels << (n - 1),
                               cfg.window_len >> n});
    }
  }
}

TEST_CASE("the smallest legal naive model builds and runs") {
  ModelConfig cfg;
  cfg.kind = ModelConfig::Kind::kNaive;
  cfg.num_blocks = 1;
  cfg.base_channels = 1;
  cfg.kernel_size = 1;
  cfg.num_classes = 2;
  cfg.window_len = 2;
  cfg.fc_widths = {};
  Model model(cfg);
  Rng rng(21);
  model.init(rng);
  Tensor x({2, 1, 2}, {0.1, -0.2, 0.4, 0.3});
  Rng drop(1);
  Tensor logits = model.forward(x, Mode::kTrain, drop);
  CHECK(logits.shape() == std::vector<int>{2, 2});
}

TEST_CASE("init_params is deterministic in the seed") {
  ModelConfig cfg = toy_wadenet();
  Rng a(42), b(42);
  const ParamSet pa = init_params(cfg, a);
  const ParamSet pb = init_params(cfg, b);
  REQUIRE(pa.size() == pb.size());
  auto ita = pa.begin();
  auto itb = pb.begin();
  for (; ita != pa.end(); ++ita, ++itb) {
    CHECK(ita->first == itb->first);
    CHECK(ita->second.data() == itb->second.data());
  }
}

TEST_CASE("init bound for a fan-in of 3 is sqrt(2)") {
  ModelConfig cfg;
  cfg.kind = ModelConfig::Kind::kNaive;
  cfg.num_blocks = 1;
  cfg.base_channels = 64;
  cfg.kernel_size = 3;
  cfg.num_classes = 2;
  cfg.window_len = 4;
  cfg.fc_widths = {};
  Rng rng(23);
  const ParamSet params = init_params(cfg, rng);
  const auto& w = params.at("block1.conv1.w").data();  // (64, 1, 3)
  const double bound = std::sqrt(2.0);
  double peak = 0.0;
  for (double v : w) {
    CHECK(std::fabs(v) <= bound);
    peak = std::max(peak, std::fabs(v));
  }
  CHECK(peak > 0.9 * bound);  // 192 draws reach near the bound
}

TEST_CASE("init draws have the uniform-distribution standard deviation") {
  // A million draws at the init bound for a fan-in of 1000.
  Rng rng(29);
  const double bound = std::sqrt(6.0 / 1000.0);
  double sum = 0.0, sq = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    const double v = rng.uniform(-bound, bound);
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  const double stddev = std::sqrt(sq / n - mean * mean);
  CHECK(std::fabs(stddev - bound / std::sqrt(3.0)) < 0.02 * bound / std::sqrt(3.0));
}

TEST_CASE("classifier head starts at zero") {
  ModelConfig cfg = toy_wadenet();
  Rng rng(31);
  const ParamSet params = init_params(cfg, rng);
  for (double v : params.at("out.w").data()) CHECK(v == 0.0);
  for (double v : params.at("out.b").data()) CHECK(v == 0.0);
}

TEST_CASE("param_count counts single layers correctly") {
  ModelConfig cfg;
  cfg.kind = ModelConfig::Kind::kNaive;
  cfg.num_blocks = 1;
  cfg.base_channels = 64;
  cfg.kernel_size = 3;
  cfg.num_classes = 10;
  cfg.window_len = 4;
  cfg.fc_widths = {};
  const ParamCountTable table = param_count(cfg);
  // First conv: 64 output channels, 1 input channel, kernel 3.
  CHECK(table.layers[0].name == "block1.conv1");
  CHECK(table.layers[0].count == 64 * 1 * 3 + 64);
  // linear 100 -> 10 is 1010 by the same formula.
  CHECK(100LL * 10 + 10 == 1010);
}

TEST_CASE("param_count matches the shape-walk oracle for both architectures") {
  ModelConfig wade;
  wade.kind = ModelConfig::Kind::kWadenet;
  wade.num_blocks = 4;
  wade.base_channels = 64;
  wade.gate_channels = 16;
  wade.num_classes = 7;
  wade.window_len = 5120;
  wade.fc_widths = {512, 128};
  CHECK(param_count(wade).total == shape_walk_total(wade));

  ModelConfig naive = wade;
  naive.kind = ModelConfig::Kind::kNaive;
  CHECK(param_count(naive).total == shape_walk_total(naive));

  ModelConfig toy = toy_wadenet();
  CHECK(param_count(toy).total == shape_walk_total(toy));

  // And against the instantiated tensors at toy scale.
  Rng rng(37);
  const ParamSet params = init_params(toy, rng);
  long long materialized = 0;
  for (const auto& [name, tensor] : params) {
    (void)name;
    materialized += static_cast<long long>(tensor.numel());
  }
  CHECK(param_count(toy).total == materialized);
}

TEST_CASE("fc parameter counts are architecture independent at equal flatten") {
  ModelConfig wade = toy_wadenet();  // flatten = (8+2) * 16 = 160
  ModelConfig naive;
  naive.kind = ModelConfig::Kind::kNaive;
  naive.num_blocks = 1;
  naive.base_channels = 10;
  naive.num_classes = wade.num_classes;
  naive.window_len = 32;  // flatten = 10 * 16 = 160
  naive.fc_widths = wade.fc_widths;
  REQUIRE(wade.flatten_features() == naive.flatten_features());

  auto fc_total = [](const ModelConfig& cfg) {
    long long total = 0;
    for (const auto& layer : param_count(cfg).layers) {
      if (layer.name.rfind("fc", 0) == 0 || layer.name == "out") {
        total += layer.count;
      }
    }
    return total;
  };
  CHECK(fc_total(wade) == fc_total(naive));
}

TEST_CASE("softmax keeps the argmax of the logits") {
  Rng rng(41);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> logits(5);
    for (double& v : logits) v = rng.uniform(-10.0, 10.0);
    const auto probs = softmax(logits);
    CHECK(argmax(logits) == argmax(probs));
  }
}

TEST_CASE("config json parses, round-trips, and rejects unknown keys") {
  const ModelConfig cfg = toy_wadenet();
  const ModelConfig back = ModelConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  CHECK(back.num_blocks == cfg.num_blocks);
  CHECK(back.window_len == cfg.window_len);

  CHECK_THROWS_AS(
      ModelConfig::from_json("{\"kind\":\"naive\",\"num_classes\":2,\"bogus\":1}"),
      ConfigError);
  CHECK_THROWS_AS(ModelConfig::from_json("{\"kind\":\"naive\"}"), ConfigError);
  CHECK_THROWS_AS(ModelConfig::from_json("not json"), ConfigError);
  // Even kernels and non-divisible window lengths are invalid.
  CHECK_THROWS_AS(
      ModelConfig::from_json(
          "{\"kind\":\"naive\",\"num_classes\":2,\"kernel_size\":2}"),
      ConfigError);
  CHECK_THROWS_AS(
      ModelConfig::from_json(
          "{\"kind\":\"naive\",\"num_classes\":2,\"window_len\":100,\"num_blocks\":4}"),
      ConfigError);
}
