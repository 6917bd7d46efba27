#include "wadenet/model.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace wadenet {

namespace {

// One entry of the construction-ordered layer plan shared by init_params
// and param_count. `shape` is the weight shape; conv and linear layers also
// own a bias of length shape[0], batch-norm layers own gamma/beta of length
// shape[0].
struct PlanEntry {
  enum class Kind { kConv, kLinear, kLinearZero, kBatchNorm };
  Kind kind;
  std::string name;
  std::vector<int> shape;
};

std::vector<PlanEntry> layer_plan(const ModelConfig& cfg) {
  using Kind = PlanEntry::Kind;
  std::vector<PlanEntry> plan;
  const bool wade = cfg.kind == ModelConfig::Kind::kWadenet;

  for (int n = 1; n <= cfg.num_blocks; ++n) {
    const int cin = cfg.block_input_channels(n);
    const int ch = cfg.block_channels(n);
    const std::string block = "block" + std::to_string(n);
    plan.push_back({Kind::kConv, block + ".conv1", {ch, cin, cfg.kernel_size}});
    plan.push_back({Kind::kBatchNorm, block + ".bn1", {ch}});
    plan.push_back({Kind::kConv, block + ".conv2", {ch, ch, cfg.kernel_size}});
    plan.push_back({Kind::kBatchNorm, block + ".bn2", {ch}});

    if (wade) {
      const int branch_ch = ch / static_cast<int>(cfg.inception_kernels.size());
      const std::string incep = "incep" + std::to_string(n);
      for (int ks : cfg.inception_kernels) {
        const std::string branch = incep + ".k" + std::to_string(ks);
        plan.push_back({Kind::kConv, branch + ".conv", {branch_ch, ch, ks}});
        plan.push_back({Kind::kBatchNorm, branch + ".bn", {branch_ch}});
      }
      const std::string gate = "gate" + std::to_string(n);
      plan.push_back({Kind::kConv, gate + ".conv1", {cfg.gate_channels, 2, 3}});
      plan.push_back({Kind::kBatchNorm, gate + ".bn1", {cfg.gate_channels}});
      plan.push_back(
          {Kind::kConv, gate + ".conv2", {cfg.gate_channels, cfg.gate_channels, 3}});
      plan.push_back({Kind::kBatchNorm, gate + ".bn2", {cfg.gate_channels}});
    }
  }

  long long fin = cfg.flatten_features();
  for (std::size_t i = 0; i < cfg.fc_widths.size(); ++i) {
    const int width = cfg.fc_widths[i];
    plan.push_back({Kind::kLinear, "fc" + std::to_string(i + 1),
                    {width, static_cast<int>(fin)}});
    fin = width;
  }
  plan.push_back(
      {Kind::kLinearZero, "out", {cfg.num_classes, static_cast<int>(fin)}});
  return plan;
}

}  // namespace

int ModelConfig::block_input_channels(int n) const {
  if (n == 1) return 1;
  const int prev = block_channels(n - 1);
  return kind == Kind::kWadenet ? prev + gate_channels : prev;
}

long long ModelConfig::flatten_features() const {
  const long long final_len = window_len >> num_blocks;
  long long channels = block_channels(num_blocks);
  if (kind == Kind::kWadenet) channels += gate_channels;
  return channels * final_len;
}

void ModelConfig::validate() const {
  if (num_blocks < 1) throw ConfigError("num_blocks must be >= 1");
  if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw ConfigError("kernel_size must be odd and positive");
  }
  if (window_len < 1) throw ConfigError("window_len must be positive");
  if (num_blocks >= 31 || window_len % (1 << num_blocks) != 0) {
    throw ConfigError("window_len " + std::to_string(window_len) +
                      " is not divisible by 2^" + std::to_string(num_blocks));
  }
  if (dropout_p < 0.0 || dropout_p >= 1.0) {
    throw ConfigError("dropout_p must be in [0, 1)");
  }
  for (int w : fc_widths) {
    if (w < 1) throw ConfigError("fc_widths entries must be positive");
  }
  if (kind == Kind::kWadenet) {
    if (gate_channels < 1) throw ConfigError("gate_channels must be >= 1");
    if (inception_kernels.empty()) {
      throw ConfigError("inception_kernels must not be empty");
    }
    for (int ks : inception_kernels) {
      if (ks < 1 || ks % 2 == 0) {
        throw ConfigError("inception kernels must be odd and positive");
      }
    }
    const int branches = static_cast<int>(inception_kernels.size());
    for (int n = 1; n <= num_blocks; ++n) {
      if (block_channels(n) % branches != 0) {
        throw ConfigError("block " + std::to_string(n) + " channels (" +
                          std::to_string(block_channels(n)) +
                          ") are not divisible by the " +
                          std::to_string(branches) + " inception branches");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// JSON config

namespace {

using nlohmann::json;

const std::set<std::string> kConfigKeys = {
    "kind",           "num_blocks", "base_channels",     "kernel_size",
    "gate_channels",  "fc_widths",  "inception_kernels", "num_classes",
    "window_len",     "dropout_p"};

}  // namespace

ModelConfig ModelConfig::from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    (void)value;
    if (!kConfigKeys.count(key)) {
      throw ConfigError("unknown config key: " + key);
    }
  }
  ModelConfig cfg;
  try {
    const std::string kind = doc.at("kind").get<std::string>();
    if (kind == "naive") {
      cfg.kind = Kind::kNaive;
    } else if (kind == "wadenet") {
      cfg.kind = Kind::kWadenet;
    } else {
      throw ConfigError("kind must be \"naive\" or \"wadenet\"");
    }
    cfg.num_classes = doc.at("num_classes").get<int>();
    if (doc.count("num_blocks")) cfg.num_blocks = doc["num_blocks"].get<int>();
    if (doc.count("base_channels"))
      cfg.base_channels = doc["base_channels"].get<int>();
    if (doc.count("kernel_size")) cfg.kernel_size = doc["kernel_size"].get<int>();
    if (doc.count("gate_channels"))
      cfg.gate_channels = doc["gate_channels"].get<int>();
    if (doc.count("inception_kernels"))
      cfg.inception_kernels = doc["inception_kernels"].get<std::vector<int>>();
    if (doc.count("fc_widths"))
      cfg.fc_widths = doc["fc_widths"].get<std::vector<int>>();
    if (doc.count("window_len")) cfg.window_len = doc["window_len"].get<int>();
    if (doc.count("dropout_p")) cfg.dropout_p = doc["dropout_p"].get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ModelConfig ModelConfig::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

std::string ModelConfig::to_json() const {
  nlohmann::ordered_json doc;
  doc["kind"] = kind == Kind::kNaive ? "naive" : "wadenet";
  doc["num_blocks"] = num_blocks;
  doc["base_channels"] = base_channels;
  doc["kernel_size"] = kernel_size;
  doc["gate_channels"] = gate_channels;
  doc["inception_kernels"] = inception_kernels;
  doc["fc_widths"] = fc_widths;
  doc["num_classes"] = num_classes;
  doc["window_len"] = window_len;
  doc["dropout_p"] = dropout_p;
  return doc.dump();
}

// ---------------------------------------------------------------------------
// parameters

ParamSet init_params(const ModelConfig& config, Rng& rng) {
  config.validate();
  ParamSet params;
  for (const PlanEntry& entry : layer_plan(config)) {
    switch (entry.kind) {
      case PlanEntry::Kind::kConv:
      case PlanEntry::Kind::kLinear: {
        long long fan_in = 1;
        for (std::size_t i = 1; i < entry.shape.size(); ++i) {
          fan_in *= entry.shape[i];
        }
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        Tensor w(entry.shape);
        for (double& v : w.data()) v = rng.uniform(-bound, bound);
        params.emplace(entry.name + ".w", std::move(w));
        params.emplace(entry.name + ".b", Tensor({entry.shape[0]}));
        break;
      }
      case PlanEntry::Kind::kLinearZero: {
        params.emplace(entry.name + ".w", Tensor(entry.shape));
        params.emplace(entry.name + ".b", Tensor({entry.shape[0]}));
        break;
      }
      case PlanEntry::Kind::kBatchNorm: {
        Tensor gamma(entry.shape);
        for (double& v : gamma.data()) v = 1.0;
        params.emplace(entry.name + ".gamma", std::move(gamma));
        params.emplace(entry.name + ".beta", Tensor(entry.shape));
        break;
      }
    }
  }
  return params;
}

ParamCountTable param_count(const ModelConfig& config) {
  config.validate();
  ParamCountTable table;
  for (const PlanEntry& entry : layer_plan(config)) {
    LayerCount row;
    row.name = entry.name;
    row.shape = entry.shape;
    switch (entry.kind) {
      case PlanEntry::Kind::kConv: {
        const long long co = entry.shape[0], ci = entry.shape[1],
                        k = entry.shape[2];
        row.count = co * ci * k + co;
        break;
      }
      case PlanEntry::Kind::kLinear:
      case PlanEntry::Kind::kLinearZero: {
        const long long fo = entry.shape[0], fi = entry.shape[1];
        row.count = fo * fi + fo;
        break;
      }
      case PlanEntry::Kind::kBatchNorm:
        row.count = 2LL * entry.shape[0];
        break;
    }
    table.total += row.count;
    table.layers.push_back(std::move(row));
  }
  return table;
}

// ---------------------------------------------------------------------------
// Model

Model::Model(ModelConfig cfg) : config(std::move(cfg)) {
  config.validate();
  for (const PlanEntry& entry : layer_plan(config)) {
    switch (entry.kind) {
      case PlanEntry::Kind::kConv:
      case PlanEntry::Kind::kLinear:
      case PlanEntry::Kind::kLinearZero:
        params.emplace(entry.name + ".w", Tensor(entry.shape));
        params.emplace(entry.name + ".b", Tensor({entry.shape[0]}));
        break;
      case PlanEntry::Kind::kBatchNorm: {
        Tensor gamma(entry.shape);
        for (double& v : gamma.data()) v = 1.0;
        params.emplace(entry.name + ".gamma", std::move(gamma));
        params.emplace(entry.name + ".beta", Tensor(entry.shape));
        bn.emplace(entry.name, BnStats(entry.shape[0]));
        break;
      }
    }
  }
}

const Tensor& Model::p(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) {
    throw ContractError("missing parameter: " + name);
  }
  return it->second;
}

Tensor Model::conv_block(const Tensor& x, int n, Mode mode) {
  if (x.dim(2) % 2 != 0) {
    throw ShapeError("conv_block input length must be even, got " +
                     std::to_string(x.dim(2)));
  }
  const std::string block = "block" + std::to_string(n);
  const int pad = (config.kernel_size - 1) / 2;
  Tensor h = conv1d(x, p(block + ".conv1.w"), p(block + ".conv1.b"), 1, pad);
  h = relu(batchnorm1d(h, p(block + ".bn1.gamma"), p(block + ".bn1.beta"),
                       bn.at(block + ".bn1"), mode));
  h = conv1d(h, p(block + ".conv2.w"), p(block + ".conv2.b"), 2, pad);
  h = relu(batchnorm1d(h, p(block + ".bn2.gamma"), p(block + ".bn2.beta"),
                       bn.at(block + ".bn2"), mode));
  return h;
}

Tensor Model::inception_residual(const Tensor& x, int n, Mode mode) {
  const int channels = x.dim(1);
  const int branches = static_cast<int>(config.inception_kernels.size());
  if (channels % branches != 0) {
    throw ConfigError("inception input channels (" + std::to_string(channels) +
                      ") not divisible by " + std::to_string(branches) +
                      " branches");
  }
  const std::string incep = "incep" + std::to_string(n);
  Tensor merged;
  for (int ks : config.inception_kernels) {
    const std::string branch = incep + ".k" + std::to_string(ks);
    Tensor h = conv1d(x, p(branch + ".conv.w"), p(branch + ".conv.b"), 1,
                      (ks - 1) / 2);
    h = relu(batchnorm1d(h, p(branch + ".bn.gamma"), p(branch + ".bn.beta"),
                         bn.at(branch + ".bn"), mode));
    merged = merged.defined() ? concat_channels(merged, h) : h;
  }
  return add(merged, x);
}

Tensor Model::dwt_gate(const Tensor& coeffs, int n, Mode mode) {
  const std::string gate = "gate" + std::to_string(n);
  Tensor h = conv1d(coeffs, p(gate + ".conv1.w"), p(gate + ".conv1.b"), 1, 1);
  h = relu(batchnorm1d(h, p(gate + ".bn1.gamma"), p(gate + ".bn1.beta"),
                       bn.at(gate + ".bn1"), mode));
  h = conv1d(h, p(gate + ".conv2.w"), p(gate + ".conv2.b"), 1, 1);
  h = relu(batchnorm1d(h, p(gate + ".bn2.gamma"), p(gate + ".bn2.beta"),
                       bn.at(gate + ".bn2"), mode));
  return h;
}

Tensor Model::fc_stack(const Tensor& features, Mode mode, Rng& rng) {
  Tensor h = features;
  for (std::size_t i = 0; i < config.fc_widths.size(); ++i) {
    const std::string fc = "fc" + std::to_string(i + 1);
    h = relu(linear(h, p(fc + ".w"), p(fc + ".b")));
    h = dropout(h, config.dropout_p, rng, mode);
  }
  return linear(h, p("out.w"), p("out.b"));
}

Tensor Model::forward(const Tensor& x, Mode mode, Rng& rng, ShapeTrace* trace) {
  if (x.shape().size() != 3 || x.dim(1) != 1 || x.dim(2) != config.window_len) {
    throw ShapeError("model input must be (B,1," +
                     std::to_string(config.window_len) + "), got " +
                     shape_string(x.shape()));
  }
  if (trace) *trace = ShapeTrace{};

  Tensor cur = x;
  for (int n = 1; n <= config.num_blocks; ++n) {
    if (trace) trace->block_inputs.push_back({cur.dim(1), cur.dim(2)});
    cur = conv_block(cur, n, mode);
    if (trace) trace->block_outputs.push_back({cur.dim(1), cur.dim(2)});
    if (config.kind == ModelConfig::Kind::kWadenet) {
      cur = inception_residual(cur, n, mode);
      Tensor gated = dwt_gate(dwt_level(x, n), n, mode);
      cur = concat_channels(cur, gated);
    }
  }

  Tensor flat = flatten(cur);
  if (trace) trace->flatten_features = flat.dim(1);
  return fc_stack(flat, mode, rng);
}

}  // namespace wadenet
