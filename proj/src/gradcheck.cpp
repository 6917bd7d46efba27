#include "wadenet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "wadenet/model.hpp"
#include "wadenet/wavelet.hpp"

namespace wadenet {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

double finite_diff_max_rel_err(std::vector<Tensor>& leaves,
                               const std::function<Tensor()>& make_loss,
                               double step, double corrupt_bump) {
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    for (Tensor& leaf : leaves) tape.watch(leaf);
    Tensor loss = make_loss();
    tape.backward(loss);
    for (Tensor& leaf : leaves) {
      analytic.push_back(leaf.grad());
      if (corrupt_bump != 0.0) {
        for (double& g : analytic.back()) g += corrupt_bump;
      }
    }
  }  // tape gone; the loss closure below runs untracked

  double worst = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    std::vector<double>& values = leaves[li].data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = make_loss().item();
      values[i] = saved - step;
      const double down = make_loss().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[li][i];
      const double denom =
          std::max({std::fabs(a), std::fabs(numeric), 1e-3});
      worst = std::max(worst, std::fabs(a - numeric) / denom);
    }
  }
  return worst;
}

namespace {

double bump_for(const std::string& op, const std::string& corrupt_op) {
  return op == corrupt_op ? 1e-3 : 0.0;
}

double check_conv1d(double bump) {
  Rng rng(101);
  std::vector<Tensor> leaves = {random_tensor({2, 3, 10}, rng),
                                random_tensor({4, 3, 3}, rng),
                                random_tensor({4}, rng)};
  Rng wrng(7);
  std::vector<double> weights(2 * 4 * 5);
  for (double& w : weights) w = wrng.uniform(-1.0, 1.0);
  auto loss = [&]() {
    return weighted_sum(conv1d(leaves[0], leaves[1], leaves[2], 2, 1), weights);
  };
  return finite_diff_max_rel_err(leaves, loss, kGradCheckStep, bump);
}

double check_batchnorm1d(double bump) {
  Rng rng(102);
  std::vector<Tensor> leaves = {random_tensor({2, 3, 8}, rng),
                                random_tensor({3}, rng, 0.5, 1.5),
                                random_tensor({3}, rng)};
  Rng wrng(7);
  std::vector<double> weights(2 * 3 * 8);
  for (double& w : weights) w = wrng.uniform(-1.0, 1.0);
  auto loss = [&]() {
    BnStats stats(3);
    return weighted_sum(
        batchnorm1d(leaves[0], leaves[1], leaves[2], stats, Mode::kTrain),
        weights);
  };
  return finite_diff_max_rel_err(leaves, loss, kGradCheckStep, bump);
}

double check_relu(double bump) {
  Rng rng(103);
  std::vector<Tensor> leaves = {random_tensor({2, 2, 9}, rng)};
  Rng wrng(7);
  std::vector<double> weights(2 * 2 * 9);
  for (double& w : weights) w = wrng.uniform(-1.0, 1.0);
  auto loss = [&]() { return weighted_sum(relu(leaves[0]), weights); };
  return finite_diff_max_rel_err(leaves, loss, kGradCheckStep, bump);
}

double check_linear(double bump) {
  Rng rng(104);
  std::vector<Tensor> leaves = {random_tensor({4, 8}, rng),
                                random_tensor({5, 8}, rng),
                                random_tensor({5}, rng)};
  Rng wrng(7);
  std::vector<double> weights(4 * 5);
  for (double& w : weights) w = wrng.uniform(-1.0, 1.0);
  auto loss = [&]() {
    return weighted_sum(linear(leaves[0], leaves[1], leaves[2]), weights);
  };
  return finite_diff_max_rel_err(leaves, loss, kGradCheckStep, bump);
}

double check_dropout(double bump) {
  Rng rng(105);
  std::vector<Tensor> leaves = {random_tensor({3, 7}, rng)};
  Rng wrng(7);
  std::vector<double> weights(3 * 7);
  for (double& w : weights) w = wrng.uniform(-1.0, 1.0);
  auto loss = [&]() {
    Rng mask_rng(99);  // same mask for every evaluation
    return weighted_sum(dropout(leaves[0], 0.5, mask_rng, Mode::kTrain),
                        weights);
  };
  return finite_diff_max_rel_err(leaves, loss, kGradCheckStep, bump);
}

double check_concat_channels(double bump) {
  Rng rng(106);
  std::vector<Tensor> leaves = {random_tensor({2, 2, 6}, rng),
                                random_tensor({2, 3, 6}, rng)};
  Rng wrng(7);
  std::vector<double> weights(2 * 5 * 6);
  for (double& w : weights) w = wrng.uniform(-1.0, 1.0);
  auto loss = [&]() {
    return weighted_sum(concat_channels(leaves[0], leaves[1]), weights);
  };
  return finite_diff_max_rel_err(leaves, loss, kGradCheckStep, bump);
}

double check_flatten(double bump) {
  Rng rng(107);
  std::vector<Tensor> leaves = {random_tensor({2, 3, 4}, rng)};
  Rng wrng(7);
  std::vector<double> weights(24);
  for (double& w : weights) w = wrng.uniform(-1.0, 1.0);
  auto loss = [&]() { return weighted_sum(flatten(leaves[0]), weights); };
  return finite_diff_max_rel_err(leaves, loss, kGradCheckStep, bump);
}

double check_reshape(double bump) {
  Rng rng(108);
  std::vector<Tensor> leaves = {random_tensor({2, 6}, rng)};
  Rng wrng(7);
  std::vector<double> weights(12);
  for (double& w : weights) w = wrng.uniform(-1.0, 1.0);
  auto loss = [&]() {
    return weighted_sum(reshape(leaves[0], {2, 3, 2}), weights);
  };
  return finite_diff_max_rel_err(leaves, loss, kGradCheckStep, bump);
}

double check_add(double bump) {
  Rng rng(109);
  std::vector<Tensor> leaves = {random_tensor({2, 3, 5}, rng),
                                random_tensor({2, 3, 5}, rng)};
  Rng wrng(7);
  std::vector<double> weights(30);
  for (double& w : weights) w = wrng.uniform(-1.0, 1.0);
  auto loss = [&]() { return weighted_sum(add(leaves[0], leaves[1]), weights); };
  return finite_diff_max_rel_err(leaves, loss, kGradCheckStep, bump);
}

double check_softmax_cross_entropy(double bump) {
  Rng rng(110);
  std::vector<Tensor> leaves = {random_tensor({3, 5}, rng, -2.0, 2.0)};
  const std::vector<int> targets = {0, 3, 2};
  auto loss = [&]() { return softmax_cross_entropy(leaves[0], targets); };
  return finite_diff_max_rel_err(leaves, loss, kGradCheckStep, bump);
}

double check_dwt_level(double bump) {
  Rng rng(111);
  std::vector<Tensor> leaves = {random_tensor({2, 1, 16}, rng)};
  Rng wrng(7);
  std::vector<double> weights(2 * 2 * 4);
  for (double& w : weights) w = wrng.uniform(-1.0, 1.0);
  auto loss = [&]() { return weighted_sum(dwt_level(leaves[0], 2), weights); };
  return finite_diff_max_rel_err(leaves, loss, kGradCheckStep, bump);
}

// End-to-end check: every parameter of a small WaDeNet, plus the input
// window, against finite differences of the training loss.
double check_wadenet_end_to_end(double bump) {
  ModelConfig cfg;
  cfg.kind = ModelConfig::Kind::kWadenet;
  cfg.num_blocks = 2;
  cfg.base_channels = 4;
  cfg.gate_channels = 2;
  cfg.kernel_size = 3;
  cfg.fc_widths = {8};
  cfg.num_classes = 3;
  cfg.window_len = 64;
  cfg.dropout_p = 0.5;

  Model model(cfg);
  Rng init_rng(2024);
  model.init(init_rng);
  // A zero head would hide head-input gradients; perturb it off zero.
  for (double& v : model.params.at("out.w").data()) {
    v = init_rng.uniform(-0.3, 0.3);
  }

  Rng data_rng(55);
  Tensor x = random_tensor({2, 1, cfg.window_len}, data_rng);
  const std::vector<int> targets = {0, 2};

  std::vector<Tensor> leaves;
  leaves.push_back(x);
  for (auto& [name, tensor] : model.params) {
    (void)name;
    leaves.push_back(tensor);
  }

  const auto saved_bn = model.bn;
  auto loss = [&]() {
    model.bn = saved_bn;
    Rng drop_rng(7);  // fixed dropout mask across evaluations
    Tensor logits = model.forward(x, Mode::kTrain, drop_rng);
    return softmax_cross_entropy(logits, targets);
  };
  return finite_diff_max_rel_err(leaves, loss, kGradCheckStep, bump);
}

struct RegisteredOp {
  const char* name;
  double (*check)(double bump);
};

constexpr RegisteredOp kOps[] = {
    {"conv1d", check_conv1d},
    {"batchnorm1d", check_batchnorm1d},
    {"relu", check_relu},
    {"linear", check_linear},
    {"dropout", check_dropout},
    {"concat_channels", check_concat_channels},
    {"flatten", check_flatten},
    {"reshape", check_reshape},
    {"add", check_add},
    {"softmax_cross_entropy", check_softmax_cross_entropy},
    {"dwt_level", check_dwt_level},
    {"wadenet_end_to_end", check_wadenet_end_to_end},
};

}  // namespace

std::vector<std::string> gradcheck_op_names() {
  std::vector<std::string> names;
  for (const auto& op : kOps) names.emplace_back(op.name);
  return names;
}

OpCheck run_gradcheck_op(const std::string& name,
                         const std::string& corrupt_op) {
  for (const auto& op : kOps) {
    if (name == op.name) {
      OpCheck result;
      result.op = name;
      result.max_rel_err = op.check(bump_for(name, corrupt_op));
      result.pass = result.max_rel_err < kGradCheckTol;
      return result;
    }
  }
  throw ContractError("unknown gradcheck op: " + name);
}

std::vector<OpCheck> run_gradcheck_all(const std::string& corrupt_op) {
  std::vector<OpCheck> results;
  for (const auto& op : kOps) {
    results.push_back(run_gradcheck_op(op.name, corrupt_op));
  }
  return results;
}

}  // namespace wadenet
