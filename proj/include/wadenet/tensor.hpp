#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "wadenet/error.hpp"
#include "wadenet/rng.hpp"

namespace wadenet {

enum class Mode { kTrain, kEval };

class Tape;

// Dense row-major float64 tensor (last axis fastest). Copies are aliases:
// they share the value buffer, the gradient buffer, and tape membership.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> values);
  static Tensor scalar(double value);

  bool defined() const { return meta_ != nullptr; }
  const std::vector<int>& shape() const { return meta_->shape; }
  std::size_t numel() const { return meta_->values.size(); }
  int dim(int axis) const { return meta_->shape[static_cast<std::size_t>(axis)]; }

  std::vector<double>& data() { return meta_->values; }
  const std::vector<double>& data() const { return meta_->values; }

  // Value of a one-element tensor.
  double item() const;

  // Gradient buffer; empty until the tensor joins a tape.
  std::vector<double>& grad() { return meta_->grad; }
  const std::vector<double>& grad() const { return meta_->grad; }
  bool has_grad() const { return !meta_->grad.empty(); }

  bool tracked() const { return meta_ && meta_->tape != nullptr; }
  bool tracked_on(const Tape* tape) const {
    return meta_ && meta_->tape == tape;
  }
  Tape* tape() const { return meta_ ? meta_->tape : nullptr; }

 private:
  struct Meta {
    std::vector<int> shape;
    std::vector<double> values;
    std::vector<double> grad;
    Tape* tape = nullptr;
    std::int64_t node = -1;
  };
  std::shared_ptr<Meta> meta_;
  friend class Tape;
};

// Records tensor operations for one reverse-mode sweep. A tape and the
// tensors recorded on it are confined to a single thread; it is rebuilt
// for every training step. Destroying the tape detaches the tensors that
// were watched or produced on it but leaves their gradients in place.
class Tape {
 public:
  Tape() = default;
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a leaf (parameter or input) and zeroes its gradient.
  void watch(Tensor& t);

  // Seeds grad(loss) = 1 and sweeps the nodes in reverse creation order.
  // Gradients accumulate additively at fan-out; leaves that feed no path to
  // the loss keep the zero gradient they got from watch().
  void backward(const Tensor& loss);

  // --- plumbing for operator implementations ---

  // The single tape the tracked inputs live on, or nullptr if none are
  // tracked. Inputs on two different tapes are a contract violation.
  static Tape* joint(std::initializer_list<const Tensor*> inputs);

  // Attaches `out` to this tape with the given backward closure.
  void record(Tensor& out, std::function<void()> pull);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::function<void()> pull;  // empty for leaves
  };
  std::vector<Node> nodes_;
  std::vector<std::shared_ptr<Tensor::Meta>> attached_;
};

// Per-layer batch-norm running statistics.
struct BnStats {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  explicit BnStats(int channels)
      : running_mean(static_cast<std::size_t>(channels), 0.0),
        running_var(static_cast<std::size_t>(channels), 1.0) {}
  BnStats() = default;
};

// ---- differentiable operations ----

// Cross-correlation (no kernel flip) with zero padding.
// x: (B, Cin, L), w: (Cout, Cin, k), b: (Cout) -> (B, Cout, Lout)
// Lout = floor((L + 2*padding - k) / stride) + 1.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int padding);

// x: (B, C, L). Train mode normalizes with batch statistics over (B, L) per
// channel (eps 1e-5) and updates `stats` with momentum 0.1; eval mode uses
// the running statistics.
Tensor batchnorm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   BnStats& stats, Mode mode);

Tensor relu(const Tensor& x);

// x: (B, Fin), w: (Fout, Fin), b: (Fout) -> x * w^T + b.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Inverted dropout: train mode zeroes elements with probability p and scales
// survivors by 1/(1-p); eval mode is the identity.
Tensor dropout(const Tensor& x, double p, Rng& rng, Mode mode);

// (B, Ca, L) ++ (B, Cb, L) -> (B, Ca+Cb, L). Lengths must match exactly.
Tensor concat_channels(const Tensor& a, const Tensor& b);

// (B, C, L) -> (B, C*L), row-major reinterpretation.
Tensor flatten(const Tensor& x);

// Same data, new shape with equal element count.
Tensor reshape(const Tensor& x, std::vector<int> shape);

Tensor add(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& x);

// Fixed-weight inner product; the scalarizer used by gradient checks.
Tensor weighted_sum(const Tensor& x, std::span<const double> weights);

// Mean over the batch of -log softmax(logits)[target], via log-sum-exp.
// logits: (B, K), targets: B class indices in [0, K).
Tensor softmax_cross_entropy(const Tensor& logits,
                             std::span<const int> targets);

// Runs the reverse sweep of the tape `loss` was recorded on.
void backward(const Tensor& loss);

// ---- non-recorded helpers ----

std::vector<double> softmax(std::span<const double> logits);

int argmax(std::span<const double> values);

std::string shape_string(const std::vector<int>& shape);

}  // namespace wadenet
