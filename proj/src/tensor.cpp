#include "wadenet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

namespace wadenet {

namespace {

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

}  // namespace

std::string shape_string(const std::vector<int>& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ')';
  return out.str();
}

Tensor::Tensor(std::vector<int> shape) {
  meta_ = std::make_shared<Meta>();
  std::size_t n = shape_numel(shape);
  meta_->shape = std::move(shape);
  meta_->values.assign(n, 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values) {
  meta_ = std::make_shared<Meta>();
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_string(shape));
  }
  meta_->shape = std::move(shape);
  meta_->values = std::move(values);
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() requires a one-element tensor, got shape " +
                        shape_string(shape()));
  }
  return meta_->values[0];
}

Tape::~Tape() {
  for (auto& meta : attached_) {
    meta->tape = nullptr;
    meta->node = -1;
  }
}

void Tape::watch(Tensor& t) {
  if (!t.defined()) throw ContractError("watch() on an undefined tensor");
  if (t.meta_->tape != nullptr) {
    throw ContractError("tensor already participates in a tape");
  }
  t.meta_->tape = this;
  t.meta_->node = static_cast<std::int64_t>(nodes_.size());
  t.meta_->grad.assign(t.numel(), 0.0);
  nodes_.push_back(Node{});
  attached_.push_back(t.meta_);
}

Tape* Tape::joint(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = nullptr;
  for (const Tensor* t : inputs) {
    if (!t->tracked()) continue;
    if (tape == nullptr) {
      tape = t->tape();
    } else if (tape != t->tape()) {
      throw ContractError("operation inputs live on different tapes");
    }
  }
  return tape;
}

void Tape::record(Tensor& out, std::function<void()> pull) {
  if (out.meta_->tape != nullptr) {
    throw ContractError("operation output already recorded");
  }
  out.meta_->tape = this;
  out.meta_->node = static_cast<std::int64_t>(nodes_.size());
  out.meta_->grad.assign(out.numel(), 0.0);
  nodes_.push_back(Node{std::move(pull)});
  attached_.push_back(out.meta_);
}

void Tape::backward(const Tensor& loss) {
  if (!loss.tracked_on(this)) {
    throw ContractError("backward() loss was not produced on this tape");
  }
  if (loss.numel() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " +
                        shape_string(loss.shape()));
  }
  loss.meta_->grad[0] = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (nodes_[i].pull) nodes_[i].pull();
  }
}

void backward(const Tensor& loss) {
  if (!loss.tracked()) {
    throw ContractError("backward() loss is not on any tape");
  }
  loss.tape()->backward(loss);
}

// ---------------------------------------------------------------------------
// conv1d

namespace {

void pad_rows(const double* src, double* dst, int batch, int channels, int len,
              int padding) {
  const int padded = len + 2 * padding;
  for (int bc = 0; bc < batch * channels; ++bc) {
    double* row = dst + static_cast<std::ptrdiff_t>(bc) * padded;
    std::fill(row, row + padded, 0.0);
    std::memcpy(row + padding, src + static_cast<std::ptrdiff_t>(bc) * len,
                sizeof(double) * static_cast<std::size_t>(len));
  }
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int padding) {
  if (x.shape().size() != 3 || w.shape().size() != 3 || b.shape().size() != 1) {
    throw ShapeError("conv1d expects x (B,Cin,L), w (Cout,Cin,k), b (Cout)");
  }
  const int batch = x.dim(0), cin = x.dim(1), len = x.dim(2);
  const int cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != cin) {
    throw ShapeError("conv1d channel mismatch: x has " + std::to_string(cin) +
                     " input channels, w expects " + std::to_string(w.dim(1)));
  }
  if (b.dim(0) != cout) throw ShapeError("conv1d bias size mismatch");
  if (k % 2 == 0) throw ShapeError("conv1d kernel size must be odd");
  if (stride < 1) throw ShapeError("conv1d stride must be >= 1");
  if (padding < 0) throw ShapeError("conv1d padding must be >= 0");
  if (len + 2 * padding < k) {
    throw ShapeError("conv1d input too short: L=" + std::to_string(len) +
                     ", padding=" + std::to_string(padding) +
                     ", k=" + std::to_string(k));
  }

  const int padded = len + 2 * padding;
  const int lout = (len + 2 * padding - k) / stride + 1;
  Tensor y({batch, cout, lout});

  std::vector<double> xp(
      static_cast<std::size_t>(batch) * cin * padded);
  pad_rows(x.data().data(), xp.data(), batch, cin, len, padding);

  const double* wd = w.data().data();
  const double* bd = b.data().data();
  double* yd = y.data().data();
  for (int bi = 0; bi < batch; ++bi) {
    for (int co = 0; co < cout; ++co) {
      double* yrow = yd + (static_cast<std::ptrdiff_t>(bi) * cout + co) * lout;
      std::fill(yrow, yrow + lout, bd[co]);
      for (int ci = 0; ci < cin; ++ci) {
        const double* xrow =
            xp.data() + (static_cast<std::ptrdiff_t>(bi) * cin + ci) * padded;
        const double* wrow =
            wd + (static_cast<std::ptrdiff_t>(co) * cin + ci) * k;
        for (int j = 0; j < k; ++j) {
          const double wv = wrow[j];
          const double* xs = xrow + j;
          if (stride == 1) {
            for (int t = 0; t < lout; ++t) yrow[t] += wv * xs[t];
          } else {
            for (int t = 0; t < lout; ++t) yrow[t] += wv * xs[t * stride];
          }
        }
      }
    }
  }

  if (Tape* tape = Tape::joint({&x, &w, &b})) {
    Tensor xc = x, wc = w, bc = b, yc = y;
    tape->record(y, [xc, wc, bc, yc, tape, stride, padding, batch, cin, cout,
                     len, k, lout, padded]() {
      const double* g = yc.grad().data();
      const double* wd = wc.data().data();
      const bool need_dx = xc.tracked_on(tape);
      const bool need_dw = wc.tracked_on(tape);
      const bool need_db = bc.tracked_on(tape);

      if (need_db) {
        double* db = bc.grad().data();
        for (int bi = 0; bi < batch; ++bi)
          for (int co = 0; co < cout; ++co) {
            const double* grow =
                g + (static_cast<std::ptrdiff_t>(bi) * cout + co) * lout;
            double s = 0.0;
            for (int t = 0; t < lout; ++t) s += grow[t];
            db[co] += s;
          }
      }

      if (need_dw) {
        std::vector<double> xp(static_cast<std::size_t>(batch) * cin * padded);
        pad_rows(xc.data().data(), xp.data(), batch, cin, len, padding);
        double* dw = wc.grad().data();
        for (int bi = 0; bi < batch; ++bi)
          for (int co = 0; co < cout; ++co) {
            const double* grow =
                g + (static_cast<std::ptrdiff_t>(bi) * cout + co) * lout;
            for (int ci = 0; ci < cin; ++ci) {
              const double* xrow =
                  xp.data() +
                  (static_cast<std::ptrdiff_t>(bi) * cin + ci) * padded;
              double* dwrow =
                  dw + (static_cast<std::ptrdiff_t>(co) * cin + ci) * k;
              for (int j = 0; j < k; ++j) {
                const double* xs = xrow + j;
                double s = 0.0;
                if (stride == 1) {
                  for (int t = 0; t < lout; ++t) s += grow[t] * xs[t];
                } else {
                  for (int t = 0; t < lout; ++t) s += grow[t] * xs[t * stride];
                }
                dwrow[j] += s;
              }
            }
          }
      }

      if (need_dx) {
        std::vector<double> dxp(static_cast<std::size_t>(batch) * cin * padded,
                                0.0);
        for (int bi = 0; bi < batch; ++bi)
          for (int co = 0; co < cout; ++co) {
            const double* grow =
                g + (static_cast<std::ptrdiff_t>(bi) * cout + co) * lout;
            for (int ci = 0; ci < cin; ++ci) {
              double* dxrow =
                  dxp.data() +
                  (static_cast<std::ptrdiff_t>(bi) * cin + ci) * padded;
              const double* wrow =
                  wd + (static_cast<std::ptrdiff_t>(co) * cin + ci) * k;
              for (int j = 0; j < k; ++j) {
                const double wv = wrow[j];
                double* xs = dxrow + j;
                if (stride == 1) {
                  for (int t = 0; t < lout; ++t) xs[t] += wv * grow[t];
                } else {
                  for (int t = 0; t < lout; ++t) xs[t * stride] += wv * grow[t];
                }
              }
            }
          }
        double* dx = xc.grad().data();
        for (int bc2 = 0; bc2 < batch * cin; ++bc2) {
          const double* src =
              dxp.data() + static_cast<std::ptrdiff_t>(bc2) * padded + padding;
          double* dst = dx + static_cast<std::ptrdiff_t>(bc2) * len;
          for (int t = 0; t < len; ++t) dst[t] += src[t];
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// batchnorm1d

Tensor batchnorm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   BnStats& stats, Mode mode) {
  if (x.shape().size() != 3) throw ShapeError("batchnorm1d expects (B,C,L)");
  const int batch = x.dim(0), channels = x.dim(1), len = x.dim(2);
  if (gamma.shape().size() != 1 || gamma.dim(0) != channels ||
      beta.shape().size() != 1 || beta.dim(0) != channels) {
    throw ShapeError("batchnorm1d gamma/beta must have shape (C)");
  }
  if (static_cast<int>(stats.running_mean.size()) != channels) {
    throw ShapeError("batchnorm1d running stats channel mismatch");
  }
  const std::size_t per_channel =
      static_cast<std::size_t>(batch) * static_cast<std::size_t>(len);
  if (mode == Mode::kTrain && per_channel < 2) {
    throw ShapeError("batchnorm1d train mode needs B*L >= 2 per channel");
  }

  constexpr double kEps = 1e-5;
  constexpr double kMomentum = 0.1;

  std::vector<double> mean(channels), inv_std(channels);
  if (mode == Mode::kTrain) {
    for (int c = 0; c < channels; ++c) {
      double s = 0.0;
      for (int bi = 0; bi < batch; ++bi) {
        const double* row = x.data().data() +
                            (static_cast<std::ptrdiff_t>(bi) * channels + c) * len;
        for (int t = 0; t < len; ++t) s += row[t];
      }
      const double m = s / static_cast<double>(per_channel);
      double v = 0.0;
      for (int bi = 0; bi < batch; ++bi) {
        const double* row = x.data().data() +
                            (static_cast<std::ptrdiff_t>(bi) * channels + c) * len;
        for (int t = 0; t < len; ++t) {
          const double d = row[t] - m;
          v += d * d;
        }
      }
      v /= static_cast<double>(per_channel);
      mean[c] = m;
      inv_std[c] = 1.0 / std::sqrt(v + kEps);
      stats.running_mean[c] = (1.0 - kMomentum) * stats.running_mean[c] + kMomentum * m;
      stats.running_var[c] = (1.0 - kMomentum) * stats.running_var[c] + kMomentum * v;
    }
  } else {
    for (int c = 0; c < channels; ++c) {
      mean[c] = stats.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(stats.running_var[c] + kEps);
    }
  }

  Tensor y({batch, channels, len});
  for (int bi = 0; bi < batch; ++bi)
    for (int c = 0; c < channels; ++c) {
      const double* row = x.data().data() +
                          (static_cast<std::ptrdiff_t>(bi) * channels + c) * len;
      double* out = y.data().data() +
                    (static_cast<std::ptrdiff_t>(bi) * channels + c) * len;
      const double m = mean[c], is = inv_std[c];
      const double g = gamma.data()[static_cast<std::size_t>(c)];
      const double b = beta.data()[static_cast<std::size_t>(c)];
      for (int t = 0; t < len; ++t) out[t] = (row[t] - m) * is * g + b;
    }

  if (Tape* tape = Tape::joint({&x, &gamma, &beta})) {
    Tensor xc = x, gc = gamma, bc = beta, yc = y;
    auto mean_s = std::make_shared<std::vector<double>>(std::move(mean));
    auto inv_s = std::make_shared<std::vector<double>>(std::move(inv_std));
    tape->record(y, [xc, gc, bc, yc, tape, mean_s, inv_s, batch, channels, len,
                     mode]() {
      const double* g = yc.grad().data();
      const double* xd = xc.data().data();
      const std::size_t per_channel =
          static_cast<std::size_t>(batch) * static_cast<std::size_t>(len);
      const bool need_dx = xc.tracked_on(tape);
      const bool need_dg = gc.tracked_on(tape);
      const bool need_db = bc.tracked_on(tape);

      for (int c = 0; c < channels; ++c) {
        const double m = (*mean_s)[static_cast<std::size_t>(c)];
        const double is = (*inv_s)[static_cast<std::size_t>(c)];
        const double gam = gc.data()[static_cast<std::size_t>(c)];

        double gsum = 0.0, gxhat = 0.0;
        for (int bi = 0; bi < batch; ++bi) {
          const std::ptrdiff_t off =
              (static_cast<std::ptrdiff_t>(bi) * channels + c) * len;
          const double* grow = g + off;
          const double* xrow = xd + off;
          for (int t = 0; t < len; ++t) {
            gsum += grow[t];
            gxhat += grow[t] * (xrow[t] - m) * is;
          }
        }
        if (need_dg) gc.grad()[static_cast<std::size_t>(c)] += gxhat;
        if (need_db) bc.grad()[static_cast<std::size_t>(c)] += gsum;
        if (need_dx) {
          const double n = static_cast<double>(per_channel);
          for (int bi = 0; bi < batch; ++bi) {
            const std::ptrdiff_t off =
                (static_cast<std::ptrdiff_t>(bi) * channels + c) * len;
            const double* grow = g + off;
            const double* xrow = xd + off;
            double* dxr = xc.grad().data() + off;
            if (mode == Mode::kTrain) {
              for (int t = 0; t < len; ++t) {
                const double xhat = (xrow[t] - m) * is;
                dxr[t] += gam * is * (grow[t] - gsum / n - xhat * gxhat / n);
              }
            } else {
              for (int t = 0; t < len; ++t) dxr[t] += gam * is * grow[t];
            }
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// relu

Tensor relu(const Tensor& x) {
  Tensor y(x.shape());
  const double* xd = x.data().data();
  double* yd = y.data().data();
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i) yd[i] = xd[i] > 0.0 ? xd[i] : 0.0;

  if (Tape* tape = Tape::joint({&x})) {
    Tensor xc = x, yc = y;
    tape->record(y, [xc, yc, tape]() {
      if (!xc.tracked_on(tape)) return;
      const double* g = yc.grad().data();
      const double* xd = xc.data().data();
      double* dx = xc.grad().data();
      const std::size_t n = xc.numel();
      // Subgradient at exactly 0 is 0.
      for (std::size_t i = 0; i < n; ++i)
        if (xd[i] > 0.0) dx[i] += g[i];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// linear

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.shape().size() != 2 || w.shape().size() != 2 || b.shape().size() != 1) {
    throw ShapeError("linear expects x (B,Fin), w (Fout,Fin), b (Fout)");
  }
  const int batch = x.dim(0), fin = x.dim(1), fout = w.dim(0);
  if (w.dim(1) != fin) {
    throw ShapeError("linear dimension mismatch: x has " + std::to_string(fin) +
                     " features, w expects " + std::to_string(w.dim(1)));
  }
  if (b.dim(0) != fout) throw ShapeError("linear bias size mismatch");

  Tensor y({batch, fout});
  const double* xd = x.data().data();
  const double* wd = w.data().data();
  const double* bd = b.data().data();
  double* yd = y.data().data();
  for (int bi = 0; bi < batch; ++bi) {
    const double* xrow = xd + static_cast<std::ptrdiff_t>(bi) * fin;
    double* yrow = yd + static_cast<std::ptrdiff_t>(bi) * fout;
    for (int o = 0; o < fout; ++o) {
      const double* wrow = wd + static_cast<std::ptrdiff_t>(o) * fin;
      double s = bd[o];
      for (int i = 0; i < fin; ++i) s += xrow[i] * wrow[i];
      yrow[o] = s;
    }
  }

  if (Tape* tape = Tape::joint({&x, &w, &b})) {
    Tensor xc = x, wc = w, bc = b, yc = y;
    tape->record(y, [xc, wc, bc, yc, tape, batch, fin, fout]() {
      const double* g = yc.grad().data();
      const double* xd = xc.data().data();
      const double* wd = wc.data().data();
      const bool need_dx = xc.tracked_on(tape);
      const bool need_dw = wc.tracked_on(tape);
      const bool need_db = bc.tracked_on(tape);
      for (int bi = 0; bi < batch; ++bi) {
        const double* grow = g + static_cast<std::ptrdiff_t>(bi) * fout;
        const double* xrow = xd + static_cast<std::ptrdiff_t>(bi) * fin;
        for (int o = 0; o < fout; ++o) {
          const double gv = grow[o];
          if (gv == 0.0) continue;
          if (need_db) bc.grad()[static_cast<std::size_t>(o)] += gv;
          const double* wrow = wd + static_cast<std::ptrdiff_t>(o) * fin;
          if (need_dx) {
            double* dxr = xc.grad().data() + static_cast<std::ptrdiff_t>(bi) * fin;
            for (int i = 0; i < fin; ++i) dxr[i] += gv * wrow[i];
          }
          if (need_dw) {
            double* dwr = wc.grad().data() + static_cast<std::ptrdiff_t>(o) * fin;
            for (int i = 0; i < fin; ++i) dwr[i] += gv * xrow[i];
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// dropout

Tensor dropout(const Tensor& x, double p, Rng& rng, Mode mode) {
  if (p < 0.0 || p >= 1.0) {
    throw ConfigError("dropout probability must be in [0, 1), got " +
                      std::to_string(p));
  }
  if (mode == Mode::kEval || p == 0.0) return x;

  const std::size_t n = x.numel();
  auto mask = std::make_shared<std::vector<std::uint8_t>>(n);
  const double scale = 1.0 / (1.0 - p);
  Tensor y(x.shape());
  const double* xd = x.data().data();
  double* yd = y.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const bool keep = rng.uniform01() >= p;
    (*mask)[i] = keep;
    yd[i] = keep ? xd[i] * scale : 0.0;
  }

  if (Tape* tape = Tape::joint({&x})) {
    Tensor xc = x, yc = y;
    tape->record(y, [xc, yc, tape, mask, scale]() {
      if (!xc.tracked_on(tape)) return;
      const double* g = yc.grad().data();
      double* dx = xc.grad().data();
      const std::size_t n = xc.numel();
      for (std::size_t i = 0; i < n; ++i)
        if ((*mask)[i]) dx[i] += g[i] * scale;
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// concat_channels

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 3 || b.shape().size() != 3) {
    throw ShapeError("concat_channels expects (B,C,L) tensors");
  }
  const int batch = a.dim(0), ca = a.dim(1), len = a.dim(2);
  const int cb = b.dim(1);
  if (b.dim(0) != batch) throw ShapeError("concat_channels batch mismatch");
  if (b.dim(2) != len) {
    throw ShapeError("concat_channels length mismatch: " +
                     std::to_string(len) + " vs " + std::to_string(b.dim(2)));
  }

  Tensor y({batch, ca + cb, len});
  const std::size_t row_a = static_cast<std::size_t>(ca) * len;
  const std::size_t row_b = static_cast<std::size_t>(cb) * len;
  for (int bi = 0; bi < batch; ++bi) {
    double* dst = y.data().data() +
                  static_cast<std::ptrdiff_t>(bi) * (row_a + row_b);
    std::memcpy(dst, a.data().data() + bi * row_a, sizeof(double) * row_a);
    std::memcpy(dst + row_a, b.data().data() + bi * row_b,
                sizeof(double) * row_b);
  }

  if (Tape* tape = Tape::joint({&a, &b})) {
    Tensor ac = a, bc = b, yc = y;
    tape->record(y, [ac, bc, yc, tape, batch, row_a, row_b]() {
      const double* g = yc.grad().data();
      for (int bi = 0; bi < batch; ++bi) {
        const double* grow =
            g + static_cast<std::ptrdiff_t>(bi) * (row_a + row_b);
        if (ac.tracked_on(tape)) {
          double* da = ac.grad().data() + bi * row_a;
          for (std::size_t i = 0; i < row_a; ++i) da[i] += grow[i];
        }
        if (bc.tracked_on(tape)) {
          double* db = bc.grad().data() + bi * row_b;
          for (std::size_t i = 0; i < row_b; ++i) db[i] += grow[row_a + i];
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// flatten / reshape

Tensor reshape(const Tensor& x, std::vector<int> shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape from " + shape_string(x.shape()) + " to " +
                     shape_string(shape) + " changes element count");
  }
  Tensor y(std::move(shape), x.data());
  if (Tape* tape = Tape::joint({&x})) {
    Tensor xc = x, yc = y;
    tape->record(y, [xc, yc, tape]() {
      if (!xc.tracked_on(tape)) return;
      const double* g = yc.grad().data();
      double* dx = xc.grad().data();
      const std::size_t n = xc.numel();
      for (std::size_t i = 0; i < n; ++i) dx[i] += g[i];
    });
  }
  return y;
}

Tensor flatten(const Tensor& x) {
  if (x.shape().size() != 3) throw ShapeError("flatten expects (B,C,L)");
  return reshape(x, {x.dim(0), x.dim(1) * x.dim(2)});
}

// ---------------------------------------------------------------------------
// add / sum / weighted_sum

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add shape mismatch: " + shape_string(a.shape()) +
                     " vs " + shape_string(b.shape()));
  }
  Tensor y(a.shape());
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  double* yd = y.data().data();
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) yd[i] = ad[i] + bd[i];

  if (Tape* tape = Tape::joint({&a, &b})) {
    Tensor ac = a, bc = b, yc = y;
    tape->record(y, [ac, bc, yc, tape]() {
      const double* g = yc.grad().data();
      const std::size_t n = yc.numel();
      if (ac.tracked_on(tape)) {
        double* da = ac.grad().data();
        for (std::size_t i = 0; i < n; ++i) da[i] += g[i];
      }
      if (bc.tracked_on(tape)) {
        double* db = bc.grad().data();
        for (std::size_t i = 0; i < n; ++i) db[i] += g[i];
      }
    });
  }
  return y;
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor y = Tensor::scalar(s);
  if (Tape* tape = Tape::joint({&x})) {
    Tensor xc = x, yc = y;
    tape->record(y, [xc, yc, tape]() {
      if (!xc.tracked_on(tape)) return;
      const double g = yc.grad()[0];
      for (double& d : xc.grad()) d += g;
    });
  }
  return y;
}

Tensor weighted_sum(const Tensor& x, std::span<const double> weights) {
  if (weights.size() != x.numel()) {
    throw ShapeError("weighted_sum weight count mismatch");
  }
  double s = 0.0;
  const double* xd = x.data().data();
  for (std::size_t i = 0; i < weights.size(); ++i) s += xd[i] * weights[i];
  Tensor y = Tensor::scalar(s);
  if (Tape* tape = Tape::joint({&x})) {
    Tensor xc = x, yc = y;
    auto ws = std::make_shared<std::vector<double>>(weights.begin(), weights.end());
    tape->record(y, [xc, yc, tape, ws]() {
      if (!xc.tracked_on(tape)) return;
      const double g = yc.grad()[0];
      double* dx = xc.grad().data();
      for (std::size_t i = 0; i < ws->size(); ++i) dx[i] += g * (*ws)[i];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// softmax_cross_entropy

Tensor softmax_cross_entropy(const Tensor& logits,
                             std::span<const int> targets) {
  if (logits.shape().size() != 2) {
    throw ShapeError("softmax_cross_entropy expects logits (B,K)");
  }
  const int batch = logits.dim(0), classes = logits.dim(1);
  if (static_cast<int>(targets.size()) != batch) {
    throw ShapeError("softmax_cross_entropy target count mismatch");
  }
  for (int t : targets) {
    if (t < 0 || t >= classes) {
      throw ContractError("softmax_cross_entropy target " + std::to_string(t) +
                          " out of range [0, " + std::to_string(classes) + ")");
    }
  }

  // Softmax rows are saved for the backward pass.
  auto probs = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(batch) * classes);
  const double* zd = logits.data().data();
  double total = 0.0;
  for (int bi = 0; bi < batch; ++bi) {
    const double* row = zd + static_cast<std::ptrdiff_t>(bi) * classes;
    double* prow = probs->data() + static_cast<std::ptrdiff_t>(bi) * classes;
    double m = row[0];
    for (int k = 1; k < classes; ++k) m = std::max(m, row[k]);
    double denom = 0.0;
    for (int k = 0; k < classes; ++k) denom += std::exp(row[k] - m);
    const double lse = m + std::log(denom);
    for (int k = 0; k < classes; ++k) prow[k] = std::exp(row[k] - m) / denom;
    total += lse - row[targets[static_cast<std::size_t>(bi)]];
  }
  Tensor loss = Tensor::scalar(total / batch);

  if (Tape* tape = Tape::joint({&logits})) {
    Tensor zc = logits, lc = loss;
    auto tgt = std::make_shared<std::vector<int>>(targets.begin(), targets.end());
    tape->record(loss, [zc, lc, tape, probs, tgt, batch, classes]() {
      if (!zc.tracked_on(tape)) return;
      const double g = lc.grad()[0];
      double* dz = zc.grad().data();
      for (int bi = 0; bi < batch; ++bi) {
        const double* prow =
            probs->data() + static_cast<std::ptrdiff_t>(bi) * classes;
        double* drow = dz + static_cast<std::ptrdiff_t>(bi) * classes;
        const int t = (*tgt)[static_cast<std::size_t>(bi)];
        for (int k = 0; k < classes; ++k) {
          drow[k] += g * (prow[k] - (k == t ? 1.0 : 0.0)) / batch;
        }
      }
    });
  }
  return loss;
}

// ---------------------------------------------------------------------------
// helpers

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double denom = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    denom += out[i];
  }
  for (double& v : out) v /= denom;
  return out;
}

int argmax(std::span<const double> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) {
      best = static_cast<int>(i);
    }
  }
  return best;
}

}  // namespace wadenet
