#include "wadenet/wavelet.hpp"

#include <cmath>
#include <cstring>
#include <numbers>
#include <string>

namespace wadenet {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

void analysis_into(const double* x, std::size_t len, double* approx,
                   double* detail) {
  const std::size_t half = len / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double a = x[2 * i], b = x[2 * i + 1];
    approx[i] = (a + b) * kInvSqrt2;
    detail[i] = (a - b) * kInvSqrt2;
  }
}

void synthesis_into(const double* approx, const double* detail,
                    std::size_t half, double* x) {
  for (std::size_t i = 0; i < half; ++i) {
    const double a = approx[i], d = detail[i];
    x[2 * i] = (a + d) * kInvSqrt2;
    x[2 * i + 1] = (a - d) * kInvSqrt2;
  }
}

}  // namespace

HaarPair haar_analysis_step(std::span<const double> x) {
  if (x.size() < 2 || x.size() % 2 != 0) {
    throw ShapeError("haar_analysis_step requires an even length >= 2, got " +
                     std::to_string(x.size()));
  }
  HaarPair out;
  out.approx.resize(x.size() / 2);
  out.detail.resize(x.size() / 2);
  analysis_into(x.data(), x.size(), out.approx.data(), out.detail.data());
  return out;
}

std::vector<double> haar_synthesis_step(std::span<const double> approx,
                                        std::span<const double> detail) {
  if (approx.size() != detail.size()) {
    throw ShapeError("haar_synthesis_step length mismatch: " +
                     std::to_string(approx.size()) + " vs " +
                     std::to_string(detail.size()));
  }
  std::vector<double> x(2 * approx.size());
  synthesis_into(approx.data(), detail.data(), approx.size(), x.data());
  return x;
}

WaveletPyramid build_pyramid(std::span<const double> x, int levels) {
  if (levels < 1) throw ShapeError("build_pyramid requires levels >= 1");
  const std::size_t divisor = std::size_t{1} << levels;
  if (x.size() == 0 || x.size() % divisor != 0) {
    throw ShapeError("build_pyramid: length " + std::to_string(x.size()) +
                     " is not divisible by 2^" + std::to_string(levels));
  }
  WaveletPyramid pyramid;
  pyramid.source_length = x.size();
  pyramid.levels.reserve(static_cast<std::size_t>(levels));
  std::span<const double> current = x;
  for (int n = 0; n < levels; ++n) {
    pyramid.levels.push_back(
        {std::vector<double>(current.size() / 2),
         std::vector<double>(current.size() / 2)});
    auto& level = pyramid.levels.back();
    analysis_into(current.data(), current.size(), level.approx.data(),
                  level.detail.data());
    current = level.approx;
  }
  return pyramid;
}

std::vector<double> reconstruct(const WaveletPyramid& pyramid) {
  if (pyramid.levels.empty()) throw ShapeError("reconstruct: empty pyramid");
  std::vector<double> x = pyramid.levels.back().approx;
  for (std::size_t n = pyramid.levels.size(); n-- > 0;) {
    x = haar_synthesis_step(x, pyramid.levels[n].detail);
  }
  return x;
}

Tensor dwt_level(const Tensor& x, int level) {
  if (x.shape().size() != 3 || x.dim(1) != 1) {
    throw ShapeError("dwt_level expects x (B,1,L)");
  }
  if (level < 1) throw ShapeError("dwt_level requires level >= 1");
  const int batch = x.dim(0);
  const int len = x.dim(2);
  const std::size_t divisor = std::size_t{1} << level;
  if (len <= 0 || static_cast<std::size_t>(len) % divisor != 0) {
    throw ShapeError("dwt_level: length " + std::to_string(len) +
                     " is not divisible by 2^" + std::to_string(level));
  }
  const int out_len = static_cast<int>(static_cast<std::size_t>(len) / divisor);

  Tensor y({batch, 2, out_len});
  std::vector<double> approx_buf(static_cast<std::size_t>(len) / 2);
  std::vector<double> detail_buf(static_cast<std::size_t>(len) / 2);
  std::vector<double> prev(static_cast<std::size_t>(len));
  for (int bi = 0; bi < batch; ++bi) {
    const double* row = x.data().data() + static_cast<std::ptrdiff_t>(bi) * len;
    // Peel approximation levels down to the requested one.
    std::size_t cur = static_cast<std::size_t>(len);
    const double* src = row;
    for (int n = 1; n < level; ++n) {
      analysis_into(src, cur, approx_buf.data(), detail_buf.data());
      cur /= 2;
      std::memcpy(prev.data(), approx_buf.data(), sizeof(double) * cur);
      src = prev.data();
    }
    double* approx =
        y.data().data() + (static_cast<std::ptrdiff_t>(bi) * 2) * out_len;
    double* detail = approx + out_len;
    analysis_into(src, cur, approx, detail);
  }

  if (Tape* tape = Tape::joint({&x})) {
    Tensor xc = x, yc = y;
    tape->record(y, [xc, yc, tape, batch, len, out_len, level]() {
      if (!xc.tracked_on(tape)) return;
      std::vector<double> v(static_cast<std::size_t>(len));
      std::vector<double> zeros(static_cast<std::size_t>(len) / 2, 0.0);
      std::vector<double> next(static_cast<std::size_t>(len));
      for (int bi = 0; bi < batch; ++bi) {
        const double* ga =
            yc.grad().data() + (static_cast<std::ptrdiff_t>(bi) * 2) * out_len;
        const double* gd = ga + out_len;
        std::size_t cur = static_cast<std::size_t>(out_len);
        synthesis_into(ga, gd, cur, v.data());
        cur *= 2;
        for (int n = level - 1; n >= 1; --n) {
          synthesis_into(v.data(), zeros.data(), cur, next.data());
          cur *= 2;
          std::memcpy(v.data(), next.data(), sizeof(double) * cur);
        }
        double* dx = xc.grad().data() + static_cast<std::ptrdiff_t>(bi) * len;
        for (int t = 0; t < len; ++t) dx[t] += v[static_cast<std::size_t>(t)];
      }
    });
  }
  return y;
}

}  // namespace wadenet
