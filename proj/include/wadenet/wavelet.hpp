#pragma once

#include <span>
#include <vector>

#include "wadenet/tensor.hpp"

namespace wadenet {

// One Haar analysis step with orthonormal (1/sqrt(2)) normalization:
//   approx[i] = (x[2i] + x[2i+1]) / sqrt(2)
//   detail[i] = (x[2i] - x[2i+1]) / sqrt(2)
// The input length must be even; no implicit padding.
struct HaarPair {
  std::vector<double> approx;
  std::vector<double> detail;
};
HaarPair haar_analysis_step(std::span<const double> x);

// Exact inverse of haar_analysis_step.
std::vector<double> haar_synthesis_step(std::span<const double> approx,
                                        std::span<const double> detail);

// N levels of Haar decomposition. Level n is computed from level n-1's
// approximation; level n vectors have length source_length / 2^n.
struct WaveletPyramid {
  struct Level {
    std::vector<double> approx;
    std::vector<double> detail;
  };
  std::vector<Level> levels;
  std::size_t source_length = 0;
};
WaveletPyramid build_pyramid(std::span<const double> x, int levels);

// Inverts a full pyramid back to the source signal.
std::vector<double> reconstruct(const WaveletPyramid& pyramid);

// Level-`level` coefficients of each row of x, registered on the tape when x
// is tracked. x: (B, 1, L) -> (B, 2, L / 2^level) with channel 0 the
// approximation and channel 1 the detail. The backward pass applies the
// synthesis step level times to the cotangent (the transform is linear and
// orthonormal, so its adjoint is its inverse).
Tensor dwt_level(const Tensor& x, int level);

}  // namespace wadenet
