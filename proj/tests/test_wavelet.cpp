#include "wadenet/wavelet.hpp"

#include <cmath>
#include <vector>

#include "doctest.h"
#include "wadenet/gradcheck.hpp"

using namespace wadenet;

namespace {

double energy(std::span<const double> v) {
  double e = 0.0;
  for (double x : v) e += x * x;
  return e;
}

}  // namespace

TEST_CASE("haar analysis of a constant signal has zero detail") {
  const auto pair = haar_analysis_step(std::vector<double>{1, 1, 1, 1});
  const double root2 = std::sqrt(2.0);
  REQUIRE(pair.approx.size() == 2);
  CHECK(pair.approx[0] == doctest::Approx(root2).epsilon(1e-15));
  CHECK(pair.approx[1] == doctest::Approx(root2).epsilon(1e-15));
  CHECK(pair.detail[0] == 0.0);
  CHECK(pair.detail[1] == 0.0);
}

TEST_CASE("haar analysis of an impulse splits evenly") {
  const auto pair = haar_analysis_step(std::vector<double>{1, 0, 0, 0});
  const double inv_root2 = 1.0 / std::sqrt(2.0);
  CHECK(pair.approx[0] == doctest::Approx(inv_root2));
  CHECK(pair.approx[1] == 0.0);
  CHECK(pair.detail[0] == doctest::Approx(inv_root2));
  CHECK(pair.detail[1] == 0.0);
}

TEST_CASE("haar analysis preserves energy") {
  Rng rng(5);
  std::vector<double> x(8);
  for (double& v : x) v = rng.uniform(-1.0, 1.0);
  const auto pair = haar_analysis_step(x);
  CHECK(std::fabs(energy(pair.approx) + energy(pair.detail) - energy(x)) <
        1e-12);
}

TEST_CASE("haar analysis rejects odd lengths") {
  CHECK_THROWS_AS(haar_analysis_step(std::vector<double>{1, 2, 3}), ShapeError);
}

TEST_CASE("haar synthesis inverts analysis") {
  const double root2 = std::sqrt(2.0);
  const auto x = haar_synthesis_step(std::vector<double>{root2, root2},
                                     std::vector<double>{0.0, 0.0});
  REQUIRE(x.size() == 4);
  for (double v : x) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));

  Rng rng(7);
  std::vector<double> signal(32);
  for (double& v : signal) v = rng.uniform(-2.0, 2.0);
  const auto pair = haar_analysis_step(signal);
  const auto back = haar_synthesis_step(pair.approx, pair.detail);
  for (std::size_t i = 0; i < signal.size(); ++i) {
    CHECK(std::fabs(back[i] - signal[i]) < 1e-12);
  }
}

TEST_CASE("haar synthesis of a single pair") {
  const auto x = haar_synthesis_step(std::vector<double>{0.0},
                                     std::vector<double>{std::sqrt(2.0)});
  REQUIRE(x.size() == 2);
  CHECK(x[0] == doctest::Approx(1.0));
  CHECK(x[1] == doctest::Approx(-1.0));
}

TEST_CASE("haar synthesis rejects mismatched lengths") {
  CHECK_THROWS_AS(haar_synthesis_step(std::vector<double>{1.0},
                                      std::vector<double>{1.0, 2.0}),
                  ShapeError);
}

TEST_CASE("pyramid level lengths halve at every level") {
  std::vector<double> x(5120, 0.5);
  const auto pyramid = build_pyramid(x, 4);
  REQUIRE(pyramid.levels.size() == 4);
  CHECK(pyramid.levels[0].approx.size() == 2560);
  CHECK(pyramid.levels[1].approx.size() == 1280);
  CHECK(pyramid.levels[2].approx.size() == 640);
  CHECK(pyramid.levels[3].approx.size() == 320);
  for (const auto& level : pyramid.levels) {
    CHECK(level.detail.size() == level.approx.size());
    for (double d : level.detail) CHECK(d == 0.0);  // constant signal
  }
}

TEST_CASE("pyramid rejects lengths not divisible by 2^levels") {
  std::vector<double> x(12, 1.0);
  CHECK_THROWS_AS(build_pyramid(x, 3), ShapeError);
}

TEST_CASE("pyramid reconstruction is exact to 1e-9") {
  Rng rng(11);
  std::vector<double> x(64);
  for (double& v : x) v = rng.uniform(-1.0, 1.0);
  const auto pyramid = build_pyramid(x, 3);
  const auto back = reconstruct(pyramid);
  REQUIRE(back.size() == x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(std::fabs(back[i] - x[i]) < 1e-9);
  }
}

TEST_CASE("pyramid satisfies the Parseval identity at every level") {
  Rng rng(13);
  std::vector<double> x(256);
  for (double& v : x) v = rng.uniform(-1.0, 1.0);
  const double total = energy(x);
  const auto pyramid = build_pyramid(x, 4);
  double detail_sum = 0.0;
  for (std::size_t n = 0; n < pyramid.levels.size(); ++n) {
    detail_sum += energy(pyramid.levels[n].detail);
    const double level_total = detail_sum + energy(pyramid.levels[n].approx);
    CHECK(std::fabs(level_total - total) / total < 1e-9);
  }
}

TEST_CASE("the single-step transform matrix is orthonormal") {
  for (std::size_t len = 2; len <= 16; len += 2) {
    // Build T row by row from unit vectors: rows are [approx; detail].
    std::vector<std::vector<double>> rows(len, std::vector<double>(len));
    for (std::size_t j = 0; j < len; ++j) {
      std::vector<double> e(len, 0.0);
      e[j] = 1.0;
      const auto pair = haar_analysis_step(e);
      for (std::size_t i = 0; i < len / 2; ++i) {
        rows[i][j] = pair.approx[i];
        rows[len / 2 + i][j] = pair.detail[i];
      }
    }
    for (std::size_t i = 0; i < len; ++i) {
      for (std::size_t j = 0; j < len; ++j) {
        double dot = 0.0;
        for (std::size_t k = 0; k < len; ++k) dot += rows[i][k] * rows[j][k];
        CHECK(std::fabs(dot - (i == j ? 1.0 : 0.0)) < 1e-12);
      }
    }
  }
}

TEST_CASE("dwt_level emits the expected shape") {
  Rng rng(17);
  Tensor x = random_tensor({1, 1, 5120}, rng);
  Tensor y = dwt_level(x, 3);
  CHECK(y.shape() == std::vector<int>{1, 2, 640});
}

TEST_CASE("dwt_level channels match build_pyramid") {
  Rng rng(19);
  Tensor x = random_tensor({2, 1, 64}, rng);
  const int level = 3;
  Tensor y = dwt_level(x, level);
  for (int bi = 0; bi < 2; ++bi) {
    std::vector<double> row(x.data().begin() + bi * 64,
                            x.data().begin() + (bi + 1) * 64);
    const auto pyramid = build_pyramid(row, level);
    const auto& top = pyramid.levels.back();
    const int out_len = 64 >> level;
    for (int t = 0; t < out_len; ++t) {
      CHECK(y.data()[(static_cast<std::size_t>(bi) * 2) * out_len + t] ==
            doctest::Approx(top.approx[static_cast<std::size_t>(t)]).epsilon(1e-14));
      CHECK(y.data()[(static_cast<std::size_t>(bi) * 2 + 1) * out_len + t] ==
            doctest::Approx(top.detail[static_cast<std::size_t>(t)]).epsilon(1e-14));
    }
  }
}

TEST_CASE("dwt_level is linear") {
  Rng rng(23);
  Tensor x = random_tensor({1, 1, 32}, rng);
  Tensor y = random_tensor({1, 1, 32}, rng);
  const double a = 1.7, b = -0.4;
  Tensor combined({1, 1, 32});
  for (std::size_t i = 0; i < 32; ++i) {
    combined.data()[i] = a * x.data()[i] + b * y.data()[i];
  }
  Tensor lhs = dwt_level(combined, 2);
  Tensor dx = dwt_level(x, 2);
  Tensor dy = dwt_level(y, 2);
  for (std::size_t i = 0; i < lhs.numel(); ++i) {
    CHECK(std::fabs(lhs.data()[i] - (a * dx.data()[i] + b * dy.data()[i])) <
          1e-12);
  }
}

TEST_CASE("dwt_level gradient matches finite differences") {
  Rng rng(29);
  std::vector<Tensor> leaves = {random_tensor({1, 1, 16}, rng)};
  auto loss = [&]() { return sum(dwt_level(leaves[0], 1)); };
  CHECK(finite_diff_max_rel_err(leaves, loss) < 1e-6);
}

TEST_CASE("dwt_level backward is the adjoint") {
  Rng rng(31);
  Tensor u = random_tensor({1, 1, 64}, rng);
  std::vector<double> v(2 * 8);
  for (double& w : v) w = rng.uniform(-1.0, 1.0);

  Tensor fwd = dwt_level(u, 3);
  double forward_dot = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    forward_dot += fwd.data()[i] * v[i];
  }

  Tape tape;
  tape.watch(u);
  Tensor loss = weighted_sum(dwt_level(u, 3), v);
  tape.backward(loss);
  double adjoint_dot = 0.0;
  for (std::size_t i = 0; i < u.numel(); ++i) {
    adjoint_dot += u.data()[i] * u.grad()[i];
  }
  CHECK(std::fabs(forward_dot - adjoint_dot) < 1e-12);
}

TEST_CASE("dwt_level rejects a non-divisible length") {
  Tensor x({1, 1, 12});
  CHECK_THROWS_AS(dwt_level(x, 3), ShapeError);
}
