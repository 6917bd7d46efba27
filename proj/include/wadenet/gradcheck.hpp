#pragma once

#include <functional>
#include <string>
#include <vector>

#include "wadenet/tensor.hpp"

namespace wadenet {

// Central finite-difference step and the acceptance tolerance for the
// relative error of every differentiable operation.
inline constexpr double kGradCheckStep = 1e-6;
inline constexpr double kGradCheckTol = 1e-4;

// Uniform(-1, 1) tensor for test fixtures.
Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0,
                     double hi = 1.0);

// Compares the tape gradients of `leaves` under `make_loss` against central
// finite differences and returns the worst relative error, computed as
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-3). The floor guards
// against amplifying float64 round-off on near-zero gradients.
//
// make_loss() must be deterministic and re-runnable: it is called once on a
// tape to collect analytic gradients, then twice per perturbed element with
// the leaves untracked. `corrupt_bump`, when nonzero, is added to every
// analytic gradient first (negative-control fixture).
double finite_diff_max_rel_err(std::vector<Tensor>& leaves,
                               const std::function<Tensor()>& make_loss,
                               double step = kGradCheckStep,
                               double corrupt_bump = 0.0);

struct OpCheck {
  std::string op;
  double max_rel_err = 0.0;
  bool pass = false;
};

// Names of every registered differentiable operation, in report order.
std::vector<std::string> gradcheck_op_names();

// Runs one operation's finite-difference check; `corrupt_op` names the
// operation whose analytic gradients are deliberately corrupted.
OpCheck run_gradcheck_op(const std::string& name,
                         const std::string& corrupt_op = "");

// Runs the whole suite, one entry per registered operation.
std::vector<OpCheck> run_gradcheck_all(const std::string& corrupt_op = "");

}  // namespace wadenet
