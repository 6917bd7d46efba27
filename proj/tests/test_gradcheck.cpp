#include "wadenet/gradcheck.hpp"

#include <set>

#include "doctest.h"

using namespace wadenet;

TEST_CASE("every registered op passes its finite-difference check") {
  for (const OpCheck& result : run_gradcheck_all()) {
    INFO("op: " << result.op << ", max rel err " << result.max_rel_err);
    CHECK(result.pass);
  }
}

TEST_CASE("the registry lists every op exactly once") {
  const auto names = gradcheck_op_names();
  const std::set<std::string> unique(names.begin(), names.end());
  CHECK(unique.size() == names.size());
  CHECK(unique.count("conv1d") == 1);
  CHECK(unique.count("batchnorm1d") == 1);
  CHECK(unique.count("relu") == 1);
  CHECK(unique.count("linear") == 1);
  CHECK(unique.count("dropout") == 1);
  CHECK(unique.count("concat_channels") == 1);
  CHECK(unique.count("flatten") == 1);
  CHECK(unique.count("add") == 1);
  CHECK(unique.count("softmax_cross_entropy") == 1);
  CHECK(unique.count("dwt_level") == 1);
  CHECK(unique.count("wadenet_end_to_end") == 1);
}

TEST_CASE("a corrupted backward is caught and named") {
  bool conv_failed = false;
  for (const OpCheck& result : run_gradcheck_all("conv1d")) {
    if (result.op == "conv1d") {
      conv_failed = !result.pass;
    } else {
      CHECK(result.pass);
    }
  }
  CHECK(conv_failed);
}
