#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hep/tensor.hpp"

namespace hep {

// Central-finite-difference comparison for analytic gradients.
//
// `forward` rebuilds the scalar output from scratch given candidate values
// for each input block, so the check never touches the reverse pass it
// verifies. Relative error per coordinate is |a - n| / max(1, |a|, |n|);
// inputs are expected to be unit-scale.
struct FiniteDiffReport {
  double max_rel_err = 0.0;
  int64_t input_block = -1;
  int64_t coordinate = -1;
};

FiniteDiffReport check_gradients(
    const std::function<double(const std::vector<std::vector<double>>&)>& forward,
    std::vector<std::vector<double>> inputs,
    const std::vector<std::vector<double>>& analytic, double h = 1e-6);

// Runs the full gradient suite (per-op checks plus an end-to-end
// backbone-to-loss path) and returns the worst relative error observed.
// Used by both the test suite and the CLI self-diagnostic.
struct GradSuiteResult {
  double max_per_op_rel_err = 0.0;
  double max_end_to_end_rel_err = 0.0;
  int64_t checks_run = 0;
};

GradSuiteResult run_gradient_suite(uint64_t seed, int64_t instances_per_op = 20);

}  // namespace hep
