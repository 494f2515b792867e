#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "spgan/tensor.hpp"

namespace spgan {

// Max over every input coordinate of |analytic - central_fd| / max(1e-8, |analytic| + |central_fd|).
// f must be scalar-valued and is re-evaluated (without recording) for every perturbation.
template <typename T>
double grad_check(const std::function<BasicTensor<T>()>& f, std::vector<BasicTensor<T>> inputs, double eps);

struct GradCheckResult {
    std::string op;
    int trials = 0;
    double max_rel_error = 0.0;
    bool passed = false;
};

// Names accepted by run_gradcheck besides "all".
std::vector<std::string> gradcheck_ops();

// Randomized small-shape trials (<= 2x4x8x8) in double precision for one op or "all".
// Throws UsageError for an unknown scope.
std::vector<GradCheckResult> run_gradcheck(const std::string& scope, double tol, int trials = 20,
                                           uint64_t seed = 1234, double eps = 1e-5);

}  // namespace spgan
