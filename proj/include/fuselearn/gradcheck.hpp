#pragma once

#include <string>
#include <vector>

#include "fuselearn/autodiff.hpp"

// Finite-difference verification suite: every layer primitive on randomized
// shapes, plus the full fusion graph with the class-weighted loss on a small
// input. Runs in double precision (central differences are unreliable in
// float).

namespace fuselearn::check {

struct OpResult {
    std::string op;
    double max_rel_err = 0;
    bool pass = false;
};

/// Randomized per-op checks plus the full-model check, `seeds` rounds each.
/// Tolerance is the max relative error against central differences.
std::vector<OpResult> run_gradcheck_suite(int seeds, double eps = 1e-5, double tol = 1e-4);

/// Single full fusion forward + weighted cross-entropy on an 8x8 toy input;
/// returns the max relative error over every parameter tensor. Checked at
/// {eps, 10*eps} per coordinate: deep parameters can carry gradients near
/// 1e-8 where one small step leaves the central difference dominated by f64
/// roundoff, while only the larger step risks crossing a ReLU kink.
double full_model_gradcheck(const std::string& backbone_style, uint64_t seed, double eps = 1e-5);

}  // namespace fuselearn::check
