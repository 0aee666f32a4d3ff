#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hafuse/array.hpp"
#include "hafuse/ops.hpp"
#include "hafuse/rng.hpp"

namespace hafuse::gradcheck {

struct CheckResult {
    std::string name;
    int seeds = 0;
    double tol = 0;
    double worst_rel = 0;
    bool pass = true;
};

struct SuiteReport {
    std::vector<CheckResult> checks;
    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

struct SuiteOptions {
    int seeds_per_op = 20;
    int seeds_per_net = 20;
    double op_tol = 1e-4;
    double net_tol = 1e-3;
    double fd_step = 1e-5; // central-difference half step
};

// Draws one set of input tensors for a check; called once per seed.
using MakeInputs = std::function<std::vector<Array<double>>(Rng&)>;
// Assembles the scalar under test from mounted leaves (one per input tensor).
using BuildFn =
    std::function<ag::TensorRef<double>(ag::Tape<double>&, const std::vector<ag::TensorRef<double>>&)>;

// Compares reverse-mode gradients of the scalar against 64-bit central finite
// differences over every element of every input, across fixed derived seeds.
// Relative error is |a-n| / max(|a|+|n|, 1e-6).
CheckResult check_scalar_fn(const std::string& name, const MakeInputs& make, const BuildFn& build,
                            int seeds, double tol, double fd_step);

// The full verification suite: every differentiable op at toy shapes, then
// the generator and both discriminators end to end at reduced widths.
SuiteReport run_suite(const SuiteOptions& opts = {});

std::string format_report(const SuiteReport& report);

} // namespace hafuse::gradcheck
