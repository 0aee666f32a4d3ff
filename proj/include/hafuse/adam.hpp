#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "hafuse/params.hpp"

namespace hafuse::nn {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    void validate() const {
        if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(eps > 0))
            throw ParameterError("adam: betas must be in [0,1) and eps positive");
    }
};

// First/second moment estimates per parameter plus the shared step counter.
template <typename S>
struct AdamState {
    std::map<std::string, std::vector<S>> m, v;
    int64_t step = 0;
};

// Standard bias-corrected Adam update:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
// Per-element arithmetic runs in double regardless of the storage type.
template <typename S>
void adam_step(ParamSet<S>& params, const std::map<std::string, std::vector<S>>& grads,
               AdamState<S>& state, double lr, const AdamConfig& cfg) {
    cfg.validate();
    if (!(lr > 0)) throw ParameterError("adam: lr must be positive");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (auto& [key, arr] : params.tensors) {
        auto git = grads.find(key);
        if (git == grads.end()) throw ContractError("adam_step: missing gradient for " + key);
        const auto& g = git->second;
        if (g.size() != arr.data.size())
            throw DimensionError("adam_step: gradient size mismatch for " + key);
        auto& m = state.m[key];
        auto& v = state.v[key];
        if (m.empty()) m.assign(arr.data.size(), S(0));
        if (v.empty()) v.assign(arr.data.size(), S(0));
        for (size_t i = 0; i < arr.data.size(); ++i) {
            const double gi = static_cast<double>(g[i]);
            const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * gi;
            const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * gi * gi;
            m[i] = static_cast<S>(mi);
            v[i] = static_cast<S>(vi);
            const double update = lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps);
            arr.data[i] = static_cast<S>(static_cast<double>(arr.data[i]) - update);
        }
    }
}

} // namespace hafuse::nn
