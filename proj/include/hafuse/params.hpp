#pragma once

#include <map>
#include <string>
#include <vector>

#include "hafuse/array.hpp"
#include "hafuse/tape.hpp"

namespace hafuse::nn {

// Named parameter collection. std::map keeps iteration in lexicographic key
// order, which is the canonical order for initialization, checkpoint payload
// layout and optimizer traversal.
template <typename S>
struct ParamSet {
    std::map<std::string, Array<S>> tensors;

    int64_t total_count() const {
        int64_t n = 0;
        for (const auto& [k, a] : tensors) n += a.count();
        return n;
    }
    Array<S>& at(const std::string& key) {
        auto it = tensors.find(key);
        if (it == tensors.end()) throw ContractError("ParamSet: unknown parameter " + key);
        return it->second;
    }
    const Array<S>& at(const std::string& key) const {
        auto it = tensors.find(key);
        if (it == tensors.end()) throw ContractError("ParamSet: unknown parameter " + key);
        return it->second;
    }

    template <typename T>
    ParamSet<T> cast() const {
        ParamSet<T> out;
        for (const auto& [k, a] : tensors) out.tensors.emplace(k, a.template cast<T>());
        return out;
    }
};

// Fills declared parameter shapes in lexicographic key order from a single
// seeded stream: keys ending in ".bias" get zeros, all other tensors get a
// fan-in scaled uniform draw U(-sqrt(6/fan_in), +sqrt(6/fan_in)). fan_in is
// c*h*w for convolution kernels (oc,ic,kh,kw) and w for the flat (1,1,m,n)
// dense / (1,1,1,k) channel-kernel layouts.
template <typename S>
void init_fan_in_uniform(ParamSet<S>& params, uint64_t seed);

// Mounted view of a ParamSet on a tape. requires_grad applies to every
// parameter leaf, which is how sub-network gradient isolation is enforced.
template <typename S>
struct BoundParams {
    std::map<std::string, ag::TensorRef<S>> refs;

    ag::TensorRef<S> at(const std::string& key) const {
        auto it = refs.find(key);
        if (it == refs.end()) throw ContractError("BoundParams: unknown parameter " + key);
        return it->second;
    }
};

template <typename S>
BoundParams<S> bind_params(ag::Tape<S>& tape, const ParamSet<S>& params, bool requires_grad);

// Reads back the gradients of bound parameters after backward. Parameters the
// walk never reached yield zero-filled entries.
template <typename S>
std::map<std::string, std::vector<S>> collect_grads(const BoundParams<S>& bound);

} // namespace hafuse::nn
