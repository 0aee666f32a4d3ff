#include "hafuse/params.hpp"

#include <cmath>

#include "hafuse/rng.hpp"

namespace hafuse::nn {

template <typename S>
void init_fan_in_uniform(ParamSet<S>& params, uint64_t seed) {
    Rng rng(seed);
    for (auto& [key, arr] : params.tensors) {
        const bool is_bias = key.size() >= 5 && key.compare(key.size() - 5, 5, ".bias") == 0;
        if (is_bias) {
            std::fill(arr.data.begin(), arr.data.end(), S(0));
            continue;
        }
        const Shape& s = arr.shape;
        const bool flat = (s.b == 1 && s.c == 1);
        const int64_t fan_in = flat ? s.w : s.c * s.h * s.w;
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (auto& v : arr.data) v = static_cast<S>(rng.uniform(-bound, bound));
    }
}

template <typename S>
BoundParams<S> bind_params(ag::Tape<S>& tape, const ParamSet<S>& params, bool requires_grad) {
    BoundParams<S> out;
    for (const auto& [key, arr] : params.tensors)
        out.refs.emplace(key, tape.leaf(arr, requires_grad));
    return out;
}

template <typename S>
std::map<std::string, std::vector<S>> collect_grads(const BoundParams<S>& bound) {
    std::map<std::string, std::vector<S>> out;
    for (const auto& [key, ref] : bound.refs) {
        const auto& g = ref.grad();
        if (g.empty())
            out.emplace(key, std::vector<S>(ref.value().size(), S(0)));
        else
            out.emplace(key, g);
    }
    return out;
}

template void init_fan_in_uniform<float>(ParamSet<float>&, uint64_t);
template void init_fan_in_uniform<double>(ParamSet<double>&, uint64_t);
template BoundParams<float> bind_params<float>(ag::Tape<float>&, const ParamSet<float>&, bool);
template BoundParams<double> bind_params<double>(ag::Tape<double>&, const ParamSet<double>&, bool);
template std::map<std::string, std::vector<float>> collect_grads<float>(const BoundParams<float>&);
template std::map<std::string, std::vector<double>> collect_grads<double>(const BoundParams<double>&);

} // namespace hafuse::nn
