#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hafuse/ops.hpp"
#include "hafuse/params.hpp"

namespace hafuse::nn {

// Optional inspection hook: forward passes deposit named intermediate values
// (encoder features, attention statistics, fused maps) for tests and tooling.
template <typename S>
using Probe = std::map<std::string, Array<S>>;

struct GeneratorConfig {
    int scales = 3;            // S; number of encoder scales
    int base_channels = 16;    // channels at scale 1; doubles per scale
    int eb_kernel_a = 3;       // first conv of each extraction block
    int eb_kernel_b = 5;       // second conv of each extraction block
    double leaky_slope = 0.2;
    bool use_sampling = true;  // pool between scales / upsample in decoder
    bool use_skip = true;      // concat finer fused features in decoder
    bool use_afs = true;       // attention fusion; off = plain 0.5/0.5 average
    double afs_eps = 1e-8;     // clamp for the division by the global max
    bool afs_gmp_joint = false; // reduce the global max over channels too

    int channels_at(int k) const { return base_channels << (k - 1); }
    void validate() const;
};

// Attention fusion of one scale's feature pair:
//   mu    = (F_ir - F_vi) / clamp(repeat(global_max(F_ir - F_vi)))
//   sigma = (F_vi - F_ir) / clamp(repeat(global_max(F_vi - F_ir)))
//   f_ir  = mu .* F_ir + F_ir,  f_vi = sigma .* F_vi + F_vi
//   out   = leaky_relu(conv3x3(concat(f_ir, f_vi)))   (2c -> c channels)
// conv_w/conv_b are that scale's fuse parameters.
template <typename S>
ag::TensorRef<S> afs_fuse(ag::TensorRef<S> f_ir, ag::TensorRef<S> f_vi,
                          ag::TensorRef<S> conv_w, ag::TensorRef<S> conv_b,
                          const GeneratorConfig& cfg, Probe<S>* probe, int scale_tag);

// Multi-scale skip-connected encoder / fusion / decoder generator. Both
// encoder branches (infrared, visible) have their own parameters.
template <typename S>
class Generator {
public:
    Generator(GeneratorConfig cfg, uint64_t seed);

    const GeneratorConfig& config() const { return cfg_; }
    ParamSet<S>& params() { return params_; }
    const ParamSet<S>& params() const { return params_; }

    // branch is "ir" or "vi"; returns per-scale features, index k-1 at scale k.
    std::vector<ag::TensorRef<S>> encode(ag::Tape<S>& tape, const BoundParams<S>& bound,
                                         ag::TensorRef<S> image, const std::string& branch,
                                         Probe<S>* probe = nullptr) const;

    ag::TensorRef<S> decode(ag::Tape<S>& tape, const BoundParams<S>& bound,
                            const std::vector<ag::TensorRef<S>>& fused) const;

    ag::TensorRef<S> forward(ag::Tape<S>& tape, const BoundParams<S>& bound,
                             ag::TensorRef<S> ir, ag::TensorRef<S> vi,
                             Probe<S>* probe = nullptr) const;

private:
    GeneratorConfig cfg_;
    ParamSet<S> params_;
    void declare_shapes();
};

} // namespace hafuse::nn
