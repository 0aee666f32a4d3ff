#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hafuse/generator.hpp" // Probe
#include "hafuse/ops.hpp"
#include "hafuse/params.hpp"

namespace hafuse::nn {

// The two adversaries are deliberately heterogeneous:
//  - the salient discriminator scores whole images with one scalar (dense
//    head) and attends to bright-region statistics via multi-scale channel
//    attention;
//  - the detailed discriminator is Markovian: conv-only, emitting a patch
//    matrix of local probabilities whose mean is the image score, with
//    multi-scale spatial attention on its input.

struct SalientConfig {
    int attn_scales = 3;
    int ca_kernel = 3; // 1-D kernel over channels in the attention branch
    std::array<int, 4> conv_channels{16, 32, 64, 128};
    int fc_hidden = 128;
    double leaky_slope = 0.2;
    int input_side = 128;      // fixed at construction; sizes the dense head
    bool use_attention = true;

    int lift_channels(int k) const { return 8 << (k - 1); }
    int flatten_count() const {
        const int side = input_side / 16; // four stride-2 stages
        return conv_channels[3] * side * side;
    }
    void validate() const;
};

struct DetailedConfig {
    int attn_scales = 3;
    int sa_reduction = 4; // channel shrink factor inside spatial attention
    std::array<int, 5> patch_channels{16, 32, 64, 128, 1};
    std::array<int, 5> patch_strides{2, 2, 2, 1, 1};
    int patch_kernel = 4;
    double leaky_slope = 0.2;
    bool use_attention = true;
    int layers = 5; // allows shallower heads for receptive-field studies

    int lift_channels(int k) const { return 8 << (k - 1); }
    void validate() const;
    // Spatial side after each head layer for a given input side; raises
    // GeometryError if any layer collapses below 1.
    std::vector<int> patch_sizes(int side) const;
    // Input-pixel interval [lo, hi] feeding one patch cell coordinate.
    std::pair<int, int> receptive_field(int cell, int side) const;
};

template <typename S>
class SalientDiscriminator {
public:
    SalientDiscriminator(SalientConfig cfg, uint64_t seed);

    const SalientConfig& config() const { return cfg_; }
    ParamSet<S>& params() { return params_; }
    const ParamSet<S>& params() const { return params_; }

    // Multi-scale channel-attention maps, shape (b, attn_scales, h, w).
    ag::TensorRef<S> attention(ag::Tape<S>& tape, const BoundParams<S>& bound,
                               ag::TensorRef<S> image, Probe<S>* probe = nullptr) const;

    // Whole-image probability, shape (b,1,1,1), values in (0,1).
    ag::TensorRef<S> forward(ag::Tape<S>& tape, const BoundParams<S>& bound,
                             ag::TensorRef<S> image, Probe<S>* probe = nullptr) const;

private:
    SalientConfig cfg_;
    ParamSet<S> params_;
};

template <typename S>
struct PatchOutput {
    ag::TensorRef<S> patches; // (b,1,ph,pw) local probabilities
    ag::TensorRef<S> prob;    // (b,1,1,1) spatial mean of the matrix
};

template <typename S>
class DetailedDiscriminator {
public:
    DetailedDiscriminator(DetailedConfig cfg, uint64_t seed);

    const DetailedConfig& config() const { return cfg_; }
    ParamSet<S>& params() { return params_; }
    const ParamSet<S>& params() const { return params_; }

    // Multi-scale spatial-attention maps, shape (b, attn_scales, h, w).
    ag::TensorRef<S> attention(ag::Tape<S>& tape, const BoundParams<S>& bound,
                               ag::TensorRef<S> image, Probe<S>* probe = nullptr) const;

    PatchOutput<S> forward(ag::Tape<S>& tape, const BoundParams<S>& bound,
                           ag::TensorRef<S> image, Probe<S>* probe = nullptr) const;

private:
    DetailedConfig cfg_;
    ParamSet<S> params_;
};

} // namespace hafuse::nn
