#include "hafuse/discriminator.hpp"

#include <algorithm>

namespace hafuse::nn {

using ag::TensorRef;

void SalientConfig::validate() const {
    if (attn_scales < 1) throw ParameterError("salient: attn_scales must be >= 1");
    if (ca_kernel < 1 || ca_kernel % 2 == 0)
        throw ParameterError("salient: ca_kernel must be odd and positive");
    for (int c : conv_channels)
        if (c < 1) throw ParameterError("salient: conv channels must be positive");
    if (fc_hidden < 1) throw ParameterError("salient: fc_hidden must be >= 1");
    if (input_side < 16 || input_side % 16 != 0)
        throw ParameterError("salient: input_side must be a positive multiple of 16, got " +
                             std::to_string(input_side));
    const int div = 1 << (attn_scales - 1);
    if (input_side % div != 0)
        throw ParameterError("salient: input_side must be divisible by the coarsest "
                             "attention pool " + std::to_string(div));
}

void DetailedConfig::validate() const {
    if (attn_scales < 1) throw ParameterError("detailed: attn_scales must be >= 1");
    if (sa_reduction < 1) throw ParameterError("detailed: sa_reduction must be >= 1");
    if (layers < 1 || layers > 5) throw ParameterError("detailed: layers must be in 1..5");
    if (patch_kernel < 1) throw ParameterError("detailed: patch_kernel must be >= 1");
    for (int i = 0; i < layers; ++i) {
        if (patch_channels[static_cast<size_t>(i)] < 1 || patch_strides[static_cast<size_t>(i)] < 1)
            throw ParameterError("detailed: head channels and strides must be positive");
    }
    if (patch_channels[static_cast<size_t>(layers - 1)] != 1)
        throw ParameterError("detailed: final head layer must emit 1 channel");
    for (int k = 1; k <= attn_scales; ++k) {
        if (lift_channels(k) % sa_reduction != 0)
            throw ParameterError("detailed: attention channels " + std::to_string(lift_channels(k)) +
                                 " not divisible by sa_reduction " + std::to_string(sa_reduction));
    }
}

std::vector<int> DetailedConfig::patch_sizes(int side) const {
    std::vector<int> sizes;
    int n = side;
    for (int i = 0; i < layers; ++i) {
        const int num = n + 2 - patch_kernel; // padding 1 on both sides
        if (num < 0)
            throw GeometryError("detailed: head layer " + std::to_string(i + 1) +
                                " collapses below 1x1 at input side " + std::to_string(side));
        n = num / patch_strides[static_cast<size_t>(i)] + 1;
        sizes.push_back(n);
    }
    return sizes;
}

std::pair<int, int> DetailedConfig::receptive_field(int cell, int side) const {
    // Walk the interval of contributing coordinates back through the layers.
    int lo = cell, hi = cell;
    std::vector<int> sizes = patch_sizes(side);
    for (int i = layers - 1; i >= 0; --i) {
        const int s = patch_strides[static_cast<size_t>(i)];
        const int in_side = i == 0 ? side : sizes[static_cast<size_t>(i - 1)];
        lo = lo * s - 1;                       // padding 1
        hi = hi * s - 1 + patch_kernel - 1;
        lo = std::max(lo, 0);
        hi = std::min(hi, in_side - 1);
    }
    return {lo, hi};
}

namespace {

// Shared declaration helper for conv weight+bias pairs.
template <typename S>
void declare_conv(ParamSet<S>& p, const std::string& key, int oc, int ic, int kh, int kw) {
    p.tensors.emplace(key + ".weight", Array<S>(Shape{oc, ic, kh, kw}));
    p.tensors.emplace(key + ".bias", Array<S>(Shape{1, oc, 1, 1}));
}

void check_attention_side(const char* who, const Shape& s, int attn_scales) {
    const int64_t div = int64_t(1) << (attn_scales - 1);
    if (s.c != 1) throw DimensionError(std::string(who) + ": input must be single-channel");
    if (s.h % div != 0 || s.w % div != 0)
        throw GeometryError(std::string(who) + ": spatial side of " + to_string(s) +
                            " must be divisible by " + std::to_string(div));
}

} // namespace

template <typename S>
SalientDiscriminator<S>::SalientDiscriminator(SalientConfig cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    if (cfg_.use_attention) {
        for (int k = 1; k <= cfg_.attn_scales; ++k) {
            const std::string sk = "attn.s" + std::to_string(k);
            declare_conv(params_, sk + ".lift", cfg_.lift_channels(k), 1, 3, 3);
            params_.tensors.emplace(sk + ".ca.weight", Array<S>(Shape{1, 1, 1, cfg_.ca_kernel}));
        }
    }
    int prev = 1 + (cfg_.use_attention ? cfg_.attn_scales : 0);
    for (int i = 0; i < 4; ++i) {
        const int ch = cfg_.conv_channels[static_cast<size_t>(i)];
        const std::string st = "head.stage" + std::to_string(i + 1);
        declare_conv(params_, st + ".conv_a", ch, prev, 3, 3);
        declare_conv(params_, st + ".conv_b", ch, ch, 3, 3);
        prev = ch;
    }
    params_.tensors.emplace("head.fc1.weight",
                            Array<S>(Shape{1, 1, cfg_.fc_hidden, cfg_.flatten_count()}));
    params_.tensors.emplace("head.fc1.bias", Array<S>(Shape{1, cfg_.fc_hidden, 1, 1}));
    params_.tensors.emplace("head.fc2.weight", Array<S>(Shape{1, 1, 1, cfg_.fc_hidden}));
    params_.tensors.emplace("head.fc2.bias", Array<S>(Shape{1, 1, 1, 1}));
    init_fan_in_uniform(params_, seed);
}

template <typename S>
TensorRef<S> SalientDiscriminator<S>::attention(ag::Tape<S>& tape, const BoundParams<S>& bound,
                                                TensorRef<S> image, Probe<S>* probe) const {
    (void)tape;
    check_attention_side("ms_ca", image.shape(), cfg_.attn_scales);
    std::vector<TensorRef<S>> maps;
    for (int k = 1; k <= cfg_.attn_scales; ++k) {
        const std::string sk = "attn.s" + std::to_string(k);
        const int factor = 1 << (k - 1);
        auto x = image;
        if (factor > 1) x = ag::pool2d(x, ag::PoolKind::avg, factor, factor);
        x = ag::leaky_relu(
            ag::conv2d(x, bound.at(sk + ".lift.weight"), bound.at(sk + ".lift.bias"), 1, 1),
            cfg_.leaky_slope);
        auto weights = ag::sigmoid(
            ag::conv1d_channels(ag::global_pool(x, ag::PoolKind::avg), bound.at(sk + ".ca.weight")));
        if (probe) probe->emplace("ca.weights" + std::to_string(k), weights.to_array());
        x = ag::mul(x, weights); // broadcast (b,c,1,1) over the plane
        if (factor > 1) x = ag::upsample_nearest(x, factor);
        maps.push_back(ag::channel_max_map(x));
    }
    return ag::concat_channels<S>(maps);
}

template <typename S>
TensorRef<S> SalientDiscriminator<S>::forward(ag::Tape<S>& tape, const BoundParams<S>& bound,
                                              TensorRef<S> image, Probe<S>* probe) const {
    const Shape s = image.shape();
    if (s.c != 1) throw DimensionError("d_salient: input must be single-channel");
    if (s.h != cfg_.input_side || s.w != cfg_.input_side)
        throw GeometryError("d_salient: built for side " + std::to_string(cfg_.input_side) +
                            ", got " + to_string(s));
    auto x = image;
    if (cfg_.use_attention) {
        auto maps = attention(tape, bound, image, probe);
        x = ag::concat_channels<S>({image, maps});
    }
    for (int i = 1; i <= 4; ++i) {
        const std::string st = "head.stage" + std::to_string(i);
        x = ag::leaky_relu(
            ag::conv2d(x, bound.at(st + ".conv_a.weight"), bound.at(st + ".conv_a.bias"), 1, 1),
            cfg_.leaky_slope);
        x = ag::leaky_relu(
            ag::conv2d(x, bound.at(st + ".conv_b.weight"), bound.at(st + ".conv_b.bias"), 2, 1),
            cfg_.leaky_slope);
    }
    x = ag::leaky_relu(ag::dense(x, bound.at("head.fc1.weight"), bound.at("head.fc1.bias")),
                       cfg_.leaky_slope);
    return ag::sigmoid(ag::dense(x, bound.at("head.fc2.weight"), bound.at("head.fc2.bias")));
}

template <typename S>
DetailedDiscriminator<S>::DetailedDiscriminator(DetailedConfig cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    // Heterogeneity assertion: this head must stay patch-shaped (spatial
    // extent > 1) on any input of at least 32x32.
    if (cfg_.patch_sizes(32).back() <= 1)
        throw ParameterError("detailed: head must emit a patch matrix larger than 1x1 at 32x32");
    if (cfg_.use_attention) {
        for (int k = 1; k <= cfg_.attn_scales; ++k) {
            const std::string sk = "attn.s" + std::to_string(k);
            const int c = cfg_.lift_channels(k);
            declare_conv(params_, sk + ".lift", c, 1, 3, 3);
            declare_conv(params_, sk + ".sa_a", c / cfg_.sa_reduction, c, 1, 1);
            declare_conv(params_, sk + ".sa_b", c, c / cfg_.sa_reduction, 1, 1);
        }
    }
    int prev = 1 + (cfg_.use_attention ? cfg_.attn_scales : 0);
    for (int i = 0; i < cfg_.layers; ++i) {
        declare_conv(params_, "head.layer" + std::to_string(i + 1),
                     cfg_.patch_channels[static_cast<size_t>(i)], prev, cfg_.patch_kernel,
                     cfg_.patch_kernel);
        prev = cfg_.patch_channels[static_cast<size_t>(i)];
    }
    init_fan_in_uniform(params_, seed);
}

template <typename S>
TensorRef<S> DetailedDiscriminator<S>::attention(ag::Tape<S>& tape, const BoundParams<S>& bound,
                                                 TensorRef<S> image, Probe<S>* probe) const {
    (void)tape;
    check_attention_side("ms_sa", image.shape(), cfg_.attn_scales);
    std::vector<TensorRef<S>> maps;
    for (int k = 1; k <= cfg_.attn_scales; ++k) {
        const std::string sk = "attn.s" + std::to_string(k);
        const int factor = 1 << (k - 1);
        auto x = image;
        if (factor > 1) x = ag::pool2d(x, ag::PoolKind::avg, factor, factor);
        x = ag::leaky_relu(
            ag::conv2d(x, bound.at(sk + ".lift.weight"), bound.at(sk + ".lift.bias"), 1, 1),
            cfg_.leaky_slope);
        auto squeezed = ag::leaky_relu(
            ag::conv2d(x, bound.at(sk + ".sa_a.weight"), bound.at(sk + ".sa_a.bias"), 1, 0),
            cfg_.leaky_slope);
        auto weights = ag::sigmoid(
            ag::conv2d(squeezed, bound.at(sk + ".sa_b.weight"), bound.at(sk + ".sa_b.bias"), 1, 0));
        if (probe) probe->emplace("sa.weights" + std::to_string(k), weights.to_array());
        x = ag::mul(x, weights);
        if (factor > 1) x = ag::upsample_nearest(x, factor);
        maps.push_back(ag::channel_max_map(x));
    }
    return ag::concat_channels<S>(maps);
}

template <typename S>
PatchOutput<S> DetailedDiscriminator<S>::forward(ag::Tape<S>& tape, const BoundParams<S>& bound,
                                                 TensorRef<S> image, Probe<S>* probe) const {
    const Shape s = image.shape();
    if (s.c != 1) throw DimensionError("d_detailed: input must be single-channel");
    auto x = image;
    if (cfg_.use_attention) {
        auto maps = attention(tape, bound, image, probe);
        x = ag::concat_channels<S>({image, maps});
    }
    for (int i = 1; i <= cfg_.layers; ++i) {
        const std::string ly = "head.layer" + std::to_string(i);
        x = ag::conv2d(x, bound.at(ly + ".weight"), bound.at(ly + ".bias"),
                       cfg_.patch_strides[static_cast<size_t>(i - 1)], 1);
        if (i < cfg_.layers)
            x = ag::leaky_relu(x, cfg_.leaky_slope);
        else
            x = ag::sigmoid(x);
    }
    return PatchOutput<S>{x, ag::global_pool(x, ag::PoolKind::avg)};
}

template class SalientDiscriminator<float>;
template class SalientDiscriminator<double>;
template class DetailedDiscriminator<float>;
template class DetailedDiscriminator<double>;

} // namespace hafuse::nn
