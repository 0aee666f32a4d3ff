#include "hafuse/generator.hpp"

namespace hafuse::nn {

using ag::TensorRef;

void GeneratorConfig::validate() const {
    if (scales < 2) throw ParameterError("generator: scales must be >= 2");
    if (base_channels < 1) throw ParameterError("generator: base_channels must be >= 1");
    if (eb_kernel_a < 1 || eb_kernel_a % 2 == 0 || eb_kernel_b < 1 || eb_kernel_b % 2 == 0)
        throw ParameterError("generator: extraction-block kernels must be odd and positive");
    if (!(afs_eps > 0)) throw ParameterError("generator: afs_eps must be positive");
}

template <typename S>
ag::TensorRef<S> afs_fuse(TensorRef<S> f_ir, TensorRef<S> f_vi, TensorRef<S> conv_w,
                          TensorRef<S> conv_b, const GeneratorConfig& cfg, Probe<S>* probe,
                          int scale_tag) {
    if (f_ir.shape() != f_vi.shape())
        throw DimensionError("afs_fuse: feature shapes differ: " + to_string(f_ir.shape()) +
                             " vs " + to_string(f_vi.shape()));
    auto attention = [&](TensorRef<S> a, TensorRef<S> b) {
        auto diff = ag::sub(a, b);
        auto peak = ag::global_pool(diff, ag::PoolKind::max);       // (b,c,1,1)
        if (cfg.afs_gmp_joint) peak = ag::channel_max_map(peak);    // (b,1,1,1)
        return ag::div_eps(diff, peak, cfg.afs_eps);
    };
    auto mu = attention(f_ir, f_vi);
    auto sigma = attention(f_vi, f_ir);
    auto a_ir = ag::add(ag::mul(mu, f_ir), f_ir);
    auto a_vi = ag::add(ag::mul(sigma, f_vi), f_vi);
    if (probe) {
        const std::string k = std::to_string(scale_tag);
        probe->emplace("afs.mu" + k, mu.to_array());
        probe->emplace("afs.sigma" + k, sigma.to_array());
        probe->emplace("afs.f_ir" + k, a_ir.to_array());
        probe->emplace("afs.f_vi" + k, a_vi.to_array());
    }
    auto fused = ag::conv2d(ag::concat_channels<S>({a_ir, a_vi}), conv_w, conv_b, 1, 1);
    return ag::leaky_relu(fused, cfg.leaky_slope);
}

template <typename S>
Generator<S>::Generator(GeneratorConfig cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    declare_shapes();
    init_fan_in_uniform(params_, seed);
}

template <typename S>
void Generator<S>::declare_shapes() {
    auto conv = [&](const std::string& key, int oc, int ic, int k) {
        params_.tensors.emplace(key + ".weight", Array<S>(Shape{oc, ic, k, k}));
        params_.tensors.emplace(key + ".bias", Array<S>(Shape{1, oc, 1, 1}));
    };
    const int S_ = cfg_.scales;
    for (const char* branch : {"ir", "vi"}) {
        const std::string enc = std::string("enc.") + branch;
        conv(enc + ".cb", cfg_.base_channels, 1, 3);
        for (int k = 1; k <= S_; ++k) {
            const int cin = k == 1 ? cfg_.base_channels : cfg_.channels_at(k - 1);
            const int cout = cfg_.channels_at(k);
            const std::string eb = enc + ".eb" + std::to_string(k);
            conv(eb + ".conv_a", cout, cin, cfg_.eb_kernel_a);
            conv(eb + ".conv_b", cout, cout, cfg_.eb_kernel_b);
        }
    }
    if (cfg_.use_afs) {
        for (int k = 1; k <= S_; ++k) {
            const int c = cfg_.channels_at(k);
            conv("afs.fuse" + std::to_string(k), c, 2 * c, 3);
        }
    }
    for (int k = S_ - 1; k >= 1; --k) {
        const int cin = cfg_.channels_at(k + 1) + (cfg_.use_skip ? cfg_.channels_at(k) : 0);
        const int cout = cfg_.channels_at(k);
        const std::string db = "dec.db" + std::to_string(k);
        conv(db + ".conv_a", cout, cin, 3);
        conv(db + ".conv_b", cout, cout, 3);
    }
    conv("dec.out", 1, cfg_.base_channels, 3);
}

template <typename S>
std::vector<TensorRef<S>> Generator<S>::encode(ag::Tape<S>& tape, const BoundParams<S>& bound,
                                               TensorRef<S> image, const std::string& branch,
                                               Probe<S>* probe) const {
    (void)tape;
    const Shape s = image.shape();
    if (cfg_.use_sampling) {
        const int64_t div = int64_t(1) << (cfg_.scales - 1);
        if (s.h % div != 0 || s.w % div != 0)
            throw GeometryError("encode: spatial side of " + to_string(s) +
                                " must be divisible by " + std::to_string(div));
    }
    const std::string enc = "enc." + branch;
    const double slope = cfg_.leaky_slope;
    auto x = ag::leaky_relu(
        ag::conv2d(image, bound.at(enc + ".cb.weight"), bound.at(enc + ".cb.bias"), 1, 1), slope);
    std::vector<TensorRef<S>> features;
    for (int k = 1; k <= cfg_.scales; ++k) {
        if (k > 1 && cfg_.use_sampling) x = ag::pool2d(x, ag::PoolKind::max, 2, 2);
        const std::string eb = enc + ".eb" + std::to_string(k);
        x = ag::leaky_relu(ag::conv2d(x, bound.at(eb + ".conv_a.weight"),
                                      bound.at(eb + ".conv_a.bias"), 1, cfg_.eb_kernel_a / 2),
                           slope);
        x = ag::leaky_relu(ag::conv2d(x, bound.at(eb + ".conv_b.weight"),
                                      bound.at(eb + ".conv_b.bias"), 1, cfg_.eb_kernel_b / 2),
                           slope);
        features.push_back(x);
        if (probe)
            probe->emplace("enc." + branch + ".f" + std::to_string(k), x.to_array());
    }
    return features;
}

template <typename S>
TensorRef<S> Generator<S>::decode(ag::Tape<S>& tape, const BoundParams<S>& bound,
                                  const std::vector<TensorRef<S>>& fused) const {
    (void)tape;
    if (static_cast<int>(fused.size()) != cfg_.scales)
        throw ContractError("decode: expected " + std::to_string(cfg_.scales) +
                            " fused scales, got " + std::to_string(fused.size()));
    const double slope = cfg_.leaky_slope;
    auto x = fused.back();
    for (int k = cfg_.scales - 1; k >= 1; --k) {
        if (cfg_.use_sampling) x = ag::upsample_nearest(x, 2);
        if (cfg_.use_skip) x = ag::concat_channels<S>({x, fused[static_cast<size_t>(k - 1)]});
        const std::string db = "dec.db" + std::to_string(k);
        x = ag::leaky_relu(
            ag::conv2d(x, bound.at(db + ".conv_a.weight"), bound.at(db + ".conv_a.bias"), 1, 1),
            slope);
        x = ag::leaky_relu(
            ag::conv2d(x, bound.at(db + ".conv_b.weight"), bound.at(db + ".conv_b.bias"), 1, 1),
            slope);
    }
    return ag::sigmoid(ag::conv2d(x, bound.at("dec.out.weight"), bound.at("dec.out.bias"), 1, 1));
}

template <typename S>
TensorRef<S> Generator<S>::forward(ag::Tape<S>& tape, const BoundParams<S>& bound,
                                   TensorRef<S> ir, TensorRef<S> vi, Probe<S>* probe) const {
    if (ir.shape() != vi.shape())
        throw DimensionError("generator: input pair shapes differ: " + to_string(ir.shape()) +
                             " vs " + to_string(vi.shape()));
    auto f_ir = encode(tape, bound, ir, "ir", probe);
    auto f_vi = encode(tape, bound, vi, "vi", probe);
    std::vector<TensorRef<S>> fused;
    for (int k = 1; k <= cfg_.scales; ++k) {
        const size_t i = static_cast<size_t>(k - 1);
        TensorRef<S> f;
        if (cfg_.use_afs) {
            const std::string fuse = "afs.fuse" + std::to_string(k);
            f = afs_fuse<S>(f_ir[i], f_vi[i], bound.at(fuse + ".weight"),
                            bound.at(fuse + ".bias"), cfg_, probe, k);
        } else {
            f = ag::add(ag::scale(f_ir[i], 0.5), ag::scale(f_vi[i], 0.5));
        }
        fused.push_back(f);
        if (probe) probe->emplace("fused.f" + std::to_string(k), f.to_array());
    }
    return decode(tape, bound, fused);
}

template ag::TensorRef<float> afs_fuse<float>(ag::TensorRef<float>, ag::TensorRef<float>,
                                              ag::TensorRef<float>, ag::TensorRef<float>,
                                              const GeneratorConfig&, Probe<float>*, int);
template ag::TensorRef<double> afs_fuse<double>(ag::TensorRef<double>, ag::TensorRef<double>,
                                                ag::TensorRef<double>, ag::TensorRef<double>,
                                                const GeneratorConfig&, Probe<double>*, int);
template class Generator<float>;
template class Generator<double>;

} // namespace hafuse::nn
