#include "hafuse/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>

#include "hafuse/discriminator.hpp"
#include "hafuse/generator.hpp"
#include "hafuse/sobel_core.hpp"

namespace hafuse::gradcheck {

namespace {

uint64_t name_salt(const std::string& name) {
    uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : name) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

Array<double> uniform_array(const Shape& s, Rng& rng, double lo, double hi) {
    Array<double> a;
    a.shape = s;
    a.data.resize(static_cast<size_t>(s.count()));
    for (auto& v : a.data) v = rng.uniform(lo, hi);
    return a;
}

// Values bounded away from zero, for ops with a kink at the origin.
Array<double> margin_array(const Shape& s, Rng& rng, double margin) {
    Array<double> a = uniform_array(s, rng, -1.0, 1.0);
    for (auto& v : a.data)
        if (std::fabs(v) < margin) v = v < 0 ? v - margin : v + margin;
    return a;
}

// Pairwise-distinct values (gap >= 1/n), so argmax selections cannot flip
// under the finite-difference perturbation.
Array<double> distinct_array(const Shape& s, Rng& rng) {
    const size_t n = static_cast<size_t>(s.count());
    std::vector<size_t> perm(n);
    std::iota(perm.begin(), perm.end(), size_t{0});
    for (size_t i = n; i > 1; --i)
        std::swap(perm[i - 1], perm[rng.below(static_cast<uint64_t>(i))]);
    Array<double> a;
    a.shape = s;
    a.data.resize(n);
    for (size_t i = 0; i < n; ++i)
        a.data[i] = -1.0 + (static_cast<double>(perm[i]) + 0.5 * rng.uniform01()) * 2.0 /
                               static_cast<double>(n);
    return a;
}

// Input whose Sobel responses stay away from the magnitude kink.
Array<double> sobel_safe_array(const Shape& s, Rng& rng) {
    for (int attempt = 0; attempt < 100; ++attempt) {
        Array<double> a = uniform_array(s, rng, -1.0, 1.0);
        size_t n = a.data.size();
        std::vector<double> gx(n), gy(n);
        sobel_plane(a.data.data(), s.h, s.w, gx.data(), gy.data());
        double worst = 1e300;
        for (size_t i = 0; i < n; ++i) worst = std::min(worst, gx[i] * gx[i] + gy[i] * gy[i]);
        if (worst > 1e-6) return a;
    }
    throw ContractError("gradcheck: could not draw a Sobel-safe input");
}

} // namespace

CheckResult check_scalar_fn(const std::string& name, const MakeInputs& make, const BuildFn& build,
                            int seeds, double tol, double fd_step) {
    CheckResult res;
    res.name = name;
    res.seeds = seeds;
    res.tol = tol;
    for (int s = 0; s < seeds; ++s) {
        Rng rng(derive_seed(name_salt(name), static_cast<uint64_t>(s)));
        std::vector<Array<double>> inputs = make(rng);

        ag::Tape<double> tape;
        std::vector<ag::TensorRef<double>> leaves;
        leaves.reserve(inputs.size());
        for (const auto& a : inputs) leaves.push_back(tape.leaf(a, true));
        ag::TensorRef<double> root = build(tape, leaves);
        if (!is_scalar(root.shape()))
            throw ContractError("gradcheck: '" + name + "' did not reduce to a scalar");
        tape.backward(root);
        std::vector<std::vector<double>> analytic;
        for (const auto& l : leaves) {
            std::vector<double> g = l.grad();
            if (g.empty()) g.assign(l.value().size(), 0.0);
            analytic.push_back(std::move(g));
        }

        auto eval = [&]() {
            ag::Tape<double> t;
            t.check_finite = false; // FD probes may transiently wander; judge only the values
            std::vector<ag::TensorRef<double>> ls;
            ls.reserve(inputs.size());
            for (const auto& a : inputs) ls.push_back(t.leaf(a, false));
            return build(t, ls).value()[0];
        };
        for (size_t ti = 0; ti < inputs.size(); ++ti) {
            for (size_t ei = 0; ei < inputs[ti].data.size(); ++ei) {
                const double orig = inputs[ti].data[ei];
                const double a = analytic[ti][ei];
                auto rel_at = [&](double h) {
                    inputs[ti].data[ei] = orig + h;
                    const double fp = eval();
                    inputs[ti].data[ei] = orig - h;
                    const double fm = eval();
                    inputs[ti].data[ei] = orig;
                    const double numeric = (fp - fm) / (2.0 * h);
                    return std::fabs(a - numeric) /
                           std::max(std::fabs(a) + std::fabs(numeric), 1e-6);
                };
                double rel = rel_at(fd_step);
                // A composite graph can place a hinge point (activation kink,
                // pooling arg switch) inside the probe interval, which breaks
                // the central difference without any gradient being wrong.
                // Shrinking the step moves the interval off the hinge; a true
                // gradient mismatch survives every step size.
                for (double h = fd_step; rel >= tol && h > fd_step * 1e-3;) {
                    h /= 8.0;
                    rel = std::min(rel, rel_at(h));
                }
                res.worst_rel = std::max(res.worst_rel, rel);
            }
        }
    }
    res.pass = res.worst_rel < tol;
    return res;
}

namespace {

using Refs = std::vector<ag::TensorRef<double>>;

void add_op_checks(SuiteReport& rep, const SuiteOptions& o) {
    auto run = [&](const std::string& name, MakeInputs make, BuildFn build) {
        rep.checks.push_back(check_scalar_fn(name, make, build, o.seeds_per_op, o.op_tol, o.fd_step));
    };
    const ag::TensorRef<double> no_bias;

    run("conv2d",
        [](Rng& r) {
            return std::vector<Array<double>>{uniform_array({2, 3, 5, 4}, r, -1, 1),
                                              uniform_array({2, 3, 3, 3}, r, -1, 1),
                                              uniform_array({1, 2, 1, 1}, r, -1, 1)};
        },
        [](ag::Tape<double>&, const Refs& l) {
            return ag::sum(ag::conv2d(l[0], l[1], l[2], 1, 1));
        });
    run("conv2d_stride2",
        [](Rng& r) {
            return std::vector<Array<double>>{uniform_array({1, 2, 6, 6}, r, -1, 1),
                                              uniform_array({3, 2, 4, 4}, r, -1, 1)};
        },
        [no_bias](ag::Tape<double>&, const Refs& l) {
            return ag::sum(ag::conv2d(l[0], l[1], no_bias, 2, 1));
        });
    run("conv1d_channels",
        [](Rng& r) {
            return std::vector<Array<double>>{uniform_array({2, 5, 1, 1}, r, -1, 1),
                                              uniform_array({1, 1, 1, 3}, r, -1, 1)};
        },
        [](ag::Tape<double>&, const Refs& l) { return ag::sum(ag::conv1d_channels(l[0], l[1])); });
    run("pool2d_max",
        [](Rng& r) { return std::vector<Array<double>>{distinct_array({2, 2, 4, 4}, r)}; },
        [](ag::Tape<double>&, const Refs& l) {
            return ag::sum(ag::pool2d(l[0], ag::PoolKind::max, 2, 2));
        });
    run("pool2d_avg",
        [](Rng& r) { return std::vector<Array<double>>{uniform_array({2, 2, 5, 5}, r, -1, 1)}; },
        [](ag::Tape<double>&, const Refs& l) {
            return ag::sum(ag::pool2d(l[0], ag::PoolKind::avg, 2, 2));
        });
    run("global_pool_max",
        [](Rng& r) { return std::vector<Array<double>>{distinct_array({2, 3, 3, 3}, r)}; },
        [](ag::Tape<double>&, const Refs& l) {
            return ag::sum(ag::global_pool(l[0], ag::PoolKind::max));
        });
    run("global_pool_avg",
        [](Rng& r) { return std::vector<Array<double>>{uniform_array({2, 3, 3, 3}, r, -1, 1)}; },
        [](ag::Tape<double>&, const Refs& l) {
            return ag::sum(ag::global_pool(l[0], ag::PoolKind::avg));
        });
    run("upsample_nearest",
        [](Rng& r) { return std::vector<Array<double>>{uniform_array({1, 2, 3, 3}, r, -1, 1)}; },
        [](ag::Tape<double>&, const Refs& l) { return ag::sum(ag::upsample_nearest(l[0], 2)); });
    run("dense",
        [](Rng& r) {
            return std::vector<Array<double>>{uniform_array({2, 2, 2, 2}, r, -1, 1),
                                              uniform_array({1, 1, 3, 8}, r, -1, 1),
                                              uniform_array({1, 3, 1, 1}, r, -1, 1)};
        },
        [](ag::Tape<double>&, const Refs& l) { return ag::sum(ag::dense(l[0], l[1], l[2])); });
    run("leaky_relu",
        [](Rng& r) { return std::vector<Array<double>>{margin_array({2, 3, 4, 4}, r, 0.01)}; },
        [](ag::Tape<double>&, const Refs& l) { return ag::sum(ag::leaky_relu(l[0], 0.2)); });
    run("tanh_act",
        [](Rng& r) { return std::vector<Array<double>>{uniform_array({2, 2, 3, 3}, r, -2, 2)}; },
        [](ag::Tape<double>&, const Refs& l) { return ag::sum(ag::tanh_act(l[0])); });
    run("sigmoid",
        [](Rng& r) { return std::vector<Array<double>>{uniform_array({2, 2, 3, 3}, r, -3, 3)}; },
        [](ag::Tape<double>&, const Refs& l) { return ag::sum(ag::sigmoid(l[0])); });
    run("abs_val",
        [](Rng& r) { return std::vector<Array<double>>{margin_array({2, 3, 3, 3}, r, 0.01)}; },
        [](ag::Tape<double>&, const Refs& l) { return ag::sum(ag::abs_val(l[0])); });
    run("concat_channels",
        [](Rng& r) {
            return std::vector<Array<double>>{uniform_array({1, 2, 2, 2}, r, -1, 1),
                                              uniform_array({1, 1, 2, 2}, r, -1, 1),
                                              uniform_array({1, 3, 2, 2}, r, -1, 1)};
        },
        [](ag::Tape<double>&, const Refs& l) {
            return ag::sum(ag::concat_channels<double>({l[0], l[1], l[2]}));
        });
    run("add",
        [](Rng& r) {
            return std::vector<Array<double>>{uniform_array({2, 2, 3, 3}, r, -1, 1),
                                              uniform_array({2, 2, 3, 3}, r, -1, 1)};
        },
        [](ag::Tape<double>&, const Refs& l) { return ag::sum(ag::add(l[0], l[1])); });
    run("add_bcast_chan",
        [](Rng& r) {
            return std::vector<Array<double>>{uniform_array({2, 3, 2, 2}, r, -1, 1),
                                              uniform_array({2, 3, 1, 1}, r, -1, 1)};
        },
        [](ag::Tape<double>&, const Refs& l) { return ag::sum(ag::add(l[0], l[1])); });
    run("sub",
        [](Rng& r) {
            return std::vector<Array<double>>{uniform_array({2, 2, 3, 3}, r, -1, 1),
                                              uniform_array({2, 2, 3, 3}, r, -1, 1)};
        },
        [](ag::Tape<double>&, const Refs& l) { return ag::sum(ag::sub(l[0], l[1])); });
    run("sub_bcast_batch",
        [](Rng& r) {
            return std::vector<Array<double>>{uniform_array({2, 3, 2, 2}, r, -1, 1),
                                              uniform_array({2, 1, 1, 1}, r, -1, 1)};
        },
        [](ag::Tape<double>&, const Refs& l) { return ag::sum(ag::sub(l[0], l[1])); });
    run("mul",
        [](Rng& r) {
            return std::vector<Array<double>>{uniform_array({2, 2, 3, 3}, r, -1, 1),
                                              uniform_array({2, 2, 3, 3}, r, -1, 1)};
        },
        [](ag::Tape<double>&, const Refs& l) { return ag::sum(ag::mul(l[0], l[1])); });
    run("mul_bcast_chan",
        [](Rng& r) {
            return std::vector<Array<double>>{uniform_array({2, 4, 2, 2}, r, -1, 1),
                                              uniform_array({2, 4, 1, 1}, r, -1, 1)};
        },
        [](ag::Tape<double>&, const Refs& l) { return ag::sum(ag::mul(l[0], l[1])); });
    run("mul_bcast_batch",
        [](Rng& r) {
            return std::vector<Array<double>>{uniform_array({2, 3, 2, 2}, r, -1, 1),
                                              uniform_array({2, 1, 1, 1}, r, -1, 1)};
        },
        [](ag::Tape<double>&, const Refs& l) { return ag::sum(ag::mul(l[0], l[1])); });
    run("div_eps",
        [](Rng& r) {
            return std::vector<Array<double>>{uniform_array({2, 2, 3, 3}, r, -1, 1),
                                              margin_array({2, 2, 3, 3}, r, 0.5)};
        },
        [](ag::Tape<double>&, const Refs& l) { return ag::sum(ag::div_eps(l[0], l[1], 1e-8)); });
    run("div_eps_bcast",
        [](Rng& r) {
            return std::vector<Array<double>>{uniform_array({2, 3, 2, 2}, r, -1, 1),
                                              margin_array({2, 3, 1, 1}, r, 0.5)};
        },
        [](ag::Tape<double>&, const Refs& l) { return ag::sum(ag::div_eps(l[0], l[1], 1e-8)); });
    run("scale",
        [](Rng& r) { return std::vector<Array<double>>{uniform_array({2, 2, 3, 3}, r, -1, 1)}; },
        [](ag::Tape<double>&, const Refs& l) { return ag::sum(ag::scale(l[0], -1.7)); });
    run("add_const",
        [](Rng& r) { return std::vector<Array<double>>{uniform_array({2, 2, 3, 3}, r, -1, 1)}; },
        [](ag::Tape<double>&, const Refs& l) { return ag::sum(ag::add_const(l[0], 0.3)); });
    run("channel_max_map",
        [](Rng& r) { return std::vector<Array<double>>{distinct_array({2, 4, 3, 3}, r)}; },
        [](ag::Tape<double>&, const Refs& l) { return ag::sum(ag::channel_max_map(l[0])); });
    run("sobel_gradient",
        [](Rng& r) { return std::vector<Array<double>>{sobel_safe_array({1, 1, 5, 6}, r)}; },
        [](ag::Tape<double>&, const Refs& l) { return ag::sum(ag::sobel_gradient(l[0])); });
    run("sum",
        [](Rng& r) { return std::vector<Array<double>>{uniform_array({2, 3, 2, 4}, r, -1, 1)}; },
        [](ag::Tape<double>&, const Refs& l) { return ag::sum(l[0]); });
    run("mean",
        [](Rng& r) { return std::vector<Array<double>>{uniform_array({2, 3, 2, 4}, r, -1, 1)}; },
        [](ag::Tape<double>&, const Refs& l) { return ag::mean(l[0]); });
}

// FD inputs for a network check: every parameter tensor (keys fixed by the
// configuration) followed by the image planes.
struct NetHarness {
    std::vector<std::string> keys;
    std::vector<Shape> shapes;

    template <typename Net>
    explicit NetHarness(const Net& net) {
        for (const auto& [k, a] : net.params().tensors) {
            keys.push_back(k);
            shapes.push_back(a.shape);
        }
    }
    std::vector<Array<double>> draw(Rng& rng, int images, int64_t side) const {
        std::vector<Array<double>> inputs;
        inputs.reserve(shapes.size() + static_cast<size_t>(images));
        for (const auto& s : shapes) inputs.push_back(uniform_array(s, rng, -0.6, 0.6));
        for (int i = 0; i < images; ++i)
            inputs.push_back(uniform_array({1, 1, side, side}, rng, 0.05, 0.95));
        return inputs;
    }
    nn::BoundParams<double> mount(const Refs& leaves) const {
        nn::BoundParams<double> bp;
        for (size_t i = 0; i < keys.size(); ++i) bp.refs.emplace(keys[i], leaves[i]);
        return bp;
    }
};

void add_net_checks(SuiteReport& rep, const SuiteOptions& o) {
    {
        nn::GeneratorConfig cfg;
        cfg.scales = 2;
        cfg.base_channels = 2;
        auto net = std::make_shared<nn::Generator<double>>(cfg, 1);
        auto h = std::make_shared<NetHarness>(*net);
        rep.checks.push_back(check_scalar_fn(
            "generator_8x8",
            [h](Rng& r) { return h->draw(r, 2, 8); },
            [h, net](ag::Tape<double>& t, const Refs& l) {
                auto bp = h->mount(l);
                return ag::sum(net->forward(t, bp, l[l.size() - 2], l[l.size() - 1]));
            },
            o.seeds_per_net, o.net_tol, o.fd_step));
    }
    {
        nn::SalientConfig cfg;
        cfg.attn_scales = 2;
        cfg.conv_channels = {2, 3, 4, 5};
        cfg.fc_hidden = 6;
        cfg.input_side = 16;
        auto net = std::make_shared<nn::SalientDiscriminator<double>>(cfg, 2);
        auto h = std::make_shared<NetHarness>(*net);
        rep.checks.push_back(check_scalar_fn(
            "d_salient_16x16",
            [h](Rng& r) { return h->draw(r, 1, 16); },
            [h, net](ag::Tape<double>& t, const Refs& l) {
                auto bp = h->mount(l);
                return ag::sum(net->forward(t, bp, l[l.size() - 1]));
            },
            o.seeds_per_net, o.net_tol, o.fd_step));
    }
    {
        nn::DetailedConfig cfg;
        cfg.attn_scales = 2;
        cfg.sa_reduction = 2;
        cfg.layers = 4;
        cfg.patch_channels = {3, 4, 6, 1, 1};
        cfg.patch_strides = {2, 2, 2, 1, 1};
        auto net = std::make_shared<nn::DetailedDiscriminator<double>>(cfg, 3);
        auto h = std::make_shared<NetHarness>(*net);
        rep.checks.push_back(check_scalar_fn(
            "d_detailed_16x16",
            [h](Rng& r) { return h->draw(r, 1, 16); },
            [h, net](ag::Tape<double>& t, const Refs& l) {
                auto bp = h->mount(l);
                return ag::sum(net->forward(t, bp, l[l.size() - 1]).prob);
            },
            o.seeds_per_net, o.net_tol, o.fd_step));
    }
}

} // namespace

SuiteReport run_suite(const SuiteOptions& opts) {
    SuiteReport rep;
    add_op_checks(rep, opts);
    add_net_checks(rep, opts);
    return rep;
}

std::string format_report(const SuiteReport& report) {
    std::string out;
    char buf[256];
    for (const auto& c : report.checks) {
        std::snprintf(buf, sizeof(buf), "%-20s %s  worst_rel %.3e  (tol %.0e, %d seeds)\n",
                      c.name.c_str(), c.pass ? "PASS" : "FAIL", c.worst_rel, c.tol, c.seeds);
        out += buf;
    }
    std::snprintf(buf, sizeof(buf), "gradient suite: %s (%zu checks)\n",
                  report.all_pass() ? "all passed" : "FAILURES PRESENT", report.checks.size());
    out += buf;
    return out;
}

} // namespace hafuse::gradcheck
