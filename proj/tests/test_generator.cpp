// Generator behavior: the attention fusion rule against a hand-worked 2x2
// oracle and its algebraic invariances, probe output, structural variants
// (no attention / no sampling / no skip), and parameter initialization.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <string>
#include <vector>

#include "hafuse/generator.hpp"
#include "hafuse/ops.hpp"
#include "hafuse/params.hpp"
#include "hafuse/rng.hpp"

using namespace hafuse;
using nn::Generator;
using nn::GeneratorConfig;
using nn::Probe;

namespace {

// Runs the fusion rule on one (1,c,2,2) pair and returns the probe.
Probe<double> afs_probe(const std::vector<double>& f_ir, const std::vector<double>& f_vi,
                        int64_t c, const GeneratorConfig& cfg) {
    ag::Tape<double> tape;
    auto a = tape.leaf(Array<double>({1, c, 2, 2}, f_ir));
    auto b = tape.leaf(Array<double>({1, c, 2, 2}, f_vi));
    auto w = tape.leaf(Array<double>(Shape{c, 2 * c, 3, 3}, 0.01));
    auto bias = tape.leaf(Array<double>({1, c, 1, 1}, std::vector<double>(size_t(c), 0.0)));
    Probe<double> probe;
    nn::afs_fuse<double>(a, b, w, bias, cfg, &probe, 1);
    return probe;
}

} // namespace

TEST_CASE("attention weights match the worked 2x2 example exactly") {
    GeneratorConfig cfg;
    auto probe = afs_probe({2, 0, 0, 0}, {0, 1, 0, 0}, 1, cfg);
    const std::vector<double> mu{1.0, -0.5, 0.0, 0.0};
    const std::vector<double> sigma{-2.0, 1.0, 0.0, 0.0};
    const std::vector<double> f_ir{4.0, 0.0, 0.0, 0.0};
    const std::vector<double> f_vi{0.0, 2.0, 0.0, 0.0};
    for (size_t i = 0; i < 4; ++i) {
        CHECK(std::fabs(probe.at("afs.mu1").data[i] - mu[i]) <= 1e-12);
        CHECK(std::fabs(probe.at("afs.sigma1").data[i] - sigma[i]) <= 1e-12);
        CHECK(std::fabs(probe.at("afs.f_ir1").data[i] - f_ir[i]) <= 1e-12);
        CHECK(std::fabs(probe.at("afs.f_vi1").data[i] - f_vi[i]) <= 1e-12);
    }
}

TEST_CASE("identical feature maps give exactly zero attention") {
    GeneratorConfig cfg;
    const std::vector<double> same{0.3, -0.7, 1.1, 0.0};
    auto probe = afs_probe(same, same, 1, cfg);
    for (double v : probe.at("afs.mu1").data) CHECK(v == 0.0);
    for (double v : probe.at("afs.sigma1").data) CHECK(v == 0.0);
    // x * 0 + x = x: the enhanced features fall back to the plain features.
    CHECK(probe.at("afs.f_ir1").data == same);
    CHECK(probe.at("afs.f_vi1").data == same);
}

TEST_CASE("attention weights are invariant to joint rescaling of both inputs") {
    GeneratorConfig cfg;
    const std::vector<double> a{0.9, -0.2, 0.55, 0.11, 0.4, -0.33, 0.06, 0.81};
    const std::vector<double> b{0.1, 0.7, -0.44, 0.2, -0.9, 0.5, 0.37, -0.08};
    auto base = afs_probe(a, b, 2, cfg);
    for (double lam : {0.5, 2.0, 10.0}) {
        std::vector<double> as(a), bs(b);
        for (auto& v : as) v *= lam;
        for (auto& v : bs) v *= lam;
        auto scaled = afs_probe(as, bs, 2, cfg);
        for (size_t i = 0; i < a.size(); ++i) {
            CHECK(std::fabs(scaled.at("afs.mu1").data[i] - base.at("afs.mu1").data[i]) <= 1e-10);
            CHECK(std::fabs(scaled.at("afs.sigma1").data[i] - base.at("afs.sigma1").data[i]) <=
                  1e-10);
        }
    }
}

TEST_CASE("joint global max reduces over channels as well") {
    GeneratorConfig cfg;
    // Channel 0 diff peaks at 1, channel 1 diff peaks at 4.
    const std::vector<double> a{1, 0, 0, 0, 4, 0, 0, 0};
    const std::vector<double> b{0, 0, 0, 0, 0, 0, 0, 0};
    auto per_channel = afs_probe(a, b, 2, cfg);
    CHECK(per_channel.at("afs.mu1").data[0] == doctest::Approx(1.0)); // 1/1
    CHECK(per_channel.at("afs.mu1").data[4] == doctest::Approx(1.0)); // 4/4

    cfg.afs_gmp_joint = true;
    auto joint = afs_probe(a, b, 2, cfg);
    CHECK(joint.at("afs.mu1").data[0] == doctest::Approx(0.25)); // 1/4
    CHECK(joint.at("afs.mu1").data[4] == doctest::Approx(1.0));  // 4/4
}

TEST_CASE("forward output keeps the input geometry") {
    GeneratorConfig cfg;
    cfg.scales = 2;
    cfg.base_channels = 4;
    Generator<float> gen(cfg, 3);
    ag::Tape<float> tape;
    auto bound = nn::bind_params(tape, gen.params(), false);
    auto ir = tape.leaf(Array<float>({2, 1, 16, 16}, 0.4f));
    auto vi = tape.leaf(Array<float>({2, 1, 16, 16}, 0.6f));
    auto out = gen.forward(tape, bound, ir, vi);
    CHECK(out.shape() == Shape{2, 1, 16, 16});
    for (float v : out.value()) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f); // sigmoid range
    }
}

TEST_CASE("probe exposes encoder, fusion and per-scale outputs") {
    GeneratorConfig cfg;
    cfg.scales = 2;
    cfg.base_channels = 4;
    Generator<float> gen(cfg, 3);
    ag::Tape<float> tape;
    auto bound = nn::bind_params(tape, gen.params(), false);
    Probe<float> probe;
    auto ir = tape.leaf(Array<float>({1, 1, 8, 8}, 0.4f));
    auto vi = tape.leaf(Array<float>({1, 1, 8, 8}, 0.6f));
    gen.forward(tape, bound, ir, vi, &probe);
    for (const char* key : {"enc.ir.f1", "enc.ir.f2", "enc.vi.f1", "enc.vi.f2", "afs.mu1",
                            "afs.sigma2", "fused.f1", "fused.f2"})
        CHECK(probe.count(key) == 1);
    CHECK(probe.at("enc.ir.f1").shape == Shape{1, 4, 8, 8});
    CHECK(probe.at("enc.ir.f2").shape == Shape{1, 8, 4, 4}); // pooled, channels doubled
}

TEST_CASE("disabling attention averages the two branches exactly") {
    GeneratorConfig cfg;
    cfg.scales = 2;
    cfg.base_channels = 4;
    cfg.use_afs = false;
    Generator<float> gen(cfg, 9);
    ag::Tape<float> tape;
    auto bound = nn::bind_params(tape, gen.params(), false);
    Probe<float> probe;
    Array<float> ir_img({1, 1, 8, 8});
    Array<float> vi_img({1, 1, 8, 8});
    Rng rng(11);
    for (auto& v : ir_img.data) v = static_cast<float>(rng.uniform(0.0, 1.0));
    for (auto& v : vi_img.data) v = static_cast<float>(rng.uniform(0.0, 1.0));
    gen.forward(tape, bound, tape.leaf(ir_img), tape.leaf(vi_img), &probe);
    for (int k = 1; k <= 2; ++k) {
        const auto& f_ir = probe.at("enc.ir.f" + std::to_string(k));
        const auto& f_vi = probe.at("enc.vi.f" + std::to_string(k));
        const auto& fused = probe.at("fused.f" + std::to_string(k));
        CHECK(probe.count("afs.mu" + std::to_string(k)) == 0);
        for (size_t i = 0; i < fused.data.size(); ++i)
            CHECK(fused.data[i] == 0.5f * f_ir.data[i] + 0.5f * f_vi.data[i]);
    }
}

TEST_CASE("disabling sampling keeps every scale at full resolution") {
    GeneratorConfig cfg;
    cfg.scales = 3;
    cfg.base_channels = 2;
    cfg.use_sampling = false;
    Generator<float> gen(cfg, 5);
    ag::Tape<float> tape;
    auto bound = nn::bind_params(tape, gen.params(), false);
    Probe<float> probe;
    auto ir = tape.leaf(Array<float>({1, 1, 10, 10}, 0.5f)); // 10 is not divisible by 4
    auto vi = tape.leaf(Array<float>({1, 1, 10, 10}, 0.5f));
    auto out = gen.forward(tape, bound, ir, vi, &probe);
    CHECK(out.shape() == Shape{1, 1, 10, 10});
    CHECK(probe.at("enc.ir.f3").shape == Shape{1, 8, 10, 10});
}

TEST_CASE("disabling skip connections still decodes correctly") {
    GeneratorConfig cfg;
    cfg.scales = 2;
    cfg.base_channels = 4;
    cfg.use_skip = false;
    Generator<float> gen(cfg, 5);
    ag::Tape<float> tape;
    auto bound = nn::bind_params(tape, gen.params(), false);
    auto ir = tape.leaf(Array<float>({1, 1, 8, 8}, 0.5f));
    auto vi = tape.leaf(Array<float>({1, 1, 8, 8}, 0.3f));
    CHECK(gen.forward(tape, bound, ir, vi).shape() == Shape{1, 1, 8, 8});
    // Without skip, decoder block 1 consumes only the upsampled coarse path.
    CHECK(gen.params().at("dec.db1.conv_a.weight").shape.c == 8);
    GeneratorConfig with_skip = cfg;
    with_skip.use_skip = true;
    Generator<float> gen2(with_skip, 5);
    CHECK(gen2.params().at("dec.db1.conv_a.weight").shape.c == 12); // 8 coarse + 4 skip
}

TEST_CASE("sampling requires sides divisible by the scale factor") {
    GeneratorConfig cfg; // scales 3 -> factor 4
    Generator<float> gen(cfg, 1);
    ag::Tape<float> tape;
    auto bound = nn::bind_params(tape, gen.params(), false);
    auto ir = tape.leaf(Array<float>({1, 1, 10, 10}, 0.5f));
    auto vi = tape.leaf(Array<float>({1, 1, 10, 10}, 0.5f));
    CHECK_THROWS_AS(gen.forward(tape, bound, ir, vi), GeometryError);
}

TEST_CASE("mismatched input pair shapes are rejected") {
    GeneratorConfig cfg;
    cfg.scales = 2;
    cfg.base_channels = 2;
    Generator<float> gen(cfg, 1);
    ag::Tape<float> tape;
    auto bound = nn::bind_params(tape, gen.params(), false);
    auto ir = tape.leaf(Array<float>({1, 1, 8, 8}, 0.5f));
    auto vi = tape.leaf(Array<float>({1, 1, 8, 6}, 0.5f));
    CHECK_THROWS_AS(gen.forward(tape, bound, ir, vi), DimensionError);
}

TEST_CASE("channel schedule doubles per scale") {
    GeneratorConfig cfg;
    CHECK(cfg.channels_at(1) == 16);
    CHECK(cfg.channels_at(2) == 32);
    CHECK(cfg.channels_at(3) == 64);
}

TEST_CASE("configuration validation rejects bad values") {
    GeneratorConfig cfg;
    cfg.scales = 1;
    CHECK_THROWS_AS(Generator<float>(cfg, 1), ParameterError);
    GeneratorConfig cfg2;
    cfg2.eb_kernel_a = 4; // even kernels cannot keep geometry with symmetric padding
    CHECK_THROWS_AS(Generator<float>(cfg2, 1), ParameterError);
}

TEST_CASE("initialization is seed-deterministic with zero biases") {
    GeneratorConfig cfg;
    cfg.scales = 2;
    cfg.base_channels = 2;
    Generator<float> a(cfg, 42), b(cfg, 42), c(cfg, 43);
    bool any_diff = false;
    for (const auto& [key, arr] : a.params().tensors) {
        CHECK(arr.data == b.params().tensors.at(key).data);
        if (arr.data != c.params().tensors.at(key).data) any_diff = true;
        if (key.size() > 5 && key.substr(key.size() - 5) == ".bias")
            for (float v : arr.data) CHECK(v == 0.0f);
    }
    CHECK(any_diff);
}
