// Loss suite: frozen worked examples, decomposition identities on random
// inputs checked against independent plain-C++ evaluations, and the
// absent-adversary branches.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "hafuse/losses.hpp"
#include "hafuse/rng.hpp"
#include "hafuse/sobel_core.hpp"

using namespace hafuse;
using ag::Tape;
using ag::TensorRef;

namespace {

TensorRef<double> scalar_leaf(Tape<double>& tape, double v) {
    return tape.leaf(Array<double>({1, 1, 1, 1}, {v}));
}

Array<double> random_plane(Rng& rng, int64_t b, int64_t side) {
    Array<double> a({b, 1, side, side});
    for (auto& v : a.data) v = rng.uniform(0.0, 1.0);
    return a;
}

// Direct re-computation of the two content terms without the tape.
double plain_infrared(const Array<double>& f, const Array<double>& ir) {
    double s = 0;
    for (size_t i = 0; i < f.data.size(); ++i) {
        const double d = f.data[i] - ir.data[i];
        s += d * d;
    }
    return s / static_cast<double>(f.data.size());
}

double plain_visible(const Array<double>& f, const Array<double>& vi) {
    const int64_t b = f.shape.b, h = f.shape.h, w = f.shape.w;
    const size_t plane = static_cast<size_t>(h * w);
    std::vector<double> mf(plane), mv(plane), gx(plane), gy(plane);
    double s = 0;
    for (int64_t bi = 0; bi < b; ++bi) {
        const double* pf = f.data.data() + bi * h * w;
        const double* pv = vi.data.data() + bi * h * w;
        sobel_magnitude_plane(pf, h, w, mf.data(), gx.data(), gy.data());
        sobel_magnitude_plane(pv, h, w, mv.data(), gx.data(), gy.data());
        for (size_t i = 0; i < plane; ++i) s += std::fabs(mf[i] - mv[i]);
    }
    return s / static_cast<double>(f.data.size());
}

} // namespace

TEST_CASE("worked examples hit their frozen values") {
    Tape<double> tape;
    nn::LossWeights w;

    // Generator adversarial term at probabilities (0.9, 0.1).
    auto adver = ag::add(nn::toward_real(scalar_leaf(tape, 0.9)),
                         nn::toward_real(scalar_leaf(tape, 0.1)));
    CHECK(std::fabs(nn::scalar_value(adver) - 0.82) <= 1e-9);

    // One adversary side at (real 0.8, fake 0.3).
    auto dl = nn::discriminator_loss(scalar_leaf(tape, 0.8), scalar_leaf(tape, 0.3));
    CHECK(std::fabs(nn::scalar_value(dl) - 0.065) <= 1e-9);

    // Indifferent classifier.
    CHECK(std::fabs(nn::scalar_value(nn::toward_real(scalar_leaf(tape, 0.5))) - 0.25) <= 1e-9);

    // Both sides stuck at 0.5 with the default weighting.
    auto d = nn::total_D(scalar_leaf(tape, 0.5), scalar_leaf(tape, 0.5), scalar_leaf(tape, 0.5),
                         scalar_leaf(tape, 0.5), w);
    CHECK(std::fabs(nn::scalar_value(d.total) - 1.5) <= 1e-9);
}

TEST_CASE("default weights are (100, 5, 5) and must be positive") {
    nn::LossWeights w;
    CHECK(w.alpha == 100.0);
    CHECK(w.beta == 5.0);
    CHECK(w.gamma == 5.0);
    w.alpha = 0;
    CHECK_THROWS_AS(w.validate(), ParameterError);
    nn::LossWeights w2;
    w2.gamma = -1;
    CHECK_THROWS_AS(w2.validate(), ParameterError);
}

TEST_CASE("decomposition identities hold on random inputs") {
    nn::LossWeights w;
    Rng rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        Tape<double> tape;
        auto f = tape.leaf(random_plane(rng, 2, 6));
        auto ir = tape.leaf(random_plane(rng, 2, 6));
        auto vi = tape.leaf(random_plane(rng, 2, 6));
        auto ps = scalar_leaf(tape, rng.uniform(0.0, 1.0));
        auto pd = scalar_leaf(tape, rng.uniform(0.0, 1.0));
        auto g = nn::total_G(f, ir, vi, ps, pd, w);

        const double li = nn::scalar_value(g.infrared);
        const double lv = nn::scalar_value(g.visible);
        const double lb = nn::scalar_value(g.basic);
        const double la = nn::scalar_value(g.adver);
        const double lg = nn::scalar_value(g.total);
        auto rel = [](double got, double want) {
            return std::fabs(got - want) / std::max(std::fabs(want), 1e-12);
        };
        CHECK(rel(lb, lv + w.beta * li) <= 1e-6);
        CHECK(rel(lg, la + w.alpha * lb) <= 1e-6);

        // The leaves recomputed without any tape machinery.
        CHECK(rel(li, plain_infrared(f.to_array(), ir.to_array())) <= 1e-6);
        CHECK(rel(lv, plain_visible(f.to_array(), vi.to_array())) <= 1e-6);

        auto psr = scalar_leaf(tape, rng.uniform(0.0, 1.0));
        auto psf = scalar_leaf(tape, rng.uniform(0.0, 1.0));
        auto pdr = scalar_leaf(tape, rng.uniform(0.0, 1.0));
        auto pdf = scalar_leaf(tape, rng.uniform(0.0, 1.0));
        auto d = nn::total_D(psr, psf, pdr, pdf, w);
        CHECK(rel(nn::scalar_value(d.total),
                  nn::scalar_value(d.detailed) + w.gamma * nn::scalar_value(d.salient)) <= 1e-6);
    }
}

TEST_CASE("batched probabilities average inside the adversarial terms") {
    Tape<double> tape;
    auto p = tape.leaf(Array<double>({4, 1, 1, 1}, {1.0, 0.5, 0.0, 0.5}));
    // ((0)^2 + (0.5)^2 + (1)^2 + (0.5)^2) / 4
    CHECK(nn::scalar_value(nn::toward_real(p)) == doctest::Approx(0.375).epsilon(1e-12));
}

TEST_CASE("generator loss works with a single adversary") {
    nn::LossWeights w;
    Rng rng(5);
    Tape<double> tape;
    auto f = tape.leaf(random_plane(rng, 1, 6));
    auto ir = tape.leaf(random_plane(rng, 1, 6));
    auto vi = tape.leaf(random_plane(rng, 1, 6));
    auto p = scalar_leaf(tape, 0.3);

    auto only_s = nn::total_G(f, ir, vi, p, TensorRef<double>{}, w);
    CHECK(nn::scalar_value(only_s.adver) == doctest::Approx(0.49).epsilon(1e-9));
    auto only_d = nn::total_G(f, ir, vi, TensorRef<double>{}, p, w);
    CHECK(nn::scalar_value(only_d.adver) == doctest::Approx(0.49).epsilon(1e-9));
    CHECK_THROWS_AS(nn::total_G(f, ir, vi, TensorRef<double>{}, TensorRef<double>{}, w),
                    ContractError);
}

TEST_CASE("discriminator loss works with a single side") {
    nn::LossWeights w;
    Tape<double> tape;
    auto r = scalar_leaf(tape, 0.8);
    auto k = scalar_leaf(tape, 0.3);

    auto only_s = nn::total_D(r, k, TensorRef<double>{}, TensorRef<double>{}, w);
    CHECK_FALSE(only_s.detailed.valid());
    CHECK(nn::scalar_value(only_s.total) == doctest::Approx(w.gamma * 0.065).epsilon(1e-9));
    CHECK(std::isnan(nn::scalar_value(only_s.detailed)));

    auto only_d = nn::total_D(TensorRef<double>{}, TensorRef<double>{}, r, k, w);
    CHECK_FALSE(only_d.salient.valid());
    CHECK(nn::scalar_value(only_d.total) == doctest::Approx(0.065).epsilon(1e-9));

    CHECK_THROWS_AS(nn::total_D(TensorRef<double>{}, TensorRef<double>{}, TensorRef<double>{},
                                TensorRef<double>{}, w),
                    ContractError);
}

TEST_CASE("loss breakdown defaults to NaN sentinels") {
    nn::LossBreakdown b;
    CHECK(std::isnan(b.l_g));
    CHECK(std::isnan(b.l_ds));
    CHECK(std::isnan(b.l_dd));
}

TEST_CASE("gradients flow through the full generator objective") {
    nn::LossWeights w;
    Rng rng(17);
    Tape<double> tape;
    auto f = tape.leaf(random_plane(rng, 1, 6), true);
    auto ir = tape.leaf(random_plane(rng, 1, 6));
    auto vi = tape.leaf(random_plane(rng, 1, 6));
    auto p = scalar_leaf(tape, 0.4);
    auto g = nn::total_G(f, ir, vi, p, TensorRef<double>{}, w);
    tape.backward(g.total);
    REQUIRE(f.grad().size() == f.value().size());
    double sum = 0;
    for (double v : f.grad()) sum += std::fabs(v);
    CHECK(sum > 0.0);
}
