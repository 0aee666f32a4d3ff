// Metric oracles on constructed images, self-fusion fixed points,
// degenerate-input conventions, the noise harness, and the CSV schema.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <string>
#include <vector>

#include "hafuse/image.hpp"
#include "hafuse/metrics.hpp"
#include "hafuse/rng.hpp"

using namespace hafuse;
using data::GrayImage;

namespace {

GrayImage constant(int64_t side, float v) { return GrayImage(side, side, v); }

GrayImage random_img(int64_t h, int64_t w, uint64_t seed) {
    GrayImage img(h, w);
    Rng rng(seed);
    for (auto& v : img.pix) v = static_cast<float>(rng.uniform(0.0, 1.0));
    return img;
}

} // namespace

TEST_CASE("entropy of a constant image is zero") {
    CHECK(metric::metric_en(constant(16, 0.5f)) == 0.0);
    CHECK(metric::metric_en(constant(16, 0.0f)) == 0.0);
}

TEST_CASE("entropy of the (1/2, 1/4, 1/8, 1/8) histogram is exactly 1.75 bits") {
    GrayImage img(1, 8);
    const float levels[] = {0.0f, 0.0f, 0.0f, 0.0f, 64 / 255.0f, 64 / 255.0f, 128 / 255.0f,
                            192 / 255.0f};
    for (int i = 0; i < 8; ++i) img.pix[static_cast<size_t>(i)] = levels[i];
    CHECK(std::fabs(metric::metric_en(img) - 1.75) <= 1e-12);
}

TEST_CASE("average gradient is zero on constants and 1/sqrt(2) on a unit ramp") {
    CHECK(metric::metric_ag(constant(12, 0.7f)) == 0.0);
    GrayImage ramp(8, 8);
    for (int64_t y = 0; y < 8; ++y)
        for (int64_t x = 0; x < 8; ++x) ramp.at(y, x) = static_cast<float>(x) / 255.0f;
    // Every interior pixel: dx = 1 level, dy = 0 -> sqrt(1/2).
    CHECK(std::fabs(metric::metric_ag(ramp) - 1.0 / std::sqrt(2.0)) <= 1e-12);
}

TEST_CASE("spatial frequency is zero on constants and 255 on full-contrast stripes") {
    CHECK(metric::metric_sf(constant(10, 0.3f)) == 0.0);
    GrayImage stripes(8, 8);
    for (int64_t y = 0; y < 8; ++y)
        for (int64_t x = 0; x < 8; ++x) stripes.at(y, x) = (x % 2 == 0) ? 0.0f : 1.0f;
    CHECK(std::fabs(metric::metric_sf(stripes) - 255.0) <= 1e-12);
}

TEST_CASE("spatial frequency is invariant under 90-degree rotation") {
    auto img = random_img(9, 9, 77);
    GrayImage rot(9, 9);
    for (int64_t y = 0; y < 9; ++y)
        for (int64_t x = 0; x < 9; ++x) rot.at(x, 8 - y) = img.at(y, x);
    CHECK(metric::metric_sf(img) == doctest::Approx(metric::metric_sf(rot)).epsilon(1e-12));
}

TEST_CASE("self-fusion scores exactly one on the three reference metrics") {
    auto img = random_img(24, 24, 5);
    CHECK(std::fabs(metric::metric_uiqi(img, img, img) - 1.0) <= 1e-12);
    CHECK(std::fabs(metric::metric_fmi(img, img, img) - 1.0) <= 1e-12);
    CHECK(std::fabs(metric::metric_vif(img, img, img) - 1.0) <= 1e-12);
}

TEST_CASE("reference metrics are symmetric in the two sources") {
    auto f = random_img(16, 16, 1);
    auto a = random_img(16, 16, 2);
    auto b = random_img(16, 16, 3);
    CHECK(metric::metric_uiqi(f, a, b) == metric::metric_uiqi(f, b, a));
    CHECK(metric::metric_fmi(f, a, b) == metric::metric_fmi(f, b, a));
    CHECK(metric::metric_vif(f, a, b) == metric::metric_vif(f, b, a));
}

TEST_CASE("mutual information of independent noise is near zero") {
    auto f = random_img(256, 256, 11);
    auto a = random_img(256, 256, 22);
    auto b = random_img(256, 256, 33);
    CHECK(metric::metric_fmi(f, a, b) < 0.1);
}

TEST_CASE("degenerate constant inputs fall back to the defined fixed points") {
    auto flat = constant(16, 0.5f);
    CHECK(metric::metric_uiqi(flat, flat, flat) == 1.0);
    CHECK(metric::metric_fmi(flat, flat, flat) == 1.0);
    CHECK(metric::metric_vif(flat, flat, flat) == 1.0);
    // Images smaller than one window evaluate to the degenerate value too.
    auto tiny = random_img(4, 4, 9);
    CHECK(metric::metric_uiqi(tiny, tiny, tiny) == 1.0);
}

TEST_CASE("an affine-related fusion carries more information than unrelated noise") {
    // fused = clipped affine map of the source vs an independent noise image.
    auto src = random_img(64, 64, 40);
    GrayImage affine(64, 64);
    for (size_t i = 0; i < src.pix.size(); ++i)
        affine.pix[i] = 0.25f + 0.5f * src.pix[i]; // stays well inside [0,1]
    auto noise = random_img(64, 64, 41);
    CHECK(metric::metric_vif(affine, src, src) > metric::metric_vif(noise, src, src));
    CHECK(metric::metric_fmi(affine, src, src) > metric::metric_fmi(noise, src, src));
}

TEST_CASE("noise harness hits the requested variance and respects zero") {
    GrayImage base = constant(256, 0.5f);
    metric::NoiseSpec spec;
    spec.variance = 0.03;
    spec.seed = 123;
    auto noisy = metric::add_gaussian_noise(base, spec);
    double mean = 0;
    for (size_t i = 0; i < noisy.pix.size(); ++i) mean += noisy.pix[i] - base.pix[i];
    mean /= static_cast<double>(noisy.pix.size());
    double var = 0;
    for (size_t i = 0; i < noisy.pix.size(); ++i) {
        const double d = noisy.pix[i] - base.pix[i] - mean;
        var += d * d;
    }
    var /= static_cast<double>(noisy.pix.size());
    CHECK(var == doctest::Approx(0.03).epsilon(0.15));
    CHECK(std::fabs(mean) < 0.01);
    for (float v : noisy.pix) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }

    metric::NoiseSpec zero;
    zero.variance = 0.0;
    zero.seed = 123;
    auto same = metric::add_gaussian_noise(base, zero);
    CHECK(same.pix == base.pix);

    metric::NoiseSpec other = spec;
    other.seed = 124;
    CHECK(metric::add_gaussian_noise(base, other).pix != noisy.pix);
    CHECK(metric::add_gaussian_noise(base, spec).pix == noisy.pix); // seeded = repeatable
}

TEST_CASE("evaluate_pair rejects size mismatches and fills all six fields") {
    auto f = random_img(16, 16, 1);
    auto ir = random_img(16, 16, 2);
    auto vi = random_img(16, 16, 3);
    auto rep = metric::evaluate_pair(f, ir, vi);
    CHECK(rep.en > 0.0);
    CHECK(rep.ag > 0.0);
    CHECK(rep.sf > 0.0);
    CHECK(std::isfinite(rep.fmi));
    CHECK(std::isfinite(rep.vif));
    CHECK(std::isfinite(rep.uiqi));
    auto small = random_img(8, 16, 4);
    CHECK_THROWS_AS(metric::evaluate_pair(f, small, vi), DimensionError);
}

TEST_CASE("metric CSV carries the documented header and a mean row") {
    std::vector<metric::MetricRow> rows;
    metric::MetricRow r1{"img_a", {1, 2, 3, 4, 5, 6}};
    metric::MetricRow r2{"img_b", {3, 4, 5, 6, 7, 8}};
    rows.push_back(r1);
    rows.push_back(r2);
    const std::string csv = metric::metrics_csv(rows);
    CHECK(csv.rfind("image_id,en,ag,sf,fmi,vif,uiqi\n", 0) == 0);
    CHECK(csv.find("img_a,1,2,3,4,5,6\n") != std::string::npos);
    CHECK(csv.find("mean,2,3,4,5,6,7\n") != std::string::npos);
}
