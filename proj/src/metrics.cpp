#include "hafuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "hafuse/rng.hpp"
#include "hafuse/sobel_core.hpp"

namespace hafuse::metric {

namespace {

struct DPlane {
    int64_t h = 0, w = 0;
    std::vector<double> pix;
    DPlane() = default;
    DPlane(int64_t h_, int64_t w_) : h(h_), w(w_), pix(static_cast<size_t>(h_ * w_), 0.0) {}
    double at(int64_t y, int64_t x) const { return pix[static_cast<size_t>(y * w + x)]; }
    double& at(int64_t y, int64_t x) { return pix[static_cast<size_t>(y * w + x)]; }
};

// 8-bit quantized view on the 0..255 scale; all metrics start here.
DPlane q255(const data::GrayImage& img) {
    DPlane p(img.h, img.w);
    for (size_t i = 0; i < img.pix.size(); ++i)
        p.pix[i] = static_cast<double>(data::quantize8(img.pix[i]));
    return p;
}

void check_same_size(const data::GrayImage& a, const data::GrayImage& b, const char* what) {
    if (a.h != b.h || a.w != b.w)
        throw DimensionError(std::string(what) + ": images differ in size (" + std::to_string(a.w) +
                             "x" + std::to_string(a.h) + " vs " + std::to_string(b.w) + "x" +
                             std::to_string(b.h) + ")");
}

double entropy_bits(const std::vector<double>& hist, double total) {
    double h = 0;
    for (double n : hist) {
        if (n <= 0) continue;
        double p = n / total;
        h -= p * std::log2(p);
    }
    return h;
}

} // namespace

double metric_en(const data::GrayImage& img) {
    DPlane p = q255(img);
    std::vector<double> hist(256, 0.0);
    for (double v : p.pix) hist[static_cast<size_t>(v)] += 1.0;
    return entropy_bits(hist, static_cast<double>(p.pix.size()));
}

double metric_ag(const data::GrayImage& img) {
    DPlane p = q255(img);
    if (p.h < 2 || p.w < 2) return 0.0;
    double acc = 0;
    for (int64_t y = 0; y < p.h - 1; ++y)
        for (int64_t x = 0; x < p.w - 1; ++x) {
            double dx = p.at(y, x + 1) - p.at(y, x);
            double dy = p.at(y + 1, x) - p.at(y, x);
            acc += std::sqrt((dx * dx + dy * dy) / 2.0);
        }
    return acc / static_cast<double>((p.h - 1) * (p.w - 1));
}

double metric_sf(const data::GrayImage& img) {
    DPlane p = q255(img);
    double rf = 0, cf = 0;
    if (p.w >= 2) {
        double acc = 0;
        for (int64_t y = 0; y < p.h; ++y)
            for (int64_t x = 1; x < p.w; ++x) {
                double d = p.at(y, x) - p.at(y, x - 1);
                acc += d * d;
            }
        rf = acc / static_cast<double>(p.h * (p.w - 1));
    }
    if (p.h >= 2) {
        double acc = 0;
        for (int64_t y = 1; y < p.h; ++y)
            for (int64_t x = 0; x < p.w; ++x) {
                double d = p.at(y, x) - p.at(y - 1, x);
                acc += d * d;
            }
        cf = acc / static_cast<double>((p.h - 1) * p.w);
    }
    return std::sqrt(rf + cf);
}

namespace {

// Mean universal quality index of two planes over sliding 8x8 windows.
double uiqi_pair(const DPlane& x, const DPlane& y) {
    constexpr int64_t K = 8;
    if (x.h < K || x.w < K) return 1.0; // no full window: degenerate, identity score
    const double n = static_cast<double>(K * K);
    double acc = 0;
    int64_t used = 0;
    for (int64_t wy = 0; wy + K <= x.h; ++wy)
        for (int64_t wx = 0; wx + K <= x.w; ++wx) {
            double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
            for (int64_t dy = 0; dy < K; ++dy)
                for (int64_t dx = 0; dx < K; ++dx) {
                    double a = x.at(wy + dy, wx + dx);
                    double b = y.at(wy + dy, wx + dx);
                    sx += a;
                    sy += b;
                    sxx += a * a;
                    syy += b * b;
                    sxy += a * b;
                }
            double mx = sx / n, my = sy / n;
            double vx = sxx / n - mx * mx;
            double vy = syy / n - my * my;
            double cxy = sxy / n - mx * my;
            double den = (vx + vy) * (mx * mx + my * my);
            if (den == 0) continue;
            acc += 4.0 * cxy * mx * my / den;
            ++used;
        }
    if (used == 0) return 1.0;
    return acc / static_cast<double>(used);
}

} // namespace

double metric_uiqi(const data::GrayImage& fused, const data::GrayImage& a,
                   const data::GrayImage& b) {
    check_same_size(fused, a, "uiqi");
    check_same_size(fused, b, "uiqi");
    DPlane f = q255(fused);
    return 0.5 * (uiqi_pair(f, q255(a)) + uiqi_pair(f, q255(b)));
}

namespace {

DPlane sobel_features(const DPlane& p) {
    DPlane out(p.h, p.w);
    std::vector<double> gx(p.pix.size()), gy(p.pix.size());
    sobel_magnitude_plane(p.pix.data(), p.h, p.w, out.pix.data(), gx.data(), gy.data());
    return out;
}

std::vector<int> bin64(const DPlane& p) {
    double lo = p.pix[0], hi = p.pix[0];
    for (double v : p.pix) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::vector<int> bins(p.pix.size(), 0);
    if (hi > lo) {
        for (size_t i = 0; i < p.pix.size(); ++i) {
            int b = static_cast<int>((p.pix[i] - lo) / (hi - lo) * 64.0);
            bins[i] = std::min(b, 63);
        }
    }
    return bins;
}

double fmi_pair(const DPlane& f_feat, const DPlane& x_feat) {
    std::vector<int> bf = bin64(f_feat);
    std::vector<int> bx = bin64(x_feat);
    std::vector<double> hf(64, 0.0), hx(64, 0.0), hj(64 * 64, 0.0);
    for (size_t i = 0; i < bf.size(); ++i) {
        hf[static_cast<size_t>(bf[i])] += 1.0;
        hx[static_cast<size_t>(bx[i])] += 1.0;
        hj[static_cast<size_t>(bf[i] * 64 + bx[i])] += 1.0;
    }
    const double total = static_cast<double>(bf.size());
    double ef = entropy_bits(hf, total);
    double ex = entropy_bits(hx, total);
    double ej = entropy_bits(hj, total);
    if (ef + ex <= 0) return 1.0; // both features constant: degenerate identity
    double mi = ef + ex - ej;
    return 2.0 * mi / (ef + ex);
}

} // namespace

double metric_fmi(const data::GrayImage& fused, const data::GrayImage& a,
                  const data::GrayImage& b) {
    check_same_size(fused, a, "fmi");
    check_same_size(fused, b, "fmi");
    DPlane f = sobel_features(q255(fused));
    return 0.5 * (fmi_pair(f, sobel_features(q255(a))) + fmi_pair(f, sobel_features(q255(b))));
}

namespace {

// One Gaussian-pyramid step: separable 5-tap binomial blur with replicate
// edges, then keep the even-index rows and columns.
DPlane blur_decimate(const DPlane& p) {
    static const double k[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
    DPlane tmp(p.h, p.w);
    for (int64_t y = 0; y < p.h; ++y)
        for (int64_t x = 0; x < p.w; ++x) {
            double acc = 0;
            for (int t = -2; t <= 2; ++t) {
                int64_t xx = std::clamp<int64_t>(x + t, 0, p.w - 1);
                acc += k[t + 2] * p.at(y, xx);
            }
            tmp.at(y, x) = acc;
        }
    DPlane blurred(p.h, p.w);
    for (int64_t y = 0; y < p.h; ++y)
        for (int64_t x = 0; x < p.w; ++x) {
            double acc = 0;
            for (int t = -2; t <= 2; ++t) {
                int64_t yy = std::clamp<int64_t>(y + t, 0, p.h - 1);
                acc += k[t + 2] * tmp.at(yy, x);
            }
            blurred.at(y, x) = acc;
        }
    DPlane out((p.h + 1) / 2, (p.w + 1) / 2);
    for (int64_t y = 0; y < out.h; ++y)
        for (int64_t x = 0; x < out.w; ++x) out.at(y, x) = blurred.at(2 * y, 2 * x);
    return out;
}

double vif_pair(DPlane ref, DPlane dist) {
    constexpr int kScales = 4;
    constexpr int64_t K = 3;
    constexpr double kNoiseVar = 2.0;
    const double n = static_cast<double>(K * K);
    double num = 0, den = 0;
    for (int scale = 0; scale < kScales; ++scale) {
        if (scale > 0) {
            ref = blur_decimate(ref);
            dist = blur_decimate(dist);
        }
        if (ref.h < K || ref.w < K) break;
        for (int64_t wy = 0; wy + K <= ref.h; ++wy)
            for (int64_t wx = 0; wx + K <= ref.w; ++wx) {
                double sr = 0, sd = 0, srr = 0, srd = 0;
                for (int64_t dy = 0; dy < K; ++dy)
                    for (int64_t dx = 0; dx < K; ++dx) {
                        double r = ref.at(wy + dy, wx + dx);
                        double d = dist.at(wy + dy, wx + dx);
                        sr += r;
                        sd += d;
                        srr += r * r;
                        srd += r * d;
                    }
                double mr = sr / n, md = sd / n;
                double vr = srr / n - mr * mr;
                double cov = srd / n - mr * md;
                double g = vr > 1e-10 ? cov / vr : 0.0;
                num += std::log2(1.0 + g * g * vr / kNoiseVar);
                den += std::log2(1.0 + vr / kNoiseVar);
            }
    }
    if (den == 0) return 1.0; // constant reference everywhere: degenerate identity
    return num / den;
}

} // namespace

double metric_vif(const data::GrayImage& fused, const data::GrayImage& a,
                  const data::GrayImage& b) {
    check_same_size(fused, a, "vif");
    check_same_size(fused, b, "vif");
    DPlane f = q255(fused);
    return 0.5 * (vif_pair(q255(a), f) + vif_pair(q255(b), f));
}

data::GrayImage add_gaussian_noise(const data::GrayImage& img, const NoiseSpec& spec) {
    if (spec.variance < 0) throw ParameterError("noise variance must be >= 0");
    if (spec.variance == 0) return img;
    Rng rng(spec.seed);
    const float sd = static_cast<float>(std::sqrt(spec.variance));
    data::GrayImage out(img.h, img.w);
    for (size_t i = 0; i < img.pix.size(); ++i) {
        float v = img.pix[i] + sd * static_cast<float>(rng.normal());
        out.pix[i] = std::clamp(v, 0.0f, 1.0f);
    }
    return out;
}

MetricReport evaluate_pair(const data::GrayImage& fused, const data::GrayImage& ir,
                           const data::GrayImage& vi) {
    check_same_size(fused, ir, "evaluate_pair");
    check_same_size(fused, vi, "evaluate_pair");
    MetricReport r;
    r.en = metric_en(fused);
    r.ag = metric_ag(fused);
    r.sf = metric_sf(fused);
    r.fmi = metric_fmi(fused, ir, vi);
    r.vif = metric_vif(fused, ir, vi);
    r.uiqi = metric_uiqi(fused, ir, vi);
    return r;
}

std::string metrics_csv(const std::vector<MetricRow>& rows) {
    std::string out = "image_id,en,ag,sf,fmi,vif,uiqi\n";
    char buf[256];
    MetricReport mean;
    for (const auto& row : rows) {
        const MetricReport& m = row.report;
        std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                      row.image_id.c_str(), m.en, m.ag, m.sf, m.fmi, m.vif, m.uiqi);
        out += buf;
        mean.en += m.en;
        mean.ag += m.ag;
        mean.sf += m.sf;
        mean.fmi += m.fmi;
        mean.vif += m.vif;
        mean.uiqi += m.uiqi;
    }
    if (!rows.empty()) {
        const double n = static_cast<double>(rows.size());
        std::snprintf(buf, sizeof(buf), "mean,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", mean.en / n,
                      mean.ag / n, mean.sf / n, mean.fmi / n, mean.vif / n, mean.uiqi / n);
        out += buf;
    }
    return out;
}

} // namespace hafuse::metric
