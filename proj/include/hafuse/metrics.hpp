#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hafuse/image.hpp"

namespace hafuse::metric {

// Fusion-quality scores. EN, AG and SF describe the fused image alone; FMI,
// VIF and UIQI compare it against both sources. All six run on the 8-bit
// quantized (0..255) scale.
struct MetricReport {
    double en = 0, ag = 0, sf = 0, fmi = 0, vif = 0, uiqi = 0;
};

struct NoiseSpec {
    double variance = 0.03; // on the [0,1] intensity scale
    uint64_t seed = 0;
};

// Shannon entropy (bits) of the 256-bin histogram.
double metric_en(const data::GrayImage& img);

// Mean over interior pixels of sqrt((dx^2 + dy^2) / 2), forward differences.
double metric_ag(const data::GrayImage& img);

// sqrt(RF^2 + CF^2): RMS of horizontal and of vertical first differences.
double metric_sf(const data::GrayImage& img);

// Universal quality index on sliding 8x8 windows, averaged over windows with
// nonzero denominators; score = mean of Q(fused, a) and Q(fused, b). If every
// window is degenerate (constant inputs) the score is 1.
double metric_uiqi(const data::GrayImage& fused, const data::GrayImage& a,
                   const data::GrayImage& b);

// Feature mutual information: Sobel gradient-magnitude maps binned to 64
// levels (per-image min-max), FMI_x = 2 I(F;X) / (H(F) + H(X)), averaged over
// both sources. Degenerate zero-entropy pairs score 1.
double metric_fmi(const data::GrayImage& fused, const data::GrayImage& a,
                  const data::GrayImage& b);

// Pixel-domain visual information fidelity over 4 Gaussian-pyramid scales
// (5-tap binomial filter, replicate edges, decimate by 2): per sliding 3x3
// window with reference variance s2 and gain g = cov/s2, accumulate
// log2(1 + g^2 s2 / 2) over log2(1 + s2 / 2); score = mean over both sources.
double metric_vif(const data::GrayImage& fused, const data::GrayImage& a,
                  const data::GrayImage& b);

// Per-pixel N(0, variance) on the [0,1] scale, seeded, clamped to [0,1].
// variance 0 returns the input unchanged.
data::GrayImage add_gaussian_noise(const data::GrayImage& img, const NoiseSpec& spec);

MetricReport evaluate_pair(const data::GrayImage& fused, const data::GrayImage& ir,
                           const data::GrayImage& vi);

struct MetricRow {
    std::string image_id;
    MetricReport report;
};

// CSV with header image_id,en,ag,sf,fmi,vif,uiqi and a trailing mean row.
std::string metrics_csv(const std::vector<MetricRow>& rows);

} // namespace hafuse::metric
