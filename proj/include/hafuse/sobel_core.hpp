#pragma once

#include <cmath>
#include <cstdint>

namespace hafuse {

// Shared Sobel kernels: the gradient-magnitude loss and the mutual-information
// feature maps must agree bit-for-bit, so both call into this header.
//
// kx = [[-1,0,1],[-2,0,2],[-1,0,1]] (cross-correlation), ky = transpose(kx),
// zero padding of 1, magnitude = sqrt(gx^2 + gy^2 + delta).
inline constexpr double kSobelDelta = 1e-12;
inline constexpr int kSobelX[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
inline constexpr int kSobelY[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};

template <typename S>
void sobel_plane(const S* in, int64_t h, int64_t w, S* gx, S* gy) {
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            double ax = 0.0, ay = 0.0;
            for (int ky = 0; ky < 3; ++ky) {
                int64_t iy = y + ky - 1;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < 3; ++kx) {
                    int64_t ix = x + kx - 1;
                    if (ix < 0 || ix >= w) continue;
                    double v = static_cast<double>(in[iy * w + ix]);
                    ax += v * kSobelX[ky][kx];
                    ay += v * kSobelY[ky][kx];
                }
            }
            gx[y * w + x] = static_cast<S>(ax);
            gy[y * w + x] = static_cast<S>(ay);
        }
    }
}

template <typename S>
void sobel_magnitude_from_xy(const S* gx, const S* gy, int64_t n, S* mag) {
    for (int64_t i = 0; i < n; ++i) {
        double x = static_cast<double>(gx[i]);
        double y = static_cast<double>(gy[i]);
        mag[i] = static_cast<S>(std::sqrt(x * x + y * y + kSobelDelta));
    }
}

template <typename S>
void sobel_magnitude_plane(const S* in, int64_t h, int64_t w, S* mag, S* gx, S* gy) {
    sobel_plane(in, h, w, gx, gy);
    sobel_magnitude_from_xy(gx, gy, h * w, mag);
}

} // namespace hafuse
