#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hafuse/array.hpp"
#include "hafuse/errors.hpp"

namespace hafuse::data {

// Single-channel image with pixel values in [0, 1].
struct GrayImage {
    int64_t h = 0;
    int64_t w = 0;
    std::vector<float> pix; // row-major, h*w entries

    GrayImage() = default;
    GrayImage(int64_t h_, int64_t w_, float fill = 0.0f) : h(h_), w(w_), pix(static_cast<size_t>(h_ * w_), fill) {}

    float& at(int64_t y, int64_t x) { return pix[static_cast<size_t>(y * w + x)]; }
    float at(int64_t y, int64_t x) const { return pix[static_cast<size_t>(y * w + x)]; }
    int64_t count() const { return h * w; }
};

// Maps [0,1] intensities onto the 0..255 grid with round-half-up.
uint8_t quantize8(float v);
std::vector<uint8_t> quantize8(const GrayImage& img);

// Snaps every pixel to the nearest representable 8-bit level (k/255).
GrayImage snap_to_grid(const GrayImage& img);

// Binary PGM (P5, maxval 255). Loading maps byte v to v/255 exactly; saving
// quantizes with round-half-up and writes the canonical header
// "P5\n<w> <h>\n255\n" so save -> load -> save is byte-identical.
std::vector<uint8_t> encode_pgm(const GrayImage& img);
GrayImage parse_pgm(const uint8_t* bytes, size_t n);
GrayImage parse_pgm(const std::vector<uint8_t>& bytes);

GrayImage load_pgm(const std::string& path);
void save_pgm(const std::string& path, const GrayImage& img);

// Conversions to the tensor layout (1,1,h,w).
Array<float> image_to_array(const GrayImage& img);
GrayImage array_to_image(const Array<float>& arr); // requires b==1, c==1

std::vector<uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const void* data, size_t n);

} // namespace hafuse::data
