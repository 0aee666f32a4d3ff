#include "hafuse/image.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>

namespace hafuse::data {

uint8_t quantize8(float v) {
    float scaled = v * 255.0f + 0.5f;
    if (!(scaled > 0.0f)) return 0; // catches negatives and NaN
    if (scaled >= 255.0f) return 255;
    return static_cast<uint8_t>(scaled);
}

std::vector<uint8_t> quantize8(const GrayImage& img) {
    std::vector<uint8_t> out(img.pix.size());
    for (size_t i = 0; i < img.pix.size(); ++i) out[i] = quantize8(img.pix[i]);
    return out;
}

GrayImage snap_to_grid(const GrayImage& img) {
    GrayImage out(img.h, img.w);
    for (size_t i = 0; i < img.pix.size(); ++i)
        out.pix[i] = static_cast<float>(quantize8(img.pix[i])) / 255.0f;
    return out;
}

std::vector<uint8_t> encode_pgm(const GrayImage& img) {
    if (img.h <= 0 || img.w <= 0 || img.pix.size() != static_cast<size_t>(img.count()))
        throw ContractError("encode_pgm: image dimensions are inconsistent");
    char header[64];
    int hn = std::snprintf(header, sizeof(header), "P5\n%lld %lld\n255\n",
                           static_cast<long long>(img.w), static_cast<long long>(img.h));
    std::vector<uint8_t> out(header, header + hn);
    std::vector<uint8_t> raster = quantize8(img);
    out.insert(out.end(), raster.begin(), raster.end());
    return out;
}

namespace {

struct Cursor {
    const uint8_t* p;
    size_t n;
    size_t pos = 0;
    bool done() const { return pos >= n; }
    uint8_t peek() const { return p[pos]; }
};

bool is_pgm_space(uint8_t c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

[[noreturn]] void fail(const Cursor& cur, const std::string& what) {
    throw ParseError("pgm: " + what + " at byte " + std::to_string(cur.pos));
}

// Skips whitespace and '#' comments (which run to end of line).
void skip_separators(Cursor& cur) {
    while (!cur.done()) {
        if (is_pgm_space(cur.peek())) {
            ++cur.pos;
        } else if (cur.peek() == '#') {
            while (!cur.done() && cur.peek() != '\n') ++cur.pos;
        } else {
            break;
        }
    }
}

uint64_t read_uint(Cursor& cur, const char* what) {
    skip_separators(cur);
    if (cur.done() || cur.peek() < '0' || cur.peek() > '9')
        fail(cur, std::string("expected unsigned integer for ") + what);
    uint64_t v = 0;
    while (!cur.done() && cur.peek() >= '0' && cur.peek() <= '9') {
        v = v * 10 + (cur.peek() - '0');
        if (v > 1000000000ULL) fail(cur, std::string(what) + " is out of range");
        ++cur.pos;
    }
    return v;
}

} // namespace

GrayImage parse_pgm(const uint8_t* bytes, size_t n) {
    Cursor cur{bytes, n};
    if (n < 2 || bytes[0] != 'P' || bytes[1] != '5') fail(cur, "expected 'P5' magic");
    cur.pos = 2;
    uint64_t w = read_uint(cur, "width");
    uint64_t h = read_uint(cur, "height");
    uint64_t maxval = read_uint(cur, "maxval");
    if (w == 0 || h == 0) fail(cur, "width and height must be positive");
    if (maxval != 255) fail(cur, "maxval must be 255 (got " + std::to_string(maxval) + ")");
    if (cur.done() || !is_pgm_space(cur.peek())) fail(cur, "expected single whitespace after maxval");
    ++cur.pos;
    const size_t need = static_cast<size_t>(w * h);
    if (n - cur.pos < need)
        fail(cur, "truncated raster (need " + std::to_string(need) + " bytes, have " +
                      std::to_string(n - cur.pos) + ")");
    GrayImage img(static_cast<int64_t>(h), static_cast<int64_t>(w));
    for (size_t i = 0; i < need; ++i)
        img.pix[i] = static_cast<float>(bytes[cur.pos + i]) / 255.0f;
    return img;
}

GrayImage parse_pgm(const std::vector<uint8_t>& bytes) {
    return parse_pgm(bytes.data(), bytes.size());
}

std::vector<uint8_t> read_file_bytes(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw IoError("cannot open " + path + ": " + std::strerror(errno));
    std::fseek(f, 0, SEEK_END);
    long size = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    std::vector<uint8_t> bytes(size > 0 ? static_cast<size_t>(size) : 0);
    size_t got = bytes.empty() ? 0 : std::fread(bytes.data(), 1, bytes.size(), f);
    std::fclose(f);
    if (got != bytes.size()) throw IoError("short read from " + path);
    return bytes;
}

void write_file_bytes(const std::string& path, const void* data, size_t n) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot open " + path + " for writing: " + std::strerror(errno));
    size_t put = n == 0 ? 0 : std::fwrite(data, 1, n, f);
    int rc = std::fclose(f);
    if (put != n || rc != 0) throw IoError("short write to " + path);
}

GrayImage load_pgm(const std::string& path) {
    std::vector<uint8_t> bytes = read_file_bytes(path);
    try {
        return parse_pgm(bytes);
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

void save_pgm(const std::string& path, const GrayImage& img) {
    std::vector<uint8_t> bytes = encode_pgm(img);
    write_file_bytes(path, bytes.data(), bytes.size());
}

Array<float> image_to_array(const GrayImage& img) {
    Array<float> arr;
    arr.shape = Shape{1, 1, img.h, img.w};
    arr.data = img.pix;
    return arr;
}

GrayImage array_to_image(const Array<float>& arr) {
    if (arr.shape.b != 1 || arr.shape.c != 1)
        throw DimensionError("array_to_image: expected shape (1,1,h,w), got " + to_string(arr.shape));
    GrayImage img(arr.shape.h, arr.shape.w);
    img.pix = arr.data;
    return img;
}

} // namespace hafuse::data
