#include "hafuse/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "hafuse/sobel_core.hpp"

namespace fs = std::filesystem;

namespace hafuse::data {

namespace {

std::vector<std::string> list_pgm_ids(const fs::path& dir) {
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        if (entry.path().extension() == ".pgm") ids.push_back(entry.path().stem().string());
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

} // namespace

std::vector<ImagePair> load_pair_dataset(const std::string& root) {
    fs::path ir_dir = fs::path(root) / "ir";
    fs::path vi_dir = fs::path(root) / "vi";
    if (!fs::is_directory(ir_dir) || !fs::is_directory(vi_dir))
        throw ConfigError("dataset root must contain ir/ and vi/ directories: " + root);
    std::vector<std::string> ir_ids = list_pgm_ids(ir_dir);
    std::vector<std::string> vi_ids = list_pgm_ids(vi_dir);
    if (ir_ids != vi_ids) {
        for (const auto& id : ir_ids)
            if (!std::binary_search(vi_ids.begin(), vi_ids.end(), id))
                throw ConfigError("dataset pair '" + id + "' has no visible counterpart");
        for (const auto& id : vi_ids)
            if (!std::binary_search(ir_ids.begin(), ir_ids.end(), id))
                throw ConfigError("dataset pair '" + id + "' has no infrared counterpart");
    }
    std::vector<ImagePair> pairs;
    pairs.reserve(ir_ids.size());
    for (const auto& id : ir_ids) {
        ImagePair p;
        p.id = id;
        p.ir = load_pgm((ir_dir / (id + ".pgm")).string());
        p.vi = load_pgm((vi_dir / (id + ".pgm")).string());
        if (p.ir.h != p.vi.h || p.ir.w != p.vi.w)
            throw DimensionError("dataset pair '" + id + "' has mismatched sizes: ir " +
                                 std::to_string(p.ir.w) + "x" + std::to_string(p.ir.h) + " vs vi " +
                                 std::to_string(p.vi.w) + "x" + std::to_string(p.vi.h));
        pairs.push_back(std::move(p));
    }
    return pairs;
}

void write_dataset(const std::string& root, const std::vector<ImagePair>& pairs) {
    fs::path ir_dir = fs::path(root) / "ir";
    fs::path vi_dir = fs::path(root) / "vi";
    std::error_code ec;
    fs::create_directories(ir_dir, ec);
    fs::create_directories(vi_dir, ec);
    if (!fs::is_directory(ir_dir) || !fs::is_directory(vi_dir))
        throw IoError("cannot create dataset directories under " + root);
    for (const auto& p : pairs) {
        save_pgm((ir_dir / (p.id + ".pgm")).string(), p.ir);
        save_pgm((vi_dir / (p.id + ".pgm")).string(), p.vi);
    }
}

std::vector<ImagePair> crop_patches(const std::vector<ImagePair>& pairs, int64_t size,
                                    int64_t stride, uint64_t seed) {
    if (size <= 0 || stride <= 0)
        throw ParameterError("crop_patches: size and stride must be positive");
    std::vector<ImagePair> tiles;
    int64_t skipped = 0;
    for (const auto& p : pairs) {
        if (p.ir.h < size || p.ir.w < size) {
            ++skipped;
            continue;
        }
        for (int64_t y = 0; y + size <= p.ir.h; y += stride) {
            for (int64_t x = 0; x + size <= p.ir.w; x += stride) {
                ImagePair tile;
                tile.id = p.id + "#" + std::to_string(y) + "_" + std::to_string(x);
                tile.ir = GrayImage(size, size);
                tile.vi = GrayImage(size, size);
                for (int64_t yy = 0; yy < size; ++yy)
                    for (int64_t xx = 0; xx < size; ++xx) {
                        tile.ir.at(yy, xx) = p.ir.at(y + yy, x + xx);
                        tile.vi.at(yy, xx) = p.vi.at(y + yy, x + xx);
                    }
                tiles.push_back(std::move(tile));
            }
        }
    }
    if (skipped > 0)
        std::fprintf(stderr, "warning: skipped %lld image pair(s) smaller than %lldx%lld\n",
                     static_cast<long long>(skipped), static_cast<long long>(size),
                     static_cast<long long>(size));
    Rng rng(seed);
    for (size_t i = tiles.size(); i > 1; --i)
        std::swap(tiles[i - 1], tiles[rng.below(static_cast<uint64_t>(i))]);
    return tiles;
}

namespace {

double sobel_energy(const GrayImage& img) {
    std::vector<double> pix(img.pix.begin(), img.pix.end());
    std::vector<double> mag(pix.size()), gx(pix.size()), gy(pix.size());
    sobel_magnitude_plane(pix.data(), img.h, img.w, mag.data(), gx.data(), gy.data());
    double sum = 0;
    for (double m : mag) sum += m;
    return sum;
}

} // namespace

SyntheticDataset make_synthetic(int64_t n, int64_t size, uint64_t seed) {
    if (n <= 0 || size < 8) throw ParameterError("make_synthetic: need n >= 1 and size >= 8");
    SyntheticDataset out;
    Rng rng(seed);
    const double pi = 3.14159265358979323846;
    for (int64_t i = 0; i < n; ++i) {
        GrayImage ir(size, size), vi(size, size);
        std::vector<uint8_t> mask(static_cast<size_t>(size * size), 0);

        // Smooth low-frequency infrared background, bounded by 0.55.
        double fx1 = rng.uniform(0.5, 1.5), fy1 = rng.uniform(0.5, 1.5), ph1 = rng.uniform(0, 2 * pi);
        double fx2 = rng.uniform(0.5, 1.5), fy2 = rng.uniform(0.5, 1.5), ph2 = rng.uniform(0, 2 * pi);

        // Hot blobs: peak intensity 0.95.
        struct Blob {
            double cx, cy, sigma;
        };
        std::vector<Blob> blobs;
        int64_t nb = 1 + static_cast<int64_t>(rng.below(3));
        for (int64_t b = 0; b < nb; ++b)
            blobs.push_back({rng.uniform(0.2, 0.8) * size, rng.uniform(0.2, 0.8) * size,
                             rng.uniform(size / 10.0, size / 6.0)});

        // Visible texture: one oriented grating plus axis-aligned step edges.
        double theta = rng.uniform(0, pi);
        double freq = rng.uniform(3.0, 6.0);
        double gph = rng.uniform(0, 2 * pi);
        int64_t step_x = static_cast<int64_t>(rng.uniform(0.3, 0.7) * size);
        int64_t step_y = static_cast<int64_t>(rng.uniform(0.3, 0.7) * size);

        for (int64_t y = 0; y < size; ++y) {
            for (int64_t x = 0; x < size; ++x) {
                double u = static_cast<double>(x) / size, v = static_cast<double>(y) / size;
                double bg = 0.275 + 0.125 * std::sin(2 * pi * (fx1 * u + fy1 * v) + ph1) +
                            0.1 * std::sin(2 * pi * (fx2 * u + fy2 * v) + ph2);
                double field = 0;
                for (const auto& b : blobs) {
                    double dx = x - b.cx, dy = y - b.cy;
                    field = std::max(field, 0.95 * std::exp(-(dx * dx + dy * dy) / (2 * b.sigma * b.sigma)));
                }
                double t = field / 0.95;
                ir.at(y, x) = static_cast<float>(bg * (1 - t) + 0.95 * t);
                if (field > 0.35) mask[static_cast<size_t>(y * size + x)] = 1;

                double phase = 2 * pi * freq * (u * std::cos(theta) + v * std::sin(theta)) + gph;
                double tex = 0.15 + 0.3 * (1 + std::sin(phase));
                if (x >= step_x) tex += 0.2;
                if (y >= step_y) tex -= 0.15;
                tex = std::min(1.0, std::max(0.0, tex));
                vi.at(y, x) = static_cast<float>(tex * (1 - 0.7 * t));
            }
        }
        ir = snap_to_grid(ir);
        vi = snap_to_grid(vi);

        double ir_blob = 0, vi_blob = 0;
        int64_t blob_px = 0;
        for (int64_t p = 0; p < size * size; ++p) {
            if (!mask[static_cast<size_t>(p)]) continue;
            ir_blob += ir.pix[static_cast<size_t>(p)];
            vi_blob += vi.pix[static_cast<size_t>(p)];
            ++blob_px;
        }
        if (blob_px == 0 || !(ir_blob / blob_px > vi_blob / blob_px + 0.1))
            throw ContractError("make_synthetic: blob regions are not hotter in ir than in vi");
        if (!(sobel_energy(vi) > sobel_energy(ir)))
            throw ContractError("make_synthetic: visible image lacks gradient dominance");

        ImagePair pair;
        char name[32];
        std::snprintf(name, sizeof(name), "syn%04lld", static_cast<long long>(i));
        pair.id = name;
        pair.ir = std::move(ir);
        pair.vi = std::move(vi);
        out.pairs.push_back(std::move(pair));
        out.blob_masks.push_back(std::move(mask));
    }
    return out;
}

} // namespace hafuse::data
