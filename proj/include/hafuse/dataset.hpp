#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hafuse/image.hpp"
#include "hafuse/rng.hpp"

namespace hafuse::data {

// Registered infrared/visible image pair sharing one identifier.
struct ImagePair {
    std::string id;
    GrayImage ir;
    GrayImage vi;
};

// Loads <root>/ir/*.pgm and <root>/vi/*.pgm matched by file name (sorted by
// id). Missing directories or unmatched/mismatched pairs raise ConfigError /
// DimensionError; unreadable or malformed files raise IoError / ParseError.
std::vector<ImagePair> load_pair_dataset(const std::string& root);

// Writes pairs to <root>/ir/<id>.pgm and <root>/vi/<id>.pgm, creating
// directories as needed.
void write_dataset(const std::string& root, const std::vector<ImagePair>& pairs);

// Cuts every pair into size x size tiles on the aligned grid (offsets are
// multiples of stride, identical in both images; remainders at the
// right/bottom are dropped), then applies one seeded shuffle to the collected
// tiles. Images smaller than size are skipped with a warning on stderr; if
// all are skipped the result is empty. Tile ids are "<id>#<y>_<x>".
std::vector<ImagePair> crop_patches(const std::vector<ImagePair>& pairs, int64_t size,
                                    int64_t stride, uint64_t seed);

struct SyntheticDataset {
    std::vector<ImagePair> pairs;
    // One mask per pair, h*w bytes, 1 where a hot blob dominates.
    std::vector<std::vector<uint8_t>> blob_masks;
};

// Procedural pairs with the contrast structure the fusion task assumes:
// the infrared image is a smooth low-intensity background with bright blobs,
// the visible image carries oriented gratings and step edges with the blob
// regions dimmed. Every pixel is snapped to the 8-bit grid so PGM round trips
// are exact. Construction is checked per pair: blob regions must be brighter
// in ir than in vi, and vi must carry more gradient energy than ir.
SyntheticDataset make_synthetic(int64_t n, int64_t size, uint64_t seed);

} // namespace hafuse::data
