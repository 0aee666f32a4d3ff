#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hafuse/discriminator.hpp"
#include "hafuse/generator.hpp"
#include "hafuse/params.hpp"

namespace hafuse::data {

enum class SideKind { none, salient, detailed };

// One adversary slot: which network class fills it, its configuration, and
// its parameters. kind == none means the slot is empty (single-network runs).
struct SideSnapshot {
    SideKind kind = SideKind::none;
    nn::SalientConfig salient;
    nn::DetailedConfig detailed;
    nn::ParamSet<float> params;
};

// Full training state needed to reproduce forward passes bit for bit:
// generator + both adversary slots with their configurations.
struct Checkpoint {
    std::string variant = "full";
    uint64_t seed = 0;
    int64_t step = 0;
    nn::GeneratorConfig gen_cfg;
    nn::ParamSet<float> gen;
    SideSnapshot ir_side;
    SideSnapshot vi_side;
};

// File layout ("HAFUSE-CKPT-1"): a text manifest (config key-value lines and
// one "tensor <key> <b> <c> <h> <w> <offset>" line per parameter, keys in
// lexicographic order), a "checksum <fnv1a64-hex>" line over the payload, a
// "payload <nbytes>" line, then the raw little-endian float32 payload.
// Any payload corruption is caught by the checksum at load time.
std::vector<uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const uint8_t* bytes, size_t n);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

uint64_t fnv1a64(const uint8_t* bytes, size_t n);

// Copies src tensors into dst, validating that keys and shapes line up with
// the architecture that declared dst.
void load_params_into(nn::ParamSet<float>& dst, const nn::ParamSet<float>& src, const char* what);

// Reconstructs the generator a checkpoint describes, ready for inference.
nn::Generator<float> build_generator(const Checkpoint& ckpt);

} // namespace hafuse::data
