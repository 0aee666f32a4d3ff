#pragma once

#include <map>
#include <string>

#include "hafuse/metrics.hpp"
#include "hafuse/trainer.hpp"

namespace hafuse::cli {

// Everything a run can configure from one flat key=value file. patch_stride 0
// means "use patch_size" (non-overlapping tiling).
struct RunSettings {
    train::TrainConfig train;
    metric::NoiseSpec noise;
    int64_t patch_stride = 0;
};

// Parses "key = value" lines; '#' starts a comment, blank lines are ignored.
// Malformed lines raise ParseError naming the line number.
std::map<std::string, std::string> parse_kv_file(const std::string& path);
std::map<std::string, std::string> parse_kv_text(const std::string& text,
                                                 const std::string& origin);

// Applies parsed keys onto the settings. Unknown keys and malformed values
// raise ConfigError. The full key list is documented in the README.
void apply_kv(RunSettings& settings, const std::map<std::string, std::string>& kv);

} // namespace hafuse::cli
