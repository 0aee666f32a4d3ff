#include "hafuse/config.hpp"

#include <array>
#include <functional>

#include "hafuse/image.hpp" // read_file_bytes

namespace hafuse::cli {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

int64_t to_int(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        int64_t x = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: '" + key + "' wants an integer, got '" + v + "'");
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: '" + key + "' wants a number, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "on") return true;
    if (v == "0" || v == "false" || v == "off") return false;
    throw ConfigError("config: '" + key + "' wants a boolean (0/1/true/false), got '" + v + "'");
}

template <size_t N>
std::array<int, N> to_int_array(const std::string& key, const std::string& v) {
    std::array<int, N> out{};
    size_t pos = 0, idx = 0;
    while (true) {
        size_t comma = v.find(',', pos);
        std::string tok =
            trim(v.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
        if (idx >= N)
            throw ConfigError("config: '" + key + "' wants exactly " + std::to_string(N) +
                              " comma-separated integers");
        out[idx++] = static_cast<int>(to_int(key, tok));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (idx != N)
        throw ConfigError("config: '" + key + "' wants exactly " + std::to_string(N) +
                          " comma-separated integers");
    return out;
}

} // namespace

std::map<std::string, std::string> parse_kv_text(const std::string& text,
                                                 const std::string& origin) {
    std::map<std::string, std::string> kv;
    size_t pos = 0;
    int line_no = 0;
    while (pos <= text.size()) {
        size_t eol = text.find('\n', pos);
        std::string line =
            text.substr(pos, eol == std::string::npos ? std::string::npos : eol - pos);
        ++line_no;
        pos = eol == std::string::npos ? text.size() + 1 : eol + 1;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(origin + ":" + std::to_string(line_no) +
                             ": expected 'key = value', got '" + line + "'");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty() || val.empty())
            throw ParseError(origin + ":" + std::to_string(line_no) + ": empty key or value");
        if (!kv.emplace(key, val).second)
            throw ParseError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + key +
                             "'");
    }
    return kv;
}

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::vector<uint8_t> bytes = data::read_file_bytes(path);
    return parse_kv_text(std::string(bytes.begin(), bytes.end()), path);
}

void apply_kv(RunSettings& s, const std::map<std::string, std::string>& kv) {
    using Setter = std::function<void(const std::string&, const std::string&)>;
    auto& t = s.train;
    const std::map<std::string, Setter> setters = {
        {"train.epochs", [&](auto& k, auto& v) { t.epochs = to_int(k, v); }},
        {"train.batch_size", [&](auto& k, auto& v) { t.batch_size = to_int(k, v); }},
        {"train.lr", [&](auto& k, auto& v) { t.lr = to_double(k, v); }},
        {"train.dd_steps", [&](auto& k, auto& v) { t.dd_steps = static_cast<int>(to_int(k, v)); }},
        {"train.ds_steps", [&](auto& k, auto& v) { t.ds_steps = static_cast<int>(to_int(k, v)); }},
        {"train.g_steps", [&](auto& k, auto& v) { t.g_steps = static_cast<int>(to_int(k, v)); }},
        {"train.seed", [&](auto& k, auto& v) { t.seed = static_cast<uint64_t>(to_int(k, v)); }},
        {"train.patch_size", [&](auto& k, auto& v) { t.patch_size = to_int(k, v); }},
        {"train.patch_stride", [&](auto& k, auto& v) { s.patch_stride = to_int(k, v); }},
        {"train.variant", [&](auto&, auto& v) { t.combo = train::combo_from_name(v); }},
        {"train.checkpoint_every", [&](auto& k, auto& v) { t.checkpoint_every = to_int(k, v); }},
        {"adam.beta1", [&](auto& k, auto& v) { t.adam.beta1 = to_double(k, v); }},
        {"adam.beta2", [&](auto& k, auto& v) { t.adam.beta2 = to_double(k, v); }},
        {"adam.eps", [&](auto& k, auto& v) { t.adam.eps = to_double(k, v); }},
        {"loss.alpha", [&](auto& k, auto& v) { t.weights.alpha = to_double(k, v); }},
        {"loss.beta", [&](auto& k, auto& v) { t.weights.beta = to_double(k, v); }},
        {"loss.gamma", [&](auto& k, auto& v) { t.weights.gamma = to_double(k, v); }},
        {"gen.scales", [&](auto& k, auto& v) { t.gen.scales = static_cast<int>(to_int(k, v)); }},
        {"gen.base_channels",
         [&](auto& k, auto& v) { t.gen.base_channels = static_cast<int>(to_int(k, v)); }},
        {"gen.eb_kernel_a",
         [&](auto& k, auto& v) { t.gen.eb_kernel_a = static_cast<int>(to_int(k, v)); }},
        {"gen.eb_kernel_b",
         [&](auto& k, auto& v) { t.gen.eb_kernel_b = static_cast<int>(to_int(k, v)); }},
        {"gen.leaky_slope", [&](auto& k, auto& v) { t.gen.leaky_slope = to_double(k, v); }},
        {"gen.use_sampling", [&](auto& k, auto& v) { t.gen.use_sampling = to_bool(k, v); }},
        {"gen.use_skip", [&](auto& k, auto& v) { t.gen.use_skip = to_bool(k, v); }},
        {"gen.use_afs", [&](auto& k, auto& v) { t.gen.use_afs = to_bool(k, v); }},
        {"gen.afs_eps", [&](auto& k, auto& v) { t.gen.afs_eps = to_double(k, v); }},
        {"gen.afs_gmp_joint", [&](auto& k, auto& v) { t.gen.afs_gmp_joint = to_bool(k, v); }},
        {"ds.attn_scales",
         [&](auto& k, auto& v) { t.salient.attn_scales = static_cast<int>(to_int(k, v)); }},
        {"ds.ca_kernel",
         [&](auto& k, auto& v) { t.salient.ca_kernel = static_cast<int>(to_int(k, v)); }},
        {"ds.conv_channels",
         [&](auto& k, auto& v) { t.salient.conv_channels = to_int_array<4>(k, v); }},
        {"ds.fc_hidden",
         [&](auto& k, auto& v) { t.salient.fc_hidden = static_cast<int>(to_int(k, v)); }},
        {"ds.leaky_slope", [&](auto& k, auto& v) { t.salient.leaky_slope = to_double(k, v); }},
        {"ds.use_attention", [&](auto& k, auto& v) { t.salient.use_attention = to_bool(k, v); }},
        {"dd.attn_scales",
         [&](auto& k, auto& v) { t.detailed.attn_scales = static_cast<int>(to_int(k, v)); }},
        {"dd.sa_reduction",
         [&](auto& k, auto& v) { t.detailed.sa_reduction = static_cast<int>(to_int(k, v)); }},
        {"dd.patch_channels",
         [&](auto& k, auto& v) { t.detailed.patch_channels = to_int_array<5>(k, v); }},
        {"dd.patch_strides",
         [&](auto& k, auto& v) { t.detailed.patch_strides = to_int_array<5>(k, v); }},
        {"dd.patch_kernel",
         [&](auto& k, auto& v) { t.detailed.patch_kernel = static_cast<int>(to_int(k, v)); }},
        {"dd.leaky_slope", [&](auto& k, auto& v) { t.detailed.leaky_slope = to_double(k, v); }},
        {"dd.use_attention", [&](auto& k, auto& v) { t.detailed.use_attention = to_bool(k, v); }},
        {"dd.layers", [&](auto& k, auto& v) { t.detailed.layers = static_cast<int>(to_int(k, v)); }},
        {"noise.variance", [&](auto& k, auto& v) { s.noise.variance = to_double(k, v); }},
        {"noise.seed",
         [&](auto& k, auto& v) { s.noise.seed = static_cast<uint64_t>(to_int(k, v)); }},
    };
    for (const auto& [key, value] : kv) {
        auto it = setters.find(key);
        if (it == setters.end()) throw ConfigError("config: unknown key '" + key + "'");
        it->second(key, value);
    }
}

} // namespace hafuse::cli
