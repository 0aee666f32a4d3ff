#include "hafuse/checkpoint.hpp"

#include <array>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <map>
#include <sstream>

#include "hafuse/image.hpp" // read_file_bytes / write_file_bytes

namespace hafuse::data {

namespace {

constexpr const char* kMagic = "HAFUSE-CKPT-1";

std::string fmt_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

template <typename C>
std::string fmt_ints(const C& xs) {
    std::string s;
    bool first = true;
    for (auto x : xs) {
        if (!first) s += ",";
        s += std::to_string(x);
        first = false;
    }
    return s;
}

const char* side_kind_name(SideKind k) {
    switch (k) {
        case SideKind::none: return "none";
        case SideKind::salient: return "salient";
        case SideKind::detailed: return "detailed";
    }
    return "none";
}

void emit_side(std::ostringstream& m, const std::string& sec, const SideSnapshot& side) {
    m << sec << ".kind " << side_kind_name(side.kind) << "\n";
    if (side.kind == SideKind::salient) {
        const auto& c = side.salient;
        m << sec << ".attn_scales " << c.attn_scales << "\n";
        m << sec << ".ca_kernel " << c.ca_kernel << "\n";
        m << sec << ".conv_channels " << fmt_ints(c.conv_channels) << "\n";
        m << sec << ".fc_hidden " << c.fc_hidden << "\n";
        m << sec << ".leaky_slope " << fmt_double(c.leaky_slope) << "\n";
        m << sec << ".input_side " << c.input_side << "\n";
        m << sec << ".use_attention " << (c.use_attention ? 1 : 0) << "\n";
    } else if (side.kind == SideKind::detailed) {
        const auto& c = side.detailed;
        m << sec << ".attn_scales " << c.attn_scales << "\n";
        m << sec << ".sa_reduction " << c.sa_reduction << "\n";
        m << sec << ".patch_channels " << fmt_ints(c.patch_channels) << "\n";
        m << sec << ".patch_strides " << fmt_ints(c.patch_strides) << "\n";
        m << sec << ".patch_kernel " << c.patch_kernel << "\n";
        m << sec << ".leaky_slope " << fmt_double(c.leaky_slope) << "\n";
        m << sec << ".use_attention " << (c.use_attention ? 1 : 0) << "\n";
        m << sec << ".layers " << c.layers << "\n";
    }
}

void append_f32_le(std::vector<uint8_t>& payload, const std::vector<float>& xs) {
    for (float x : xs) {
        uint32_t bits;
        std::memcpy(&bits, &x, 4);
        payload.push_back(static_cast<uint8_t>(bits & 0xff));
        payload.push_back(static_cast<uint8_t>((bits >> 8) & 0xff));
        payload.push_back(static_cast<uint8_t>((bits >> 16) & 0xff));
        payload.push_back(static_cast<uint8_t>((bits >> 24) & 0xff));
    }
}

float read_f32_le(const uint8_t* p) {
    uint32_t bits = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
                    (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
    float x;
    std::memcpy(&x, &bits, 4);
    return x;
}

} // namespace

uint64_t fnv1a64(const uint8_t* bytes, size_t n) {
    uint64_t h = 14695981039346656037ULL;
    for (size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
    }
    return h;
}

std::vector<uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    std::ostringstream m;
    m << kMagic << "\n";
    m << "variant " << ckpt.variant << "\n";
    m << "seed " << ckpt.seed << "\n";
    m << "step " << ckpt.step << "\n";

    const auto& g = ckpt.gen_cfg;
    m << "gen.scales " << g.scales << "\n";
    m << "gen.base_channels " << g.base_channels << "\n";
    m << "gen.eb_kernel_a " << g.eb_kernel_a << "\n";
    m << "gen.eb_kernel_b " << g.eb_kernel_b << "\n";
    m << "gen.leaky_slope " << fmt_double(g.leaky_slope) << "\n";
    m << "gen.use_sampling " << (g.use_sampling ? 1 : 0) << "\n";
    m << "gen.use_skip " << (g.use_skip ? 1 : 0) << "\n";
    m << "gen.use_afs " << (g.use_afs ? 1 : 0) << "\n";
    m << "gen.afs_eps " << fmt_double(g.afs_eps) << "\n";
    m << "gen.afs_gmp_joint " << (g.afs_gmp_joint ? 1 : 0) << "\n";
    emit_side(m, "ir_side", ckpt.ir_side);
    emit_side(m, "vi_side", ckpt.vi_side);

    // Sections are emitted in lexicographic order (gen < ir_side < vi_side)
    // and each ParamSet map iterates its keys sorted, so the combined tensor
    // key sequence is globally sorted.
    std::vector<uint8_t> payload;
    auto emit_tensors = [&](const std::string& sec, const nn::ParamSet<float>& ps) {
        for (const auto& [key, arr] : ps.tensors) {
            m << "tensor " << sec << "/" << key << " " << arr.shape.b << " " << arr.shape.c << " "
              << arr.shape.h << " " << arr.shape.w << " " << payload.size() << "\n";
            append_f32_le(payload, arr.data);
        }
    };
    emit_tensors("gen", ckpt.gen);
    if (ckpt.ir_side.kind != SideKind::none) emit_tensors("ir_side", ckpt.ir_side.params);
    if (ckpt.vi_side.kind != SideKind::none) emit_tensors("vi_side", ckpt.vi_side.params);

    char sum[32];
    std::snprintf(sum, sizeof(sum), "%016" PRIx64, fnv1a64(payload.data(), payload.size()));
    m << "checksum " << sum << "\n";
    m << "payload " << payload.size() << "\n";

    std::string head = m.str();
    std::vector<uint8_t> out(head.begin(), head.end());
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

namespace {

// Key-value view of the manifest with consume-on-read semantics so that
// leftover (unknown) keys can be rejected.
struct Manifest {
    std::map<std::string, std::string> kv;
    struct TensorEntry {
        std::string key;
        Shape shape;
        size_t offset;
    };
    std::vector<TensorEntry> tensors;

    std::string take(const std::string& key) {
        auto it = kv.find(key);
        if (it == kv.end()) throw ParseError("checkpoint: missing key '" + key + "'");
        std::string v = it->second;
        kv.erase(it);
        return v;
    }
    bool has(const std::string& key) const { return kv.count(key) != 0; }
    int64_t take_int(const std::string& key) {
        std::string v = take(key);
        try {
            size_t used = 0;
            int64_t x = std::stoll(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return x;
        } catch (const std::exception&) {
            throw ParseError("checkpoint: bad integer for '" + key + "': " + v);
        }
    }
    double take_double(const std::string& key) {
        std::string v = take(key);
        try {
            size_t used = 0;
            double x = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return x;
        } catch (const std::exception&) {
            throw ParseError("checkpoint: bad number for '" + key + "': " + v);
        }
    }
    bool take_bool(const std::string& key) {
        int64_t v = take_int(key);
        if (v != 0 && v != 1) throw ParseError("checkpoint: bad flag for '" + key + "'");
        return v == 1;
    }
    template <size_t N>
    std::array<int, N> take_int_array(const std::string& key) {
        std::vector<int64_t> xs = take_ints(key);
        if (xs.size() != N)
            throw ParseError("checkpoint: '" + key + "' must list exactly " + std::to_string(N) +
                             " integers");
        std::array<int, N> out{};
        for (size_t i = 0; i < N; ++i) out[i] = static_cast<int>(xs[i]);
        return out;
    }
    std::vector<int64_t> take_ints(const std::string& key) {
        std::string v = take(key);
        std::vector<int64_t> xs;
        size_t pos = 0;
        while (pos <= v.size()) {
            size_t comma = v.find(',', pos);
            std::string tok = v.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
            try {
                size_t used = 0;
                xs.push_back(std::stoll(tok, &used));
                if (used != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw ParseError("checkpoint: bad integer list for '" + key + "': " + v);
            }
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        return xs;
    }
};

SideSnapshot parse_side(Manifest& mf, const std::string& sec) {
    SideSnapshot side;
    std::string kind = mf.take(sec + ".kind");
    if (kind == "none") {
        side.kind = SideKind::none;
        return side;
    }
    if (kind == "salient") {
        side.kind = SideKind::salient;
        auto& c = side.salient;
        c.attn_scales = static_cast<int>(mf.take_int(sec + ".attn_scales"));
        c.ca_kernel = static_cast<int>(mf.take_int(sec + ".ca_kernel"));
        c.conv_channels = mf.take_int_array<4>(sec + ".conv_channels");
        c.fc_hidden = static_cast<int>(mf.take_int(sec + ".fc_hidden"));
        c.leaky_slope = mf.take_double(sec + ".leaky_slope");
        c.input_side = static_cast<int>(mf.take_int(sec + ".input_side"));
        c.use_attention = mf.take_bool(sec + ".use_attention");
    } else if (kind == "detailed") {
        side.kind = SideKind::detailed;
        auto& c = side.detailed;
        c.attn_scales = static_cast<int>(mf.take_int(sec + ".attn_scales"));
        c.sa_reduction = static_cast<int>(mf.take_int(sec + ".sa_reduction"));
        c.patch_channels = mf.take_int_array<5>(sec + ".patch_channels");
        c.patch_strides = mf.take_int_array<5>(sec + ".patch_strides");
        c.patch_kernel = static_cast<int>(mf.take_int(sec + ".patch_kernel"));
        c.leaky_slope = mf.take_double(sec + ".leaky_slope");
        c.use_attention = mf.take_bool(sec + ".use_attention");
        c.layers = static_cast<int>(mf.take_int(sec + ".layers"));
    } else {
        throw ParseError("checkpoint: unknown side kind '" + kind + "'");
    }
    return side;
}

} // namespace

Checkpoint parse_checkpoint(const uint8_t* bytes, size_t n) {
    // Split the text manifest from the binary payload.
    Manifest mf;
    size_t pos = 0;
    size_t line_no = 0;
    size_t payload_start = 0;
    size_t payload_size = 0;
    std::string checksum_hex;
    bool magic_seen = false;
    bool payload_seen = false;
    while (pos < n && !payload_seen) {
        size_t eol = pos;
        while (eol < n && bytes[eol] != '\n') ++eol;
        if (eol == n) throw ParseError("checkpoint: unterminated manifest line " + std::to_string(line_no + 1));
        std::string line(reinterpret_cast<const char*>(bytes + pos), eol - pos);
        ++line_no;
        pos = eol + 1;
        if (line_no == 1) {
            if (line != kMagic) throw ParseError("checkpoint: bad magic '" + line + "'");
            magic_seen = true;
            continue;
        }
        size_t sp = line.find(' ');
        if (sp == std::string::npos)
            throw ParseError("checkpoint: malformed manifest line " + std::to_string(line_no));
        std::string key = line.substr(0, sp);
        std::string val = line.substr(sp + 1);
        if (key == "tensor") {
            std::istringstream ts(val);
            Manifest::TensorEntry e;
            long long b, c, h, w, off;
            if (!(ts >> e.key >> b >> c >> h >> w >> off) || b < 1 || c < 1 || h < 1 || w < 1 || off < 0)
                throw ParseError("checkpoint: malformed tensor line " + std::to_string(line_no));
            e.shape = Shape{b, c, h, w};
            e.offset = static_cast<size_t>(off);
            mf.tensors.push_back(std::move(e));
        } else if (key == "checksum") {
            checksum_hex = val;
        } else if (key == "payload") {
            payload_size = static_cast<size_t>(std::stoll(val));
            payload_start = pos;
            payload_seen = true;
        } else {
            if (mf.kv.count(key))
                throw ParseError("checkpoint: duplicate key '" + key + "'");
            mf.kv[key] = val;
        }
    }
    if (!magic_seen || !payload_seen) throw ParseError("checkpoint: missing magic or payload marker");
    if (n - payload_start != payload_size)
        throw ParseError("checkpoint: payload size mismatch (declared " + std::to_string(payload_size) +
                         ", have " + std::to_string(n - payload_start) + ")");
    if (checksum_hex.empty()) throw ParseError("checkpoint: missing checksum");
    char sum[32];
    std::snprintf(sum, sizeof(sum), "%016" PRIx64, fnv1a64(bytes + payload_start, payload_size));
    if (checksum_hex != sum)
        throw ParseError("checkpoint: checksum mismatch (manifest " + checksum_hex + ", payload " + sum + ")");

    Checkpoint ckpt;
    ckpt.variant = mf.take("variant");
    ckpt.seed = static_cast<uint64_t>(mf.take_int("seed"));
    ckpt.step = mf.take_int("step");
    auto& g = ckpt.gen_cfg;
    g.scales = static_cast<int>(mf.take_int("gen.scales"));
    g.base_channels = static_cast<int>(mf.take_int("gen.base_channels"));
    g.eb_kernel_a = static_cast<int>(mf.take_int("gen.eb_kernel_a"));
    g.eb_kernel_b = static_cast<int>(mf.take_int("gen.eb_kernel_b"));
    g.leaky_slope = mf.take_double("gen.leaky_slope");
    g.use_sampling = mf.take_bool("gen.use_sampling");
    g.use_skip = mf.take_bool("gen.use_skip");
    g.use_afs = mf.take_bool("gen.use_afs");
    g.afs_eps = mf.take_double("gen.afs_eps");
    g.afs_gmp_joint = mf.take_bool("gen.afs_gmp_joint");
    ckpt.ir_side = parse_side(mf, "ir_side");
    ckpt.vi_side = parse_side(mf, "vi_side");
    if (!mf.kv.empty())
        throw ParseError("checkpoint: unknown key '" + mf.kv.begin()->first + "'");

    for (const auto& e : mf.tensors) {
        size_t count = static_cast<size_t>(e.shape.count());
        if (e.offset + count * 4 > payload_size)
            throw ParseError("checkpoint: tensor '" + e.key + "' overruns payload");
        Array<float> arr;
        arr.shape = e.shape;
        arr.data.resize(count);
        for (size_t i = 0; i < count; ++i)
            arr.data[i] = read_f32_le(bytes + payload_start + e.offset + i * 4);
        size_t slash = e.key.find('/');
        if (slash == std::string::npos)
            throw ParseError("checkpoint: tensor key '" + e.key + "' lacks a section");
        std::string sec = e.key.substr(0, slash);
        std::string sub = e.key.substr(slash + 1);
        nn::ParamSet<float>* dst = nullptr;
        if (sec == "gen") dst = &ckpt.gen;
        else if (sec == "ir_side") dst = &ckpt.ir_side.params;
        else if (sec == "vi_side") dst = &ckpt.vi_side.params;
        else throw ParseError("checkpoint: unknown tensor section '" + sec + "'");
        if (!dst->tensors.emplace(sub, std::move(arr)).second)
            throw ParseError("checkpoint: duplicate tensor '" + e.key + "'");
    }
    return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::vector<uint8_t> bytes = encode_checkpoint(ckpt);
    write_file_bytes(path, bytes.data(), bytes.size());
}

Checkpoint load_checkpoint(const std::string& path) {
    std::vector<uint8_t> bytes = read_file_bytes(path);
    try {
        return parse_checkpoint(bytes.data(), bytes.size());
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

void load_params_into(nn::ParamSet<float>& dst, const nn::ParamSet<float>& src, const char* what) {
    if (dst.tensors.size() != src.tensors.size())
        throw ParseError(std::string("checkpoint: ") + what + " parameter count mismatch (" +
                         std::to_string(src.tensors.size()) + " stored, " +
                         std::to_string(dst.tensors.size()) + " declared)");
    for (auto& [key, arr] : dst.tensors) {
        auto it = src.tensors.find(key);
        if (it == src.tensors.end())
            throw ParseError(std::string("checkpoint: ") + what + " is missing tensor '" + key +
                             "'");
        if (!(it->second.shape == arr.shape))
            throw DimensionError(std::string("checkpoint: ") + what + " tensor '" + key +
                                 "' has shape " + to_string(it->second.shape) + ", expected " +
                                 to_string(arr.shape));
        arr.data = it->second.data;
    }
}

nn::Generator<float> build_generator(const Checkpoint& ckpt) {
    nn::Generator<float> gen(ckpt.gen_cfg, 1);
    load_params_into(gen.params(), ckpt.gen, "generator");
    return gen;
}

} // namespace hafuse::data
