#include "hafuse/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <numeric>

namespace fs = std::filesystem;

namespace hafuse::train {

const char* combo_name(DiscCombo c) {
    switch (c) {
        case DiscCombo::full: return "full";
        case DiscCombo::only_dd: return "only_DD";
        case DiscCombo::dual_dd: return "dual_DD";
        case DiscCombo::only_ds: return "only_DS";
        case DiscCombo::dual_ds: return "dual_DS";
        case DiscCombo::no_attention: return "no_attention";
    }
    return "full";
}

DiscCombo combo_from_name(const std::string& name) {
    for (DiscCombo c : {DiscCombo::full, DiscCombo::only_dd, DiscCombo::dual_dd, DiscCombo::only_ds,
                        DiscCombo::dual_ds, DiscCombo::no_attention})
        if (name == combo_name(c)) return c;
    throw ConfigError("unknown discriminator variant '" + name +
                      "' (expected full, only_DD, dual_DD, only_DS, dual_DS or no_attention)");
}

const char* phase_name(Phase p) {
    switch (p) {
        case Phase::dd: return "D_D";
        case Phase::ds: return "D_S";
        case Phase::g: return "G";
    }
    return "G";
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(lr > 0)) throw ConfigError("train: lr must be positive");
    if (dd_steps < 1 || ds_steps < 1 || g_steps < 1)
        throw ConfigError("train: per-cycle update counts must be >= 1");
    if (patch_size < 4) throw ConfigError("train: patch_size must be >= 4");
    if (checkpoint_every < 0) throw ConfigError("train: checkpoint_every must be >= 0");
    gen.validate();
    weights.validate();
    adam.validate();
    if (gen.use_sampling) {
        int64_t div = int64_t(1) << (gen.scales - 1);
        if (patch_size % div != 0)
            throw ConfigError("train: patch_size " + std::to_string(patch_size) +
                              " is not divisible by the encoder pooling factor " + std::to_string(div));
    }
}

nn::ParamSet<float>& Trainer::Slot::params() {
    switch (kind) {
        case data::SideKind::salient: return sal->params();
        case data::SideKind::detailed: return det->params();
        case data::SideKind::none: break;
    }
    throw ContractError("trainer: this variant has no adversary in the requested slot");
}

const nn::ParamSet<float>& Trainer::Slot::params() const {
    return const_cast<Slot*>(this)->params();
}

ag::TensorRef<float> Trainer::Slot::prob(ag::Tape<float>& tape, const nn::BoundParams<float>& bound,
                                         ag::TensorRef<float> image) const {
    switch (kind) {
        case data::SideKind::salient: return sal->forward(tape, bound, image);
        case data::SideKind::detailed: return det->forward(tape, bound, image).prob;
        case data::SideKind::none: break;
    }
    throw ContractError("trainer: this variant has no adversary in the requested slot");
}

namespace {

double batch_mean(ag::TensorRef<float> ref) {
    if (!ref.valid()) return std::numeric_limits<double>::quiet_NaN();
    double acc = 0;
    for (float v : ref.value()) acc += static_cast<double>(v);
    return acc / static_cast<double>(ref.value().size());
}

} // namespace

Trainer::Trainer(TrainConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.salient.input_side = static_cast<int>(cfg_.patch_size);
    if (cfg_.combo == DiscCombo::no_attention) {
        cfg_.salient.use_attention = false;
        cfg_.detailed.use_attention = false;
    }
    cfg_.validate();
    gen_ = std::make_unique<nn::Generator<float>>(cfg_.gen, derive_seed(cfg_.seed, 1));
    build_slots(cfg_.seed, nullptr);
}

Trainer::Trainer(const data::Checkpoint& ckpt, TrainConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.combo = combo_from_name(ckpt.variant);
    cfg_.gen = ckpt.gen_cfg;
    if (ckpt.ir_side.kind == data::SideKind::salient) cfg_.salient = ckpt.ir_side.salient;
    if (ckpt.vi_side.kind == data::SideKind::salient) cfg_.salient = ckpt.vi_side.salient;
    if (ckpt.ir_side.kind == data::SideKind::detailed) cfg_.detailed = ckpt.ir_side.detailed;
    if (ckpt.vi_side.kind == data::SideKind::detailed) cfg_.detailed = ckpt.vi_side.detailed;
    if (cfg_.salient.input_side != cfg_.patch_size &&
        (ckpt.ir_side.kind == data::SideKind::salient || ckpt.vi_side.kind == data::SideKind::salient))
        throw ConfigError("checkpoint was trained at patch size " +
                          std::to_string(cfg_.salient.input_side) + ", cannot resume at " +
                          std::to_string(cfg_.patch_size));
    cfg_.validate();
    gen_ = std::make_unique<nn::Generator<float>>(cfg_.gen, derive_seed(cfg_.seed, 1));
    data::load_params_into(gen_->params(), ckpt.gen, "generator");
    build_slots(cfg_.seed, &ckpt);
    step_ = ckpt.step;
}

void Trainer::build_slots(uint64_t seed, const data::Checkpoint* resume) {
    data::SideKind ir_kind = data::SideKind::none, vi_kind = data::SideKind::none;
    switch (cfg_.combo) {
        case DiscCombo::full:
        case DiscCombo::no_attention:
            ir_kind = data::SideKind::salient;
            vi_kind = data::SideKind::detailed;
            break;
        case DiscCombo::only_dd: vi_kind = data::SideKind::detailed; break;
        case DiscCombo::dual_dd:
            ir_kind = data::SideKind::detailed;
            vi_kind = data::SideKind::detailed;
            break;
        case DiscCombo::only_ds: ir_kind = data::SideKind::salient; break;
        case DiscCombo::dual_ds:
            ir_kind = data::SideKind::salient;
            vi_kind = data::SideKind::salient;
            break;
    }
    auto build = [&](Slot& slot, data::SideKind kind, uint64_t slot_seed) {
        slot.kind = kind;
        if (kind == data::SideKind::salient) {
            slot.sal = std::make_unique<nn::SalientDiscriminator<float>>(cfg_.salient, slot_seed);
        } else if (kind == data::SideKind::detailed) {
            cfg_.detailed.validate();
            cfg_.detailed.patch_sizes(static_cast<int>(cfg_.patch_size)); // fail early on collapse
            if (cfg_.detailed.use_attention) {
                int64_t div = int64_t(1) << (cfg_.detailed.attn_scales - 1);
                if (cfg_.patch_size % div != 0)
                    throw ConfigError("train: patch_size is not divisible by the detailed "
                                      "attention pooling factor " + std::to_string(div));
            }
            slot.det = std::make_unique<nn::DetailedDiscriminator<float>>(cfg_.detailed, slot_seed);
        }
    };
    build(ir_, ir_kind, derive_seed(seed, 2));
    build(vi_, vi_kind, derive_seed(seed, 3));
    if (resume) {
        if (resume->ir_side.kind != ir_kind || resume->vi_side.kind != vi_kind)
            throw ParseError("checkpoint: adversary slots do not match the variant");
        if (ir_kind != data::SideKind::none)
            data::load_params_into(ir_.params(), resume->ir_side.params, "ir-slot adversary");
        if (vi_kind != data::SideKind::none)
            data::load_params_into(vi_.params(), resume->vi_side.params, "vi-slot adversary");
    }
}

std::vector<Phase> Trainer::cycle_pattern() const {
    std::vector<Phase> pattern;
    if (has_vi_slot())
        for (int i = 0; i < cfg_.dd_steps; ++i) pattern.push_back(Phase::dd);
    if (has_ir_slot())
        for (int i = 0; i < cfg_.ds_steps; ++i) pattern.push_back(Phase::ds);
    for (int i = 0; i < cfg_.g_steps; ++i) pattern.push_back(Phase::g);
    return pattern;
}

nn::ParamSet<float>& Trainer::ir_slot_params() { return ir_.params(); }
nn::ParamSet<float>& Trainer::vi_slot_params() { return vi_.params(); }

StepRecord Trainer::step(Phase phase, const Array<float>& ir, const Array<float>& vi) {
    if (!(ir.shape == vi.shape))
        throw DimensionError("train step: infrared batch " + to_string(ir.shape) +
                             " does not match visible batch " + to_string(vi.shape));
    if (ir.shape.c != 1 || ir.shape.b < 1)
        throw DimensionError("train step: batches must be (b,1,h,w), got " + to_string(ir.shape));
    if (phase == Phase::dd && !has_vi_slot())
        throw ContractError("train step: variant has no vi-slot adversary to update");
    if (phase == Phase::ds && !has_ir_slot())
        throw ContractError("train step: variant has no ir-slot adversary to update");

    const bool g_upd = phase == Phase::g;
    ag::Tape<float> tape;
    auto gb = nn::bind_params(tape, gen_->params(), g_upd);
    auto ir_in = tape.leaf(ir);
    auto vi_in = tape.leaf(vi);
    auto fused = gen_->forward(tape, gb, ir_in, vi_in);
    // Adversary updates see the fused batch as a constant: re-mounting the
    // values as a leaf keeps the generator graph out of their backward walk.
    if (!g_upd) fused = tape.leaf(fused.to_array());

    nn::BoundParams<float> irb, vib;
    ag::TensorRef<float> p_s_real, p_s_fake, p_d_real, p_d_fake;
    if (has_ir_slot()) {
        irb = nn::bind_params(tape, ir_.params(), phase == Phase::ds);
        p_s_real = ir_.prob(tape, irb, ir_in);
        p_s_fake = ir_.prob(tape, irb, fused);
    }
    if (has_vi_slot()) {
        vib = nn::bind_params(tape, vi_.params(), phase == Phase::dd);
        p_d_real = vi_.prob(tape, vib, vi_in);
        p_d_fake = vi_.prob(tape, vib, fused);
    }
    auto ggraph = nn::total_G(fused, ir_in, vi_in, p_s_fake, p_d_fake, cfg_.weights);
    auto dgraph = nn::total_D(p_s_real, p_s_fake, p_d_real, p_d_fake, cfg_.weights);

    switch (phase) {
        case Phase::g:
            tape.backward(ggraph.total);
            nn::adam_step(gen_->params(), nn::collect_grads(gb), gen_adam_, cfg_.lr, cfg_.adam);
            break;
        case Phase::dd:
            tape.backward(dgraph.detailed);
            nn::adam_step(vi_.params(), nn::collect_grads(vib), vi_.adam, cfg_.lr, cfg_.adam);
            break;
        case Phase::ds:
            tape.backward(dgraph.salient);
            nn::adam_step(ir_.params(), nn::collect_grads(irb), ir_.adam, cfg_.lr, cfg_.adam);
            break;
    }
    step_ += 1;

    StepRecord rec;
    rec.step = step_;
    rec.phase = phase;
    rec.losses.l_g = nn::scalar_value(ggraph.total);
    rec.losses.l_adver = nn::scalar_value(ggraph.adver);
    rec.losses.l_basic = nn::scalar_value(ggraph.basic);
    rec.losses.l_infrared = nn::scalar_value(ggraph.infrared);
    rec.losses.l_visible = nn::scalar_value(ggraph.visible);
    rec.losses.l_d = nn::scalar_value(dgraph.total);
    rec.losses.l_ds = nn::scalar_value(dgraph.salient);
    rec.losses.l_dd = nn::scalar_value(dgraph.detailed);
    rec.p_s_real = batch_mean(p_s_real);
    rec.p_s_fake = batch_mean(p_s_fake);
    rec.p_d_real = batch_mean(p_d_real);
    rec.p_d_fake = batch_mean(p_d_fake);
    if (observer) observer(rec);
    return rec;
}

Array<float> Trainer::make_batch(const std::vector<data::ImagePair>& patches,
                                 const std::vector<size_t>& order, size_t first, bool ir) const {
    const int64_t ps = cfg_.patch_size;
    Array<float> batch;
    batch.shape = Shape{cfg_.batch_size, 1, ps, ps};
    batch.data.resize(static_cast<size_t>(batch.shape.count()));
    for (int64_t i = 0; i < cfg_.batch_size; ++i) {
        const data::ImagePair& p = patches[order[first + static_cast<size_t>(i)]];
        const data::GrayImage& img = ir ? p.ir : p.vi;
        std::copy(img.pix.begin(), img.pix.end(),
                  batch.data.begin() + static_cast<size_t>(i * ps * ps));
    }
    return batch;
}

std::vector<StepRecord> Trainer::train(const std::vector<data::ImagePair>& patches) {
    if (patches.empty()) throw ConfigError("train: no patches to train on");
    for (const auto& p : patches)
        if (p.ir.h != cfg_.patch_size || p.ir.w != cfg_.patch_size || p.vi.h != cfg_.patch_size ||
            p.vi.w != cfg_.patch_size)
            throw DimensionError("train: patch '" + p.id + "' does not match patch_size " +
                                 std::to_string(cfg_.patch_size));
    const int64_t steps_per_epoch = static_cast<int64_t>(patches.size()) / cfg_.batch_size;
    if (steps_per_epoch < 1)
        throw ConfigError("train: batch_size " + std::to_string(cfg_.batch_size) +
                          " exceeds the " + std::to_string(patches.size()) + " available patches");
    if (!cfg_.out_dir.empty()) {
        std::error_code ec;
        fs::create_directories(cfg_.out_dir, ec);
        if (!fs::is_directory(cfg_.out_dir))
            throw IoError("train: cannot create output directory " + cfg_.out_dir);
    }

    const std::vector<Phase> pattern = cycle_pattern();
    Rng shuffle_rng(derive_seed(cfg_.seed, 4));
    std::vector<size_t> order(patches.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::vector<StepRecord> log;
    log.reserve(static_cast<size_t>(steps_per_epoch * cfg_.epochs));

    // The phase pattern tiles one continuous stream of batches: a cycle may
    // span an epoch boundary, and a final partial cycle is logged as-is.
    int64_t done = 0;
    for (int64_t epoch = 1; epoch <= cfg_.epochs; ++epoch) {
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.below(static_cast<uint64_t>(i))]);
        for (int64_t b = 0; b < steps_per_epoch; ++b) {
            Phase phase = pattern[static_cast<size_t>(done % static_cast<int64_t>(pattern.size()))];
            size_t first = static_cast<size_t>(b * cfg_.batch_size);
            Array<float> ir = make_batch(patches, order, first, true);
            Array<float> vi = make_batch(patches, order, first, false);
            log.push_back(step(phase, ir, vi));
            ++done;
        }
        if (!cfg_.out_dir.empty() && cfg_.checkpoint_every > 0 && epoch % cfg_.checkpoint_every == 0)
            data::save_checkpoint(cfg_.out_dir + "/ckpt_epoch_" + std::to_string(epoch) + ".ckpt",
                                  snapshot());
    }
    if (!cfg_.out_dir.empty()) {
        data::save_checkpoint(cfg_.out_dir + "/ckpt_final.ckpt", snapshot());
        write_log_csv(cfg_.out_dir + "/train_log.csv", log);
    }
    return log;
}

data::GrayImage Trainer::fuse(const data::GrayImage& ir, const data::GrayImage& vi) {
    ag::Tape<float> tape;
    auto gb = nn::bind_params(tape, gen_->params(), false);
    auto out = gen_->forward(tape, gb, tape.leaf(data::image_to_array(ir)),
                             tape.leaf(data::image_to_array(vi)));
    return data::array_to_image(out.to_array());
}

data::Checkpoint Trainer::snapshot() const {
    data::Checkpoint ckpt;
    ckpt.variant = combo_name(cfg_.combo);
    ckpt.seed = cfg_.seed;
    ckpt.step = step_;
    ckpt.gen_cfg = gen_->config();
    ckpt.gen = gen_->params();
    auto fill = [](data::SideSnapshot& snap, const Slot& slot) {
        snap.kind = slot.kind;
        if (slot.kind == data::SideKind::salient) {
            snap.salient = slot.sal->config();
            snap.params = slot.sal->params();
        } else if (slot.kind == data::SideKind::detailed) {
            snap.detailed = slot.det->config();
            snap.params = slot.det->params();
        }
    };
    fill(ckpt.ir_side, ir_);
    fill(ckpt.vi_side, vi_);
    return ckpt;
}

std::string log_csv(const std::vector<StepRecord>& log) {
    std::string out = "step,phase,L_G,L_adver,L_basic,L_infrared,L_visible,L_DS,L_DD,"
                      "p_S_real,p_S_fake,p_D_real,p_D_fake\n";
    char buf[512];
    for (const auto& r : log) {
        std::snprintf(buf, sizeof(buf),
                      "%lld,%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                      static_cast<long long>(r.step), phase_name(r.phase), r.losses.l_g,
                      r.losses.l_adver, r.losses.l_basic, r.losses.l_infrared, r.losses.l_visible,
                      r.losses.l_ds, r.losses.l_dd, r.p_s_real, r.p_s_fake, r.p_d_real, r.p_d_fake);
        out += buf;
    }
    return out;
}

void write_log_csv(const std::string& path, const std::vector<StepRecord>& log) {
    std::string csv = log_csv(log);
    data::write_file_bytes(path, csv.data(), csv.size());
}

} // namespace hafuse::train
