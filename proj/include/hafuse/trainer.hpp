#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hafuse/adam.hpp"
#include "hafuse/checkpoint.hpp"
#include "hafuse/dataset.hpp"
#include "hafuse/discriminator.hpp"
#include "hafuse/generator.hpp"
#include "hafuse/losses.hpp"

namespace hafuse::train {

// Which adversaries exist and what fills each slot. The ir slot's network
// treats the infrared image as real; the vi slot's treats the visible image
// as real. In the reference setup the ir slot holds the salient (whole-image)
// network and the vi slot the detailed (patch) network; the homogeneous
// variants swap one class into both slots.
enum class DiscCombo { full, only_dd, dual_dd, only_ds, dual_ds, no_attention };

const char* combo_name(DiscCombo c);
DiscCombo combo_from_name(const std::string& name); // ConfigError on unknown

struct TrainConfig {
    int64_t epochs = 20;
    int64_t batch_size = 16;
    double lr = 2e-4;
    // Optimizer updates per cycle: the vi-slot adversary, then the ir-slot
    // adversary, then the generator. Every update consumes a fresh batch.
    int dd_steps = 4;
    int ds_steps = 2;
    int g_steps = 2;
    nn::AdamConfig adam;
    uint64_t seed = 7;
    int64_t patch_size = 128;
    DiscCombo combo = DiscCombo::full;
    nn::LossWeights weights;
    nn::GeneratorConfig gen;
    nn::SalientConfig salient;   // template for any salient slot
    nn::DetailedConfig detailed; // template for any detailed slot
    int64_t checkpoint_every = 1; // in epochs; 0 disables periodic saves
    std::string out_dir;          // empty: keep everything in memory

    void validate() const;
};

enum class Phase { dd, ds, g };
const char* phase_name(Phase p);

// One optimizer update's log row. Probabilities are batch means; slots that
// do not exist under the variant report NaN.
struct StepRecord {
    int64_t step = 0;
    Phase phase = Phase::g;
    nn::LossBreakdown losses;
    double p_s_real = 0, p_s_fake = 0; // ir-slot adversary on real ir / fused
    double p_d_real = 0, p_d_fake = 0; // vi-slot adversary on real vi / fused
};

std::string log_csv(const std::vector<StepRecord>& log);
void write_log_csv(const std::string& path, const std::vector<StepRecord>& log);

class Trainer {
public:
    explicit Trainer(TrainConfig cfg);
    explicit Trainer(const data::Checkpoint& ckpt, TrainConfig cfg);

    const TrainConfig& config() const { return cfg_; }
    std::vector<Phase> cycle_pattern() const;

    bool has_ir_slot() const { return ir_.kind != data::SideKind::none; }
    bool has_vi_slot() const { return vi_.kind != data::SideKind::none; }
    nn::ParamSet<float>& gen_params() { return gen_->params(); }
    nn::ParamSet<float>& ir_slot_params();
    nn::ParamSet<float>& vi_slot_params();
    int64_t steps_done() const { return step_; }

    // One optimizer update on explicit (B,1,h,w) batches in [0,1].
    StepRecord step(Phase phase, const Array<float>& ir, const Array<float>& vi);

    // Full schedule over pre-cut patch pairs: per-epoch seeded shuffle, the
    // cycle pattern tiled over one continuous batch stream, periodic
    // checkpoints and a CSV log when out_dir is set.
    std::vector<StepRecord> train(const std::vector<data::ImagePair>& patches);

    // Fused output for one ir/vi pair at any size the generator accepts.
    data::GrayImage fuse(const data::GrayImage& ir, const data::GrayImage& vi);

    data::Checkpoint snapshot() const;

    // Test hook, called after every update with the fresh record.
    std::function<void(const StepRecord&)> observer;

private:
    struct Slot {
        data::SideKind kind = data::SideKind::none;
        std::unique_ptr<nn::SalientDiscriminator<float>> sal;
        std::unique_ptr<nn::DetailedDiscriminator<float>> det;
        nn::AdamState<float> adam;
        nn::ParamSet<float>& params();
        const nn::ParamSet<float>& params() const;
        ag::TensorRef<float> prob(ag::Tape<float>& tape, const nn::BoundParams<float>& bound,
                                  ag::TensorRef<float> image) const;
    };

    TrainConfig cfg_;
    std::unique_ptr<nn::Generator<float>> gen_;
    nn::AdamState<float> gen_adam_;
    Slot ir_, vi_;
    int64_t step_ = 0;

    void build_slots(uint64_t seed, const data::Checkpoint* resume);
    Array<float> make_batch(const std::vector<data::ImagePair>& patches,
                            const std::vector<size_t>& order, size_t first, bool ir) const;
};

} // namespace hafuse::train
