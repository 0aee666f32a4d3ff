// Command-line front end: training, fusion, evaluation, gradient
// verification, ablation runs, and synthetic data generation behind one
// binary. Exit codes: 0 success, 2 usage/config error, 3 data error,
// 4 numeric failure, 5 gradient-check failure.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "hafuse/checkpoint.hpp"
#include "hafuse/config.hpp"
#include "hafuse/dataset.hpp"
#include "hafuse/errors.hpp"
#include "hafuse/gradcheck.hpp"
#include "hafuse/image.hpp"
#include "hafuse/metrics.hpp"
#include "hafuse/rng.hpp"
#include "hafuse/trainer.hpp"

namespace {

using namespace hafuse;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitGradcheck = 5;

int run_guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const ParameterError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const GeometryError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const DimensionError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const ContractError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 1;
    }
}

// Known run variants: the full model, three generator reductions, and the
// five alternative adversary layouts understood by the trainer.
void apply_variant(cli::RunSettings& s, const std::string& v) {
    if (v == "no_afs") {
        s.train.gen.use_afs = false;
        return;
    }
    if (v == "no_sampling") {
        s.train.gen.use_sampling = false;
        return;
    }
    if (v == "no_skip") {
        s.train.gen.use_skip = false;
        return;
    }
    try {
        s.train.combo = train::combo_from_name(v);
    } catch (const ConfigError&) {
        throw ConfigError("unknown variant '" + v +
                          "' (valid: full, no_afs, no_sampling, no_skip, only_DD, dual_DD, "
                          "only_DS, dual_DS, no_attention)");
    }
}

void load_config_file(cli::RunSettings& s, const std::string& path) {
    if (!path.empty()) cli::apply_kv(s, cli::parse_kv_file(path));
}

std::vector<data::ImagePair> cut_patches(const cli::RunSettings& s,
                                         const std::vector<data::ImagePair>& pairs) {
    const int64_t size = s.train.patch_size;
    const int64_t stride = s.patch_stride > 0 ? s.patch_stride : size;
    return data::crop_patches(pairs, size, stride, derive_seed(s.train.seed, 100));
}

void print_epoch_line(int64_t epoch, int64_t epochs, const double* sums, int64_t n) {
    const double inv = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
    std::printf("epoch %lld/%lld  L_G=%.6g  L_adver=%.6g  L_basic=%.6g  L_infrared=%.6g  "
                "L_visible=%.6g  L_DS=%.6g  L_DD=%.6g\n",
                static_cast<long long>(epoch), static_cast<long long>(epochs), sums[0] * inv,
                sums[1] * inv, sums[2] * inv, sums[3] * inv, sums[4] * inv, sums[5] * inv,
                sums[6] * inv);
    std::fflush(stdout);
}

// Trains on every patch cut from <data-dir> and reports the mean of each loss
// term per epoch while the schedule runs.
int cmd_train(const cli::RunSettings& base, const std::string& data_dir,
              const std::string& out_dir) {
    cli::RunSettings s = base;
    s.train.out_dir = out_dir;
    s.train.validate();

    auto pairs = data::load_pair_dataset(data_dir);
    auto patches = cut_patches(s, pairs);
    if (patches.empty())
        throw ConfigError("train: no " + std::to_string(s.train.patch_size) + "x" +
                          std::to_string(s.train.patch_size) + " patches could be cut from '" +
                          data_dir + "'");
    const int64_t steps_per_epoch =
        static_cast<int64_t>(patches.size()) / s.train.batch_size;
    if (steps_per_epoch <= 0)
        throw ConfigError("train: batch size " + std::to_string(s.train.batch_size) +
                          " exceeds the " + std::to_string(patches.size()) + " available patches");

    train::Trainer trainer(s.train);
    double sums[7] = {0, 0, 0, 0, 0, 0, 0};
    int64_t in_epoch = 0, epoch = 1;
    trainer.observer = [&](const train::StepRecord& rec) {
        sums[0] += rec.losses.l_g;
        sums[1] += rec.losses.l_adver;
        sums[2] += rec.losses.l_basic;
        sums[3] += rec.losses.l_infrared;
        sums[4] += rec.losses.l_visible;
        sums[5] += rec.losses.l_ds;
        sums[6] += rec.losses.l_dd;
        if (++in_epoch == steps_per_epoch) {
            print_epoch_line(epoch, s.train.epochs, sums, in_epoch);
            ++epoch;
            in_epoch = 0;
            for (double& v : sums) v = 0;
        }
    };
    auto log = trainer.train(patches);
    std::printf("trained %lld steps; wrote %s/ckpt_final.ckpt and %s/train_log.csv\n",
                static_cast<long long>(log.size()), out_dir.c_str(), out_dir.c_str());
    return kExitOk;
}

data::GrayImage fuse_with(nn::Generator<float>& gen, const data::GrayImage& ir,
                          const data::GrayImage& vi) {
    if (ir.h != vi.h || ir.w != vi.w)
        throw DimensionError("fuse: infrared is " + std::to_string(ir.h) + "x" +
                             std::to_string(ir.w) + " but visible is " + std::to_string(vi.h) +
                             "x" + std::to_string(vi.w));
    ag::Tape<float> tape;
    auto bound = nn::bind_params(tape, gen.params(), false);
    auto out = gen.forward(tape, bound, tape.leaf(data::image_to_array(ir)),
                           tape.leaf(data::image_to_array(vi)));
    return data::array_to_image(out.to_array());
}

int cmd_fuse(const std::string& ckpt_path, const std::string& ir_path,
             const std::string& vi_path, const std::string& out_path) {
    auto ckpt = data::load_checkpoint(ckpt_path);
    auto gen = data::build_generator(ckpt);
    auto fused = fuse_with(gen, data::load_pgm(ir_path), data::load_pgm(vi_path));
    data::save_pgm(out_path, fused);
    std::printf("wrote %s (%lldx%lld)\n", out_path.c_str(), static_cast<long long>(fused.h),
                static_cast<long long>(fused.w));
    return kExitOk;
}

// Scores each pair's fused image; fused images come either from a directory
// of precomputed results or from a checkpointed generator. A positive noise
// variance appends a second set of rows (ids suffixed ":noisy") where the
// visible input was perturbed first; the clean rows are unaffected, so a
// variance of 0 reproduces the clean run byte for byte.
int cmd_eval(const std::string& data_dir, const std::string& fused_dir,
             const std::string& ckpt_path, double noise_variance, uint64_t noise_seed,
             const std::string& out_path) {
    if (fused_dir.empty() == ckpt_path.empty())
        throw ConfigError("eval: give exactly one of --fused-dir and --ckpt");
    auto pairs = data::load_pair_dataset(data_dir);

    std::unique_ptr<nn::Generator<float>> gen;
    if (!ckpt_path.empty())
        gen = std::make_unique<nn::Generator<float>>(
            data::build_generator(data::load_checkpoint(ckpt_path)));
    auto fused_for = [&](const data::ImagePair& p,
                         const data::GrayImage& vi) -> data::GrayImage {
        if (gen) return fuse_with(*gen, p.ir, vi);
        return data::load_pgm(fused_dir + "/" + p.id + ".pgm");
    };

    std::vector<metric::MetricRow> rows;
    for (const auto& p : pairs)
        rows.push_back({p.id, metric::evaluate_pair(fused_for(p, p.vi), p.ir, p.vi)});
    if (noise_variance > 0) {
        for (size_t i = 0; i < pairs.size(); ++i) {
            const auto& p = pairs[i];
            metric::NoiseSpec spec{noise_variance, derive_seed(noise_seed, i)};
            auto vi_noisy = metric::add_gaussian_noise(p.vi, spec);
            rows.push_back(
                {p.id + ":noisy", metric::evaluate_pair(fused_for(p, vi_noisy), p.ir, vi_noisy)});
        }
    }

    const std::string csv = metric::metrics_csv(rows);
    if (out_path.empty()) {
        std::fputs(csv.c_str(), stdout);
    } else {
        data::write_file_bytes(out_path, csv.data(), csv.size());
        std::printf("wrote %s (%lld rows)\n", out_path.c_str(),
                    static_cast<long long>(rows.size()));
    }
    return kExitOk;
}

int cmd_gradcheck(const std::string& scale) {
    gradcheck::SuiteOptions opts;
    if (scale == "wide") {
        opts.seeds_per_op = 40;
        opts.seeds_per_net = 30;
    }
    auto report = gradcheck::run_suite(opts);
    std::fputs(gradcheck::format_report(report).c_str(), stdout);
    return report.all_pass() ? kExitOk : kExitGradcheck;
}

// Smoke-scale train + fuse + eval for one named variant, so variants can be
// compared side by side from their metrics.csv files.
int cmd_ablate(const std::string& variant, const std::string& config_path,
               const std::string& data_dir, const std::string& out_dir) {
    cli::RunSettings s;
    s.train.epochs = 2;
    s.train.batch_size = 4;
    s.train.patch_size = 32;
    s.train.checkpoint_every = 0;
    s.train.gen.scales = 2;
    s.train.gen.base_channels = 8;
    load_config_file(s, config_path);
    apply_variant(s, variant);

    const std::string run_dir = out_dir + "/" + variant;
    s.train.out_dir = run_dir;
    s.train.validate();

    auto pairs = data::load_pair_dataset(data_dir);
    auto patches = cut_patches(s, pairs);
    if (patches.empty())
        throw ConfigError("ablate: no patches could be cut from '" + data_dir + "'");

    train::Trainer trainer(s.train);
    trainer.train(patches);

    std::filesystem::create_directories(run_dir + "/fused");
    std::vector<metric::MetricRow> rows;
    for (const auto& p : pairs) {
        auto fused = trainer.fuse(p.ir, p.vi);
        data::save_pgm(run_dir + "/fused/" + p.id + ".pgm", fused);
        rows.push_back({p.id, metric::evaluate_pair(fused, p.ir, p.vi)});
    }
    const std::string csv = metric::metrics_csv(rows);
    data::write_file_bytes(run_dir + "/metrics.csv", csv.data(), csv.size());
    std::printf("variant %s\n%s", variant.c_str(), csv.c_str());
    return kExitOk;
}

int cmd_make_synth(int64_t n, int64_t size, uint64_t seed, const std::string& out_dir) {
    auto ds = data::make_synthetic(n, size, seed);
    data::write_dataset(out_dir, ds.pairs);
    std::printf("wrote %lld pairs (%lld PGM files) to %s\n", static_cast<long long>(n),
                static_cast<long long>(2 * n), out_dir.c_str());
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"infrared/visible image fusion: training, inference and evaluation"};
    app.require_subcommand(1);

    // --- train ---
    auto* train_cmd = app.add_subcommand("train", "train a model on a paired image directory");
    std::string tr_config, tr_data, tr_out, tr_variant;
    uint64_t tr_seed = 0;
    int64_t tr_epochs = 0, tr_batch = 0, tr_patch = 0, tr_stride = 0;
    double tr_lr = 0;
    train_cmd->add_option("--config", tr_config, "key=value settings file");
    train_cmd->add_option("--data-dir", tr_data, "directory with ir/ and vi/ PGM subdirs")
        ->required();
    train_cmd->add_option("--out-dir", tr_out, "where checkpoints and the CSV log go")
        ->required();
    auto* o_seed = train_cmd->add_option("--seed", tr_seed, "master run seed");
    auto* o_epochs = train_cmd->add_option("--epochs", tr_epochs, "training epochs");
    auto* o_batch = train_cmd->add_option("--batch-size", tr_batch, "patches per update");
    auto* o_patch = train_cmd->add_option("--patch-size", tr_patch, "square crop side");
    auto* o_stride = train_cmd->add_option("--patch-stride", tr_stride, "crop grid stride");
    auto* o_lr = train_cmd->add_option("--lr", tr_lr, "Adam learning rate");
    auto* o_variant = train_cmd->add_option("--variant", tr_variant, "model variant to train");

    // --- fuse ---
    auto* fuse_cmd = app.add_subcommand("fuse", "fuse one infrared/visible pair");
    std::string fu_ckpt, fu_ir, fu_vi, fu_out;
    fuse_cmd->add_option("--ckpt", fu_ckpt, "trained checkpoint")->required();
    fuse_cmd->add_option("--ir", fu_ir, "infrared PGM")->required();
    fuse_cmd->add_option("--vi", fu_vi, "visible PGM")->required();
    fuse_cmd->add_option("--out", fu_out, "output PGM path")->required();

    // --- eval ---
    auto* eval_cmd = app.add_subcommand("eval", "score fused images with six quality metrics");
    std::string ev_data, ev_fused, ev_ckpt, ev_out;
    double ev_noise = 0;
    uint64_t ev_noise_seed = 0;
    eval_cmd->add_option("--data-dir", ev_data, "directory with ir/ and vi/ PGM subdirs")
        ->required();
    eval_cmd->add_option("--fused-dir", ev_fused, "directory of precomputed fused PGMs");
    eval_cmd->add_option("--ckpt", ev_ckpt, "checkpoint to fuse with instead");
    eval_cmd->add_option("--noise-variance", ev_noise,
                         "also score with noisy visible inputs (variance on [0,1])");
    eval_cmd->add_option("--noise-seed", ev_noise_seed, "seed for the noise draw");
    eval_cmd->add_option("--out", ev_out, "write the CSV here instead of stdout");

    // --- gradcheck ---
    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    std::string gc_scale = "toy";
    grad_cmd->add_option("--scale", gc_scale, "suite size: toy or wide")
        ->check(CLI::IsMember({"toy", "wide"}));

    // --- ablate ---
    auto* abl_cmd = app.add_subcommand("ablate", "smoke-scale train + eval of one variant");
    std::string ab_variant, ab_config, ab_data, ab_out = "ablate_out";
    abl_cmd->add_option("--variant", ab_variant, "variant name")->required();
    abl_cmd->add_option("--config", ab_config, "key=value settings file");
    abl_cmd->add_option("--data-dir", ab_data, "directory with ir/ and vi/ PGM subdirs")
        ->required();
    abl_cmd->add_option("--out-dir", ab_out, "root directory for per-variant results");

    // --- make-synth ---
    auto* synth_cmd = app.add_subcommand("make-synth", "generate a synthetic paired dataset");
    int64_t ms_n = 64, ms_size = 64;
    uint64_t ms_seed = 7;
    std::string ms_out;
    synth_cmd->add_option("--n", ms_n, "number of pairs");
    synth_cmd->add_option("--size", ms_size, "square image side");
    synth_cmd->add_option("--seed", ms_seed, "generation seed");
    synth_cmd->add_option("--out-dir", ms_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    return run_guarded([&]() -> int {
        if (app.got_subcommand(train_cmd)) {
            cli::RunSettings s;
            load_config_file(s, tr_config);
            if (o_seed->count()) s.train.seed = tr_seed;
            if (o_epochs->count()) s.train.epochs = tr_epochs;
            if (o_batch->count()) s.train.batch_size = tr_batch;
            if (o_patch->count()) s.train.patch_size = tr_patch;
            if (o_stride->count()) s.patch_stride = tr_stride;
            if (o_lr->count()) s.train.lr = tr_lr;
            if (o_variant->count()) apply_variant(s, tr_variant);
            return cmd_train(s, tr_data, tr_out);
        }
        if (app.got_subcommand(fuse_cmd)) return cmd_fuse(fu_ckpt, fu_ir, fu_vi, fu_out);
        if (app.got_subcommand(eval_cmd))
            return cmd_eval(ev_data, ev_fused, ev_ckpt, ev_noise, ev_noise_seed, ev_out);
        if (app.got_subcommand(grad_cmd)) return cmd_gradcheck(gc_scale);
        if (app.got_subcommand(abl_cmd))
            return cmd_ablate(ab_variant, ab_config, ab_data, ab_out);
        if (app.got_subcommand(synth_cmd)) return cmd_make_synth(ms_n, ms_size, ms_seed, ms_out);
        return kExitUsage;
    });
}
