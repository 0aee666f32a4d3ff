#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "hafuse/image.hpp"

using namespace hafuse;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code = -1;
    std::string out, err;
};

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch_root() {
    static fs::path root = [] {
        fs::path p = fs::temp_directory_path() / "hafuse_cli_test";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

// Runs the installed binary through the shell, capturing exit code and both
// streams. extra_env is a "VAR=value" prefix for fault-injection runs.
CliResult run_cli(const std::string& args, const std::string& extra_env = "") {
    static int counter = 0;
    fs::path so = scratch_root() / ("stdout_" + std::to_string(counter));
    fs::path se = scratch_root() / ("stderr_" + std::to_string(counter));
    ++counter;
    std::string cmd = extra_env.empty() ? "" : extra_env + " ";
    cmd += std::string(HAFUSE_CLI_PATH) + " " + args + " >" + so.string() + " 2>" + se.string();
    int rc = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    r.out = slurp(so);
    r.err = slurp(se);
    return r;
}

// Eight 32x32 synthetic pairs written once through the make-synth subcommand.
const std::string& data_dir() {
    static std::string dir = [] {
        std::string d = (scratch_root() / "data").string();
        auto r = run_cli("make-synth --n 8 --size 32 --seed 5 --out-dir " + d);
        REQUIRE(r.code == 0);
        REQUIRE(r.out == "wrote 8 pairs (16 PGM files) to " + d + "\n");
        return d;
    }();
    return dir;
}

// Narrow-network settings so subprocess training finishes in well under a second.
const std::string& tiny_conf() {
    static std::string path = [] {
        fs::path p = scratch_root() / "tiny.conf";
        std::ofstream(p) << "train.epochs = 1\n"
                            "train.batch_size = 4\n"
                            "train.patch_size = 32\n"
                            "gen.scales = 2\n"
                            "gen.base_channels = 2\n"
                            "ds.attn_scales = 2\n"
                            "ds.conv_channels = 2,3,4,5\n"
                            "ds.fc_hidden = 6\n"
                            "dd.attn_scales = 2\n"
                            "dd.sa_reduction = 2\n"
                            "dd.patch_channels = 3,4,6,1,1\n";
        return p.string();
    }();
    return path;
}

// One finished training run shared by the fuse/eval cases.
const std::string& trained_dir() {
    static std::string dir = [] {
        std::string d = (scratch_root() / "run").string();
        auto r = run_cli("train --config " + tiny_conf() + " --data-dir " + data_dir() +
                         " --out-dir " + d);
        REQUIRE(r.code == 0);
        REQUIRE(r.out.find("epoch 1/1") != std::string::npos);
        REQUIRE(r.out.find("trained 2 steps; wrote " + d + "/ckpt_final.ckpt") !=
                std::string::npos);
        return d;
    }();
    return dir;
}

std::string ckpt_path() { return trained_dir() + "/ckpt_final.ckpt"; }

} // namespace

TEST_CASE("help exits cleanly and lists every subcommand") {
    auto r = run_cli("--help");
    CHECK(r.code == 0);
    for (const char* name : {"train", "fuse", "eval", "gradcheck", "ablate", "make-synth"})
        CHECK(r.out.find(name) != std::string::npos);
    CHECK(run_cli("train --help").code == 0);
}

TEST_CASE("usage mistakes exit with code 2") {
    CHECK(run_cli("").code == 2);                    // a subcommand is required
    CHECK(run_cli("frobnicate").code == 2);          // unknown subcommand
    CHECK(run_cli("train --bogus x").code == 2);     // unknown flag
    CHECK(run_cli("train --out-dir /tmp/x").code == 2); // missing required --data-dir
    CHECK(run_cli("gradcheck --scale huge").code == 2);
}

TEST_CASE("make-synth writes a loadable paired dataset") {
    const std::string& d = data_dir();
    int ir_files = 0, vi_files = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(d + "/ir")) ++ir_files;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(d + "/vi")) ++vi_files;
    CHECK(ir_files == 8);
    CHECK(vi_files == 8);
    auto img = data::load_pgm(d + "/ir/syn0000.pgm");
    CHECK(img.h == 32);
    CHECK(img.w == 32);
}

TEST_CASE("train runs from a config file and reports its outputs") {
    const std::string& d = trained_dir();
    CHECK(fs::exists(d + "/ckpt_final.ckpt"));
    CHECK(fs::exists(d + "/train_log.csv"));
    auto log = slurp(d + "/train_log.csv");
    CHECK(log.rfind("step,phase,", 0) == 0);
}

TEST_CASE("two identically seeded training runs produce byte-identical artifacts") {
    std::string d2 = (scratch_root() / "run_repeat").string();
    auto r = run_cli("train --config " + tiny_conf() + " --data-dir " + data_dir() +
                     " --out-dir " + d2);
    REQUIRE(r.code == 0);
    CHECK(slurp(d2 + "/ckpt_final.ckpt") == slurp(trained_dir() + "/ckpt_final.ckpt"));
    CHECK(slurp(d2 + "/train_log.csv") == slurp(trained_dir() + "/train_log.csv"));
}

TEST_CASE("train rejects broken datasets with the data exit code") {
    // Plain-text magic number instead of the binary PGM form.
    std::string bad = (scratch_root() / "bad_data").string();
    fs::create_directories(bad + "/ir");
    fs::create_directories(bad + "/vi");
    std::ofstream(bad + "/ir/x.pgm") << "P2\n2 2\n255\n0 0 0 0\n";
    std::ofstream(bad + "/vi/x.pgm") << "P2\n2 2\n255\n0 0 0 0\n";
    auto r = run_cli("train --config " + tiny_conf() + " --data-dir " + bad + " --out-dir " +
                     (scratch_root() / "bad_out").string());
    CHECK(r.code == 3);
    CHECK(r.err.find("error:") != std::string::npos);

    // Geometry disagreement between the two sides of one pair.
    std::string mis = (scratch_root() / "mis_data").string();
    fs::create_directories(mis + "/ir");
    fs::create_directories(mis + "/vi");
    data::save_pgm(mis + "/ir/x.pgm", data::GrayImage(8, 8, 0.5f));
    data::save_pgm(mis + "/vi/x.pgm", data::GrayImage(16, 16, 0.5f));
    CHECK(run_cli("train --config " + tiny_conf() + " --data-dir " + mis + " --out-dir " +
                  (scratch_root() / "mis_out").string())
              .code == 2);

    // Missing dataset directory entirely.
    CHECK(run_cli("train --config " + tiny_conf() + " --data-dir " +
                  (scratch_root() / "no_such_dir").string() + " --out-dir " +
                  (scratch_root() / "no_out").string())
              .code == 2);
}

TEST_CASE("unknown variants exit 2 and list the valid names") {
    auto r = run_cli("train --config " + tiny_conf() + " --data-dir " + data_dir() +
                     " --out-dir " + (scratch_root() / "var_out").string() + " --variant bogus");
    CHECK(r.code == 2);
    CHECK(r.err.find("unknown variant 'bogus'") != std::string::npos);
    CHECK(r.err.find("no_afs") != std::string::npos);
    CHECK(r.err.find("dual_DS") != std::string::npos);
}

TEST_CASE("fuse writes the fused image and is deterministic") {
    std::string f1 = (scratch_root() / "fused1.pgm").string();
    std::string f2 = (scratch_root() / "fused2.pgm").string();
    std::string common = "fuse --ckpt " + ckpt_path() + " --ir " + data_dir() +
                         "/ir/syn0000.pgm --vi " + data_dir() + "/vi/syn0000.pgm --out ";
    auto r = run_cli(common + f1);
    REQUIRE(r.code == 0);
    CHECK(r.out == "wrote " + f1 + " (32x32)\n");
    auto img = data::load_pgm(f1);
    CHECK(img.h == 32);
    CHECK(img.w == 32);
    REQUIRE(run_cli(common + f2).code == 0);
    CHECK(slurp(f1) == slurp(f2));

    CHECK(run_cli("fuse --ckpt " + (scratch_root() / "absent.ckpt").string() + " --ir " +
                  data_dir() + "/ir/syn0000.pgm --vi " + data_dir() + "/vi/syn0000.pgm --out " +
                  (scratch_root() / "f3.pgm").string())
              .code == 3);
}

TEST_CASE("eval scores a checkpointed generator straight to stdout") {
    auto r = run_cli("eval --data-dir " + data_dir() + " --ckpt " + ckpt_path());
    REQUIRE(r.code == 0);
    CHECK(r.out.rfind("image_id,en,ag,sf,fmi,vif,uiqi\n", 0) == 0);
    CHECK(r.out.find("\nsyn0007,") != std::string::npos);
    CHECK(r.out.find("\nmean,") != std::string::npos);
    CHECK(r.out.find(":noisy") == std::string::npos);
}

TEST_CASE("eval accepts a directory of precomputed fused images") {
    // The infrared directory doubles as a stand-in fused directory: the file
    // names match the pair ids, which is all the loader requires.
    auto r = run_cli("eval --data-dir " + data_dir() + " --fused-dir " + data_dir() + "/ir");
    CHECK(r.code == 0);
    CHECK(r.out.find("\nmean,") != std::string::npos);
}

TEST_CASE("eval demands exactly one fused-image source") {
    CHECK(run_cli("eval --data-dir " + data_dir()).code == 2);
    auto r = run_cli("eval --data-dir " + data_dir() + " --ckpt " + ckpt_path() +
                     " --fused-dir " + data_dir() + "/ir");
    CHECK(r.code == 2);
    CHECK(r.err.find("exactly one of --fused-dir and --ckpt") != std::string::npos);
}

TEST_CASE("eval noise rows appear only for positive variance and repeat exactly") {
    std::string c1 = (scratch_root() / "eval1.csv").string();
    std::string c2 = (scratch_root() / "eval2.csv").string();
    std::string common = "eval --data-dir " + data_dir() + " --ckpt " + ckpt_path() +
                         " --noise-variance 0.02 --noise-seed 3 --out ";
    auto r = run_cli(common + c1);
    REQUIRE(r.code == 0);
    CHECK(r.out == "wrote " + c1 + " (16 rows)\n");
    CHECK(slurp(c1).find("syn0000:noisy,") != std::string::npos);
    REQUIRE(run_cli(common + c2).code == 0);
    CHECK(slurp(c1) == slurp(c2));

    // Variance zero must fall back to the clean run, byte for byte.
    auto clean = run_cli("eval --data-dir " + data_dir() + " --ckpt " + ckpt_path());
    auto zero = run_cli("eval --data-dir " + data_dir() + " --ckpt " + ckpt_path() +
                        " --noise-variance 0");
    REQUIRE(clean.code == 0);
    REQUIRE(zero.code == 0);
    CHECK(zero.out == clean.out);
}

TEST_CASE("a planted backward-pass bug trips the gradient suite with exit 5") {
    auto r = run_cli("gradcheck --scale toy", "HAFUSE_FAULT=sobel-backward-sign");
    CHECK(r.code == 5);
    CHECK(r.out.find("sobel_gradient") != std::string::npos);
    CHECK(r.out.find("FAIL") != std::string::npos);
    CHECK(r.out.find("FAILURES PRESENT") != std::string::npos);
}
