#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "hafuse/config.hpp"

using namespace hafuse;
namespace fs = std::filesystem;

namespace {

std::string msg_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST_CASE("kv parser handles comments, blanks and loose whitespace") {
    auto kv = cli::parse_kv_text("# leading comment\n"
                                 "\n"
                                 "  train.epochs = 5  \n"
                                 "train.lr=0.001 # trailing comment\n"
                                 "\t gen.scales \t=\t 2 \r\n",
                                 "mem");
    REQUIRE(kv.size() == 3);
    CHECK(kv.at("train.epochs") == "5");
    CHECK(kv.at("train.lr") == "0.001");
    CHECK(kv.at("gen.scales") == "2");
}

TEST_CASE("kv parser names the origin and line of each malformed line") {
    auto has = [](const std::string& m, const std::string& part) {
        CHECK(m.find(part) != std::string::npos);
    };
    has(msg_of([] { cli::parse_kv_text("just words\n", "conf"); }), "conf:1");
    has(msg_of([] { cli::parse_kv_text("# ok\n\nno equals here\n", "conf"); }), "conf:3");
    has(msg_of([] { cli::parse_kv_text("= 3\n", "conf"); }), "empty key");
    has(msg_of([] { cli::parse_kv_text("k =\n", "conf"); }), "empty key or value");
    has(msg_of([] { cli::parse_kv_text("a = 1\na = 2\n", "conf"); }), "duplicate key 'a'");

    CHECK_THROWS_AS(cli::parse_kv_text("oops\n", "conf"), ParseError);
    CHECK_THROWS_AS(cli::parse_kv_text("a = 1\na = 1\n", "conf"), ParseError);
}

TEST_CASE("kv files parse from disk and missing files raise io errors") {
    fs::path dir = fs::temp_directory_path() / "hafuse_config_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    fs::path file = dir / "run.conf";
    std::ofstream(file) << "train.epochs = 9\nnoise.variance = 0.5\n";

    auto kv = cli::parse_kv_file(file.string());
    CHECK(kv.at("train.epochs") == "9");
    CHECK(kv.at("noise.variance") == "0.5");
    CHECK_THROWS_AS(cli::parse_kv_file((dir / "absent.conf").string()), IoError);
}

TEST_CASE("settings defaults match the reference run") {
    cli::RunSettings s;
    CHECK(s.train.epochs == 20);
    CHECK(s.train.batch_size == 16);
    CHECK(s.train.lr == 2e-4);
    CHECK(s.train.dd_steps == 4);
    CHECK(s.train.ds_steps == 2);
    CHECK(s.train.g_steps == 2);
    CHECK(s.train.patch_size == 128);
    CHECK(s.train.combo == train::DiscCombo::full);
    CHECK(s.train.weights.alpha == 100.0);
    CHECK(s.train.weights.beta == 5.0);
    CHECK(s.train.weights.gamma == 5.0);
    CHECK(s.patch_stride == 0);
    CHECK(s.noise.variance == 0.03);
    CHECK(s.noise.seed == 0);
}

TEST_CASE("apply_kv reaches every settings group") {
    cli::RunSettings s;
    std::map<std::string, std::string> kv = {
        {"train.epochs", "3"},
        {"train.batch_size", "8"},
        {"train.lr", "0.0005"},
        {"train.dd_steps", "6"},
        {"train.ds_steps", "3"},
        {"train.g_steps", "1"},
        {"train.seed", "123"},
        {"train.patch_size", "64"},
        {"train.patch_stride", "32"},
        {"train.variant", "only_DD"},
        {"train.checkpoint_every", "4"},
        {"adam.beta1", "0.5"},
        {"adam.beta2", "0.99"},
        {"adam.eps", "1e-7"},
        {"loss.alpha", "50"},
        {"loss.beta", "2"},
        {"loss.gamma", "7"},
        {"gen.scales", "2"},
        {"gen.base_channels", "8"},
        {"gen.eb_kernel_a", "5"},
        {"gen.eb_kernel_b", "7"},
        {"gen.leaky_slope", "0.1"},
        {"gen.use_sampling", "false"},
        {"gen.use_skip", "0"},
        {"gen.use_afs", "off"},
        {"gen.afs_eps", "1e-6"},
        {"gen.afs_gmp_joint", "on"},
        {"ds.attn_scales", "2"},
        {"ds.ca_kernel", "5"},
        {"ds.conv_channels", "4, 8, 16, 32"},
        {"ds.fc_hidden", "10"},
        {"ds.leaky_slope", "0.3"},
        {"ds.use_attention", "false"},
        {"dd.attn_scales", "4"},
        {"dd.sa_reduction", "2"},
        {"dd.patch_channels", "8,16,32,64,1"},
        {"dd.patch_strides", "2,2,1,1,1"},
        {"dd.patch_kernel", "3"},
        {"dd.leaky_slope", "0.25"},
        {"dd.use_attention", "true"},
        {"dd.layers", "4"},
        {"noise.variance", "0.05"},
        {"noise.seed", "11"},
    };
    cli::apply_kv(s, kv);

    CHECK(s.train.epochs == 3);
    CHECK(s.train.batch_size == 8);
    CHECK(s.train.lr == 0.0005);
    CHECK(s.train.dd_steps == 6);
    CHECK(s.train.ds_steps == 3);
    CHECK(s.train.g_steps == 1);
    CHECK(s.train.seed == 123);
    CHECK(s.train.patch_size == 64);
    CHECK(s.patch_stride == 32);
    CHECK(s.train.combo == train::DiscCombo::only_dd);
    CHECK(s.train.checkpoint_every == 4);
    CHECK(s.train.adam.beta1 == 0.5);
    CHECK(s.train.adam.beta2 == 0.99);
    CHECK(s.train.adam.eps == 1e-7);
    CHECK(s.train.weights.alpha == 50.0);
    CHECK(s.train.weights.beta == 2.0);
    CHECK(s.train.weights.gamma == 7.0);
    CHECK(s.train.gen.scales == 2);
    CHECK(s.train.gen.base_channels == 8);
    CHECK(s.train.gen.eb_kernel_a == 5);
    CHECK(s.train.gen.eb_kernel_b == 7);
    CHECK(s.train.gen.leaky_slope == 0.1);
    CHECK(s.train.gen.use_sampling == false);
    CHECK(s.train.gen.use_skip == false);
    CHECK(s.train.gen.use_afs == false);
    CHECK(s.train.gen.afs_eps == 1e-6);
    CHECK(s.train.gen.afs_gmp_joint == true);
    CHECK(s.train.salient.attn_scales == 2);
    CHECK(s.train.salient.ca_kernel == 5);
    CHECK(s.train.salient.conv_channels == std::array<int, 4>{4, 8, 16, 32});
    CHECK(s.train.salient.fc_hidden == 10);
    CHECK(s.train.salient.leaky_slope == 0.3);
    CHECK(s.train.salient.use_attention == false);
    CHECK(s.train.detailed.attn_scales == 4);
    CHECK(s.train.detailed.sa_reduction == 2);
    CHECK(s.train.detailed.patch_channels == std::array<int, 5>{8, 16, 32, 64, 1});
    CHECK(s.train.detailed.patch_strides == std::array<int, 5>{2, 2, 1, 1, 1});
    CHECK(s.train.detailed.patch_kernel == 3);
    CHECK(s.train.detailed.leaky_slope == 0.25);
    CHECK(s.train.detailed.use_attention == true);
    CHECK(s.train.detailed.layers == 4);
    CHECK(s.noise.variance == 0.05);
    CHECK(s.noise.seed == 11);
}

TEST_CASE("apply_kv rejects unknown keys by name") {
    cli::RunSettings s;
    auto m = msg_of([&] { cli::apply_kv(s, {{"train.momentum", "0.9"}}); });
    CHECK(m.find("unknown key 'train.momentum'") != std::string::npos);
    CHECK_THROWS_AS(cli::apply_kv(s, {{"nonsense", "1"}}), ConfigError);
}

TEST_CASE("apply_kv rejects malformed values with the offending key") {
    cli::RunSettings s;
    CHECK_THROWS_AS(cli::apply_kv(s, {{"train.epochs", "three"}}), ConfigError);
    CHECK_THROWS_AS(cli::apply_kv(s, {{"train.epochs", "5x"}}), ConfigError);
    CHECK_THROWS_AS(cli::apply_kv(s, {{"train.lr", "fast"}}), ConfigError);
    CHECK_THROWS_AS(cli::apply_kv(s, {{"gen.use_afs", "2"}}), ConfigError);
    CHECK_THROWS_AS(cli::apply_kv(s, {{"ds.conv_channels", "1,2,3"}}), ConfigError);
    CHECK_THROWS_AS(cli::apply_kv(s, {{"ds.conv_channels", "1,2,3,4,5"}}), ConfigError);
    CHECK_THROWS_AS(cli::apply_kv(s, {{"dd.patch_strides", "2,2"}}), ConfigError);
    auto m = msg_of([&] { cli::apply_kv(s, {{"train.batch_size", "many"}}); });
    CHECK(m.find("train.batch_size") != std::string::npos);
}

TEST_CASE("variant keys in files accept adversary layouts only") {
    cli::RunSettings s;
    cli::apply_kv(s, {{"train.variant", "dual_DS"}});
    CHECK(s.train.combo == train::DiscCombo::dual_ds);
    // Generator ablations are spelled through their gen.* switches in files;
    // the bare ablation names belong to the command line.
    CHECK_THROWS_AS(cli::apply_kv(s, {{"train.variant", "no_afs"}}), ConfigError);
}

TEST_CASE("parsed files feed apply_kv end to end") {
    cli::RunSettings s;
    cli::apply_kv(s, cli::parse_kv_text("train.epochs = 2\n"
                                        "gen.base_channels = 4 # narrow\n"
                                        "loss.gamma = 1.5\n",
                                        "mem"));
    CHECK(s.train.epochs == 2);
    CHECK(s.train.gen.base_channels == 4);
    CHECK(s.train.weights.gamma == 1.5);
    CHECK(s.train.batch_size == 16); // untouched keys keep their defaults
}
