// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dvp/config.hpp"
#include "dvp/experiments.hpp"
#include "dvp/synth.hpp"

using namespace dvp;
namespace fs = std::filesystem;

namespace {

fs::path work_root() {
    static fs::path root = [] {
        fs::path dir = fs::temp_directory_path() / "dvp_test_cli";
        fs::remove_all(dir);
        fs::create_directories(dir);
        return dir;
    }();
    return root;
}

std::string write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::trunc);
    out << text;
    return p.string();
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<char>(std::istreambuf_iterator<char>(in),
                             std::istreambuf_iterator<char>());
}

// shared tiny pipeline configuration; every experiment command reads from it
FlatConfig pipeline_cfg() {
    fs::path root = work_root();
    FlatConfig cfg;
    cfg.set("data.dir", (root / "data").string());
    cfg.set("data.s", "8");
    cfg.set("data.h", "8");
    cfg.set("data.w", "8");
    cfg.set("data.n_train", "8");
    cfg.set("data.n_test", "3");
    cfg.set("data.seed", "301");
    cfg.set("data.normal_frac", "0.5");
    cfg.set("cls.out", (root / "cls").string());
    cfg.set("cls.path", (root / "cls" / "cls.dvp").string());
    cfg.set("cls.c1", "4");
    cfg.set("cls.c2", "6");
    cfg.set("cls.epochs", "1");
    cfg.set("model.enc_c1", "4");
    cfg.set("model.enc_c2", "6");
    cfg.set("model.enc_c", "10");
    cfg.set("model.n_latents", "3");
    cfg.set("model.d", "8");
    cfg.set("model.heads", "2");
    cfg.set("model.d_llm", "16");
    cfg.set("model.dec_layers", "1");
    cfg.set("model.dec_heads", "2");
    cfg.set("model.context", "192");
    cfg.set("model.prefix_len", "2");
    cfg.set("model.ff_mult", "2");
    cfg.set("train.run_dir", (root / "run").string());
    cfg.set("train.epochs", "1");
    cfg.set("train.lr", "0.0001");
    cfg.set("train.seed", "21");
    cfg.set("eval.run", (root / "run").string());
    cfg.set("eval.max_gen_len", "16");
    cfg.set("eval.pairing_seed", "33");
    return cfg;
}

} // namespace

TEST_CASE("config file parsing: comments, trimming, errors") {
    fs::path dir = work_root() / "cfg";
    fs::create_directories(dir);

    auto good = write_file(dir / "good.conf",
                           "# full line comment\n"
                           "\n"
                           "data.n_train = 40   # trailing comment\n"
                           "train.lr=0.001\n"
                           "  eval.shift = true\n");
    FlatConfig cfg = FlatConfig::from_file(good);
    CHECK(cfg.get_int("data.n_train", 0) == 40);
    CHECK(cfg.get_float("train.lr", 0.0f) == doctest::Approx(0.001));
    CHECK(cfg.get_bool("eval.shift", false));
    CHECK(cfg.get_int("missing.key", 7) == 7);

    auto no_eq = write_file(dir / "no_eq.conf", "a.b = 1\njust words\n");
    CHECK_THROWS_WITH_AS(FlatConfig::from_file(no_eq), doctest::Contains(":2"),
                         std::runtime_error);

    auto bad_key = write_file(dir / "bad_key.conf", "Data.N = 1\n");
    CHECK_THROWS_WITH_AS(FlatConfig::from_file(bad_key), doctest::Contains("bad key"),
                         std::runtime_error);

    CHECK_THROWS_AS(FlatConfig::from_file((dir / "nope.conf").string()),
                    std::runtime_error);
}

TEST_CASE("typed getters reject malformed values") {
    FlatConfig cfg;
    cfg.set("k.int", "12x");
    cfg.set("k.num", "abc");
    cfg.set("k.bool", "maybe");
    CHECK_THROWS_AS((void)cfg.get_int("k.int", 0), std::runtime_error);
    CHECK_THROWS_AS((void)cfg.get_double("k.num", 0.0), std::runtime_error);
    CHECK_THROWS_AS((void)cfg.get_bool("k.bool", false), std::runtime_error);

    cfg.set("k.bool", "on");
    CHECK(cfg.get_bool("k.bool", false));
    cfg.set("k.bool", "0");
    CHECK_FALSE(cfg.get_bool("k.bool", true));
}

TEST_CASE("precedence: preset, then file, then override") {
    fs::path dir = work_root() / "prec";
    fs::create_directories(dir);
    auto file = write_file(dir / "site.conf", "train.epochs = 5\n");

    FlatConfig cfg;
    apply_preset(cfg, "desk");
    CHECK(cfg.get_int("train.epochs", 0) == 3);
    CHECK(cfg.get_int("data.n_train", 0) == 400);
    CHECK(cfg.get_float("train.lr", 0.0f) == doctest::Approx(0.001));

    cfg.merge_file(file);
    CHECK(cfg.get_int("train.epochs", 0) == 5); // file beats preset

    cfg.apply_override("train.epochs=9");
    CHECK(cfg.get_int("train.epochs", 0) == 9); // override beats file

    CHECK_THROWS_AS(cfg.apply_override("no_equals_sign"), std::runtime_error);
    CHECK_THROWS_AS(apply_preset(cfg, "galaxy"), std::runtime_error);

    FlatConfig full;
    apply_preset(full, "full");
    CHECK(full.get_int("train.epochs", 0) == 10);
    CHECK(full.get_double("train.lr", 0.0) == doctest::Approx(5e-5));
    CHECK(full.get_int("cls.epochs", 0) == 4);
}

TEST_CASE("list splitting helpers") {
    CHECK(split_list("a, b ,c") == std::vector<std::string>({"a", "b", "c"}));
    CHECK(split_list("").empty());
    CHECK(split_list("one").size() == 1);
    CHECK(split_int_list("1,2,32") == std::vector<int>({1, 2, 32}));
    CHECK(split_u64_list("21,22") == std::vector<uint64_t>({21, 22}));
    CHECK(split_double_list("0.5,1.5") == std::vector<double>({0.5, 1.5}));
}

TEST_CASE("variant table covers the experiment matrix") {
    const auto& matrix = experiment_matrix();
    CHECK(matrix.size() == 7);

    AblationFlags ours = flags_for_variant("ours");
    CHECK(ours.use_global);
    CHECK(ours.use_local);
    CHECK(ours.use_e);
    CHECK(ours.use_prefix);
    CHECK_FALSE(ours.pixel_diff);

    AblationFlags base = flags_for_variant("baseline");
    CHECK_FALSE(base.use_global);
    CHECK_FALSE(base.use_local);
    CHECK_FALSE(base.use_e);
    CHECK_FALSE(base.use_prefix);

    AblationFlags plus_e = flags_for_variant("plus_e");
    CHECK(plus_e.use_e);
    CHECK_FALSE(plus_e.use_global);
    CHECK_FALSE(plus_e.use_local);
    CHECK_FALSE(plus_e.use_prefix);

    AblationFlags global_e = flags_for_variant("global_e");
    CHECK(global_e.use_global);
    CHECK_FALSE(global_e.use_local);
    AblationFlags local_e = flags_for_variant("local_e");
    CHECK_FALSE(local_e.use_global);
    CHECK(local_e.use_local);

    AblationFlags px = flags_for_variant("pixel_diff");
    CHECK(px.pixel_diff);
    CHECK(px.use_prefix);

    CHECK_THROWS_AS(flags_for_variant("unknown_variant"), std::runtime_error);
}

TEST_CASE("pipeline: synth -> classifier -> train -> eval") {
    FlatConfig cfg = pipeline_cfg();
    fs::path root = work_root();

    cmd_synth(cfg);
    REQUIRE(fs::exists(root / "data" / "meta.json"));
    REQUIRE(fs::exists(root / "data" / "manifest.json"));
    Dataset ds = load_dataset((root / "data").string());
    CHECK((int)ds.cases.size() == 11);

    auto manifest = nlohmann::json::parse(slurp(root / "data" / "manifest.json"));
    CHECK(manifest.at("command").get<std::string>() == "synth");
    CHECK(manifest.at("code_version").get<std::string>() == std::string(kCodeVersion));
    CHECK(manifest.at("config").is_object());
    CHECK(manifest.contains("created_unix_ms"));

    cmd_train_classifier(cfg);
    REQUIRE(fs::exists(root / "cls" / "cls.dvp"));

    cmd_train(cfg);
    REQUIRE(fs::exists(root / "run" / "model.dvp"));
    REQUIRE(fs::exists(root / "run" / "state.json"));
    auto state = nlohmann::json::parse(slurp(root / "run" / "state.json"));
    CHECK(state.at("completed_epochs").get<int>() == 1);

    // the train manifest echoes everything needed to rebuild the model
    auto tman = nlohmann::json::parse(slurp(root / "run" / "manifest.json"));
    const auto& conf = tman.at("config");
    CHECK(conf.at("model.d_llm").get<std::string>() == "16");
    CHECK(conf.at("train.use_e").get<std::string>() == "true");
    CHECK(conf.at("cls.path").get<std::string>() == (root / "cls" / "cls.dvp").string());

    FlatConfig ecfg = cfg;
    ecfg.set("eval.tag", "t1");
    cmd_eval(ecfg);
    fs::path eval1 = root / "run" / "eval" / "t1";
    REQUIRE(fs::exists(eval1 / "eval.json"));
    REQUIRE(fs::exists(eval1 / "reports.jsonl"));

    auto ej = nlohmann::json::parse(slurp(eval1 / "eval.json"));
    CHECK(ej.at("cases").get<int>() == 3);
    CHECK(ej.at("pool").at("split").get<std::string>() == "test");
    CHECK(ej.at("pool").at("all_refs_in_pool").get<bool>());
    CHECK(ej.contains("classifier_checksum"));
    CHECK(ej.at("per_case").size() == 3);

    // a second run with the same options is bytewise identical
    FlatConfig ecfg2 = cfg;
    ecfg2.set("eval.tag", "t2");
    cmd_eval(ecfg2);
    fs::path eval2 = root / "run" / "eval" / "t2";
    CHECK(slurp(eval1 / "eval.json") == slurp(eval2 / "eval.json"));
    CHECK(slurp(eval1 / "reports.jsonl") == slurp(eval2 / "reports.jsonl"));

    // load_run rebuilds the trained model with the recorded flags
    LoadedRun run = load_run((root / "run").string(), ds);
    CHECK(run.flags.use_e);
    CHECK(run.flags.use_global);
    CHECK(run.has_cls);
    CHECK(run.model.cfg.d_llm == 16);
}

TEST_CASE("cmd_train insists on a run directory") {
    // relies on the dataset written by the pipeline test above
    FlatConfig cfg = pipeline_cfg();
    cfg.set("train.run_dir", "");
    CHECK_THROWS_WITH_AS(cmd_train(cfg), doctest::Contains("run_dir"),
                         std::runtime_error);
}

TEST_CASE("eval on a missing run directory fails cleanly") {
    FlatConfig cfg = pipeline_cfg();
    cfg.set("eval.run", (work_root() / "no_such_run").string());
    CHECK_THROWS_AS(cmd_eval(cfg), std::runtime_error);
}
