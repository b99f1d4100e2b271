// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dvp/checkpoint.hpp"
#include "dvp/train.hpp"

using namespace dvp;
namespace fs = std::filesystem;

namespace {

SynthConfig tiny_data_cfg() {
    SynthConfig cfg;
    cfg.s = 8;
    cfg.h = 8;
    cfg.w = 8;
    cfg.n_train = 8;
    cfg.n_test = 3;
    cfg.seed = 301;
    cfg.normal_frac = 0.5f;
    return cfg;
}

ModelConfig tiny_model_cfg() {
    ModelConfig cfg;
    cfg.s = 8;
    cfg.h = 8;
    cfg.w = 8;
    cfg.enc_c1 = 4;
    cfg.enc_c2 = 6;
    cfg.enc_c = 10;
    cfg.n_latents = 3;
    cfg.d = 8;
    cfg.heads = 2;
    cfg.d_llm = 16;
    cfg.dec_layers = 1;
    cfg.dec_heads = 2;
    cfg.context = 192;
    cfg.prefix_len = 2;
    cfg.ff_mult = 2;
    cfg.vocab = vocab().size();
    return cfg;
}

Classifier make_sealed_classifier(const SynthConfig& dcfg, const Dataset& ds) {
    Classifier cls(dcfg.s, dcfg.h, dcfg.w, 4, 6, 11);
    ClassifierTrainConfig tc;
    tc.c1 = 4;
    tc.c2 = 6;
    tc.epochs = 1;
    train_classifier(cls, ds, tc);
    cls.seal();
    return cls;
}

fs::path fresh_dir(const char* leaf) {
    fs::path dir = fs::temp_directory_path() / "dvp_test_training" / leaf;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<char>(std::istreambuf_iterator<char>(in),
                             std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("adam_update reproduces the hand-computed trajectory") {
    AdamConfig cfg;
    cfg.lr = 0.1f;
    std::vector<float> value = {1.0f}, grad = {0.5f}, m = {0.0f}, v = {0.0f};

    adam_update(value, grad, m, v, 1, cfg);
    CHECK(m[0] == doctest::Approx(0.05).epsilon(1e-6));
    CHECK(v[0] == doctest::Approx(2.5e-4).epsilon(1e-6));
    CHECK(value[0] == doctest::Approx(0.9).epsilon(1e-5));

    adam_update(value, grad, m, v, 2, cfg);
    CHECK(m[0] == doctest::Approx(0.095).epsilon(1e-6));
    CHECK(v[0] == doctest::Approx(4.9975e-4).epsilon(1e-6));
    CHECK(value[0] == doctest::Approx(0.80000025).epsilon(1e-5));
}

TEST_CASE("Adam clips by global norm and reports the pre-clip norm") {
    Tensor p = Tensor::from_data({2}, {1.0f, 1.0f});
    p.set_requires_grad(true);
    p.ensure_grad();
    p.grad()[0] = 3.0f;
    p.grad()[1] = 4.0f;

    AdamConfig cfg;
    cfg.lr = 0.1f;
    cfg.clip_norm = 1.0f;
    Adam opt({{"p", p}}, cfg);
    float norm = opt.step();
    CHECK(norm == doctest::Approx(5.0).epsilon(1e-6));

    // the same update with the clipped gradient, via the standalone kernel
    std::vector<float> value = {1.0f, 1.0f};
    std::vector<float> grad = {3.0f / 5.0f, 4.0f / 5.0f};
    std::vector<float> m = {0.0f, 0.0f}, v = {0.0f, 0.0f};
    adam_update(value, grad, m, v, 1, cfg);
    CHECK(p.values()[0] == doctest::Approx(value[0]).epsilon(1e-7));
    CHECK(p.values()[1] == doctest::Approx(value[1]).epsilon(1e-7));

    // clipping off: norm still reported, update uses the raw gradient
    Tensor q = Tensor::from_data({2}, {1.0f, 1.0f});
    q.set_requires_grad(true);
    q.ensure_grad();
    q.grad()[0] = 3.0f;
    q.grad()[1] = 4.0f;
    AdamConfig nc = cfg;
    nc.clip_norm = 0.0f;
    Adam opt2({{"q", q}}, nc);
    CHECK(opt2.step() == doctest::Approx(5.0).epsilon(1e-6));
    std::vector<float> value2 = {1.0f, 1.0f};
    std::vector<float> grad2 = {3.0f, 4.0f};
    std::vector<float> m2 = {0.0f, 0.0f}, v2 = {0.0f, 0.0f};
    adam_update(value2, grad2, m2, v2, 1, nc);
    CHECK(q.values()[0] == doctest::Approx(value2[0]).epsilon(1e-7));
}

TEST_CASE("Adam refuses an inventory with nothing trainable") {
    Tensor frozen = Tensor::from_data({2}, {1.0f, 2.0f});
    AdamConfig cfg;
    CHECK_THROWS_AS(Adam({{"frozen", frozen}}, cfg), std::runtime_error);
}

TEST_CASE("optimizer state export/import resumes the exact trajectory") {
    AdamConfig cfg;
    cfg.lr = 0.05f;
    cfg.clip_norm = 0.0f;

    Tensor a = Tensor::from_data({3}, {0.5f, -0.25f, 1.5f});
    a.set_requires_grad(true);
    Adam opt({{"a", a}}, cfg);

    auto put_grad = [](Tensor& t, float g0) {
        t.ensure_grad();
        for (int64_t i = 0; i < t.numel(); ++i)
            t.grad()[(size_t)i] = g0 + 0.1f * (float)i;
    };
    put_grad(a, 0.3f);
    opt.step();
    opt.zero_grad();
    put_grad(a, -0.2f);
    opt.step();
    CHECK(opt.steps_taken() == 2);

    ParamMap state = opt.export_state();
    REQUIRE(state.size() >= 3); // opt.t + one m and one v slot

    // clone the parameter values into a fresh tensor + optimizer
    Tensor b = Tensor::from_data({3}, a.values());
    b.set_requires_grad(true);
    Adam opt2({{"b", b}}, cfg);
    opt2.import_state(state);
    CHECK(opt2.steps_taken() == 2);

    put_grad(a, 0.7f);
    put_grad(b, 0.7f);
    opt.step();
    opt2.step();
    for (size_t i = 0; i < 3; ++i)
        CHECK(a.values()[i] == b.values()[i]); // bitwise: same arithmetic path

    // a state with a missing slot is rejected
    ParamMap broken(state.begin(), state.end() - 1);
    Adam opt3({{"b", b}}, cfg);
    CHECK_THROWS_AS(opt3.import_state(broken), std::runtime_error);
}

TEST_CASE("train_step adds the two loss terms and leaves the classifier alone") {
    auto dcfg = tiny_data_cfg();
    Dataset ds = build_dataset(dcfg);
    Classifier cls = make_sealed_classifier(dcfg, ds);
    std::string checksum_before = cls.weight_checksum();

    auto mcfg = tiny_model_cfg();
    GeneratorModel model(mcfg, 21);
    AdamConfig ocfg;
    ocfg.lr = 1e-4f;
    Adam opt(model.params(), ocfg);

    ReferencePool pool = build_reference_pool(ds, "train");
    REQUIRE(!pool.members.empty());
    std::set<std::string> member_set(pool.members.begin(), pool.members.end());

    AblationFlags flags; // full variant
    Rng pair_rng(77);
    const CaseRecord* target = nullptr;
    for (const auto& c : ds.cases)
        if (c.split == "train" && !c.normal()) target = &c;
    REQUIRE(target != nullptr);

    StepLoss loss = train_step(model, &cls, *target, pool, ds, pair_rng, flags, opt);
    CHECK(std::isfinite(loss.l_total));
    CHECK(loss.l_gen > 0.0f);
    CHECK(loss.l_cls > 0.0f);
    CHECK(std::abs((double)loss.l_total - ((double)loss.l_gen + (double)loss.l_cls)) <
          1e-6);
    CHECK(member_set.count(loss.ref_id) == 1);
    CHECK(cls.weight_checksum() == checksum_before);

    // without the anchor branch the frozen classifier is not consulted, but
    // the generator's own auxiliary label head still contributes l_cls
    AblationFlags no_e;
    no_e.use_e = false;
    StepLoss loss2 = train_step(model, nullptr, *target, pool, ds, pair_rng, no_e, opt);
    CHECK(loss2.l_cls > 0.0f);
    CHECK(std::abs((double)loss2.l_total - ((double)loss2.l_gen + (double)loss2.l_cls)) <
          1e-6);
}

TEST_CASE("a tiny model overfits a single case") {
    auto dcfg = tiny_data_cfg();
    CaseRecord ref = generate_case(dcfg, 9001, {});
    ref.id = "tr_ref";
    ref.split = "train";
    CaseRecord target = generate_case(dcfg, 9002, {4, 12});
    target.id = "tr_target";
    target.split = "train";
    Dataset ds;
    ds.cfg = dcfg;
    ds.cases = {ref, target};

    auto mcfg = tiny_model_cfg();
    GeneratorModel model(mcfg, 21);
    AdamConfig ocfg;
    ocfg.lr = 2e-3f;
    Adam opt(model.params(), ocfg);
    ReferencePool pool = build_reference_pool(ds, "train");

    AblationFlags flags;
    flags.use_e = false; // keep the step to the generation loss only
    Rng pair_rng(5);
    float first = 0.0f, last = 0.0f;
    for (int step = 0; step < 350; ++step) {
        StepLoss l = train_step(model, nullptr, ds.by_id("tr_target"), pool, ds,
                                pair_rng, flags, opt);
        if (step == 0) first = l.l_gen;
        last = l.l_gen;
    }
    CHECK(first > 1.0f); // starts near uniform over the vocabulary
    CHECK(last < 0.05f); // memorizes the single report
}

TEST_CASE("train_generator writes artifacts, logs references, keeps the seal") {
    auto dcfg = tiny_data_cfg();
    Dataset ds = build_dataset(dcfg);
    Classifier cls = make_sealed_classifier(dcfg, ds);

    auto mcfg = tiny_model_cfg();
    GeneratorModel model(mcfg, 21);

    fs::path dir = fresh_dir("full_loop");
    TrainConfig tc;
    tc.epochs = 2;
    tc.lr = 1e-4f;
    tc.seed = 21;
    tc.run_dir = dir.string();

    TrainResult res = train_generator(model, ds, &cls, tc);
    CHECK(res.steps == (int64_t)tc.epochs * dcfg.n_train);
    CHECK(res.cls_checksum_before == res.cls_checksum_after);
    REQUIRE(res.epochs.size() == 2);
    int64_t step_sum = 0;
    for (const auto& ep : res.epochs) {
        CHECK(std::isfinite(ep.mean_total));
        CHECK(ep.mean_total >= ep.mean_gen - 1e-6);
        step_sum += ep.steps;
    }
    CHECK(step_sum == res.steps);

    for (const char* leaf : {"model.dvp", "model_epoch00.dvp", "model_epoch01.dvp",
                             "opt.dvp", "state.json", "train.log.jsonl"})
        CHECK(fs::exists(dir / leaf));

    auto state = nlohmann::json::parse(slurp(dir / "state.json"));
    CHECK(state.at("completed_epochs").get<int>() == 2);
    CHECK(state.at("steps").get<int64_t>() == res.steps);

    // every logged reference must be a normal train case
    std::set<std::string> normals;
    for (const auto& c : ds.cases)
        if (c.split == "train" && c.normal()) normals.insert(c.id);
    std::ifstream log(dir / "train.log.jsonl");
    std::string line;
    int64_t rows = 0;
    while (std::getline(log, line)) {
        if (line.empty()) continue;
        auto row = nlohmann::json::parse(line);
        if (!row.contains("ref")) continue; // epoch summary rows
        CHECK(normals.count(row.at("ref").get<std::string>()) == 1);
        ++rows;
    }
    CHECK(rows == res.steps);

    // saved weights equal the in-memory model
    ParamMap pm = model.params();
    CHECK(checksum(load_checkpoint((dir / "model.dvp").string())) == checksum(pm));
}

TEST_CASE("resume reproduces the uninterrupted run bitwise") {
    auto dcfg = tiny_data_cfg();
    Dataset ds = build_dataset(dcfg);
    Classifier cls = make_sealed_classifier(dcfg, ds);
    auto mcfg = tiny_model_cfg();

    fs::path dir_a = fresh_dir("uninterrupted");
    {
        GeneratorModel model(mcfg, 21);
        TrainConfig tc;
        tc.epochs = 2;
        tc.lr = 1e-4f;
        tc.seed = 21;
        tc.run_dir = dir_a.string();
        train_generator(model, ds, &cls, tc);
    }

    fs::path dir_b = fresh_dir("resumed");
    {
        GeneratorModel model(mcfg, 21);
        TrainConfig tc;
        tc.epochs = 1;
        tc.lr = 1e-4f;
        tc.seed = 21;
        tc.run_dir = dir_b.string();
        train_generator(model, ds, &cls, tc);
    }
    {
        GeneratorModel model(mcfg, 21);
        TrainConfig tc;
        tc.epochs = 2;
        tc.lr = 1e-4f;
        tc.seed = 21;
        tc.run_dir = dir_b.string();
        tc.resume = true;
        train_generator(model, ds, &cls, tc);
    }

    CHECK(slurp(dir_a / "model.dvp") == slurp(dir_b / "model.dvp"));
    CHECK(slurp(dir_a / "opt.dvp") == slurp(dir_b / "opt.dvp"));

    // resuming a finished run is a no-op for the weights
    {
        GeneratorModel model(mcfg, 21);
        TrainConfig tc;
        tc.epochs = 2;
        tc.lr = 1e-4f;
        tc.seed = 21;
        tc.run_dir = dir_b.string();
        tc.resume = true;
        TrainResult res = train_generator(model, ds, &cls, tc);
        // no epochs left to run; steps echoes the restored counter
        CHECK(res.epochs.empty());
        CHECK(res.steps == (int64_t)tc.epochs * dcfg.n_train);
    }
    CHECK(slurp(dir_a / "model.dvp") == slurp(dir_b / "model.dvp"));
}

TEST_CASE("training guards reject unsupported setups") {
    auto dcfg = tiny_data_cfg();
    Dataset ds = build_dataset(dcfg);
    Classifier cls = make_sealed_classifier(dcfg, ds);
    auto mcfg = tiny_model_cfg();
    GeneratorModel model(mcfg, 21);

    TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 2;
    CHECK_THROWS_AS(train_generator(model, ds, &cls, tc), std::runtime_error);

    TrainConfig tc2;
    tc2.epochs = 1;
    CHECK_THROWS_AS(train_generator(model, ds, nullptr, tc2), std::runtime_error);

    Classifier raw(dcfg.s, dcfg.h, dcfg.w, 4, 6, 11); // never sealed
    TrainConfig tc3;
    tc3.epochs = 1;
    CHECK_THROWS_AS(train_generator(model, ds, &raw, tc3), std::runtime_error);
}

TEST_CASE("adapter training touches only adapter weights") {
    auto dcfg = tiny_data_cfg();
    Dataset ds = build_dataset(dcfg);
    auto mcfg = tiny_model_cfg();
    GeneratorModel model(mcfg, 21);
    model.apply_adapters(2, 4.0f, 21);

    // base query/value projections froze; snapshot one of them
    ParamMap pm = model.params();
    const Tensor* base_wq = nullptr;
    for (const auto& [name, t] : pm)
        if (name.find("attn.wq.w") != std::string::npos) base_wq = &t;
    REQUIRE(base_wq != nullptr);
    std::vector<float> before = base_wq->values();

    ReferencePool pool = build_reference_pool(ds, "train");
    AblationFlags flags;
    flags.use_e = false;
    AdamConfig ocfg;
    ocfg.lr = 1e-3f;
    Adam opt(model.params(), ocfg);
    Rng pair_rng(9);
    const CaseRecord* target = nullptr;
    for (const auto& c : ds.cases)
        if (c.split == "train") target = &c;
    for (int i = 0; i < 3; ++i)
        train_step(model, nullptr, *target, pool, ds, pair_rng, flags, opt);

    CHECK(base_wq->values() == before);
}
