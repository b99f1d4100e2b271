// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "dvp/classifier.hpp"
#include "dvp/synth.hpp"
#include "dvp/tensor.hpp"

using namespace dvp;

namespace {

SynthConfig tiny_cfg() {
    SynthConfig cfg;
    cfg.s = 8;
    cfg.h = 24;
    cfg.w = 24;
    cfg.n_train = 12;
    cfg.n_test = 4;
    cfg.seed = 97;
    cfg.normal_frac = 0.4f;
    return cfg;
}

Tensor volume_tensor(const SynthConfig& cfg, const std::vector<float>& v) {
    return Tensor::from_data({1, 1, cfg.s, cfg.h, cfg.w}, v);
}

std::string tmp_path(const char* leaf) {
    auto dir = std::filesystem::temp_directory_path() / "dvp_test_classifier";
    std::filesystem::create_directories(dir);
    return (dir / leaf).string();
}

} // namespace

TEST_CASE("noisy_or_pool matches hand values") {
    {
        float p[] = {0.5f, 0.5f};
        CHECK(noisy_or_pool(p, 2) == doctest::Approx(0.75).epsilon(1e-6));
    }
    {
        float p[] = {0.1f};
        CHECK(noisy_or_pool(p, 1) == doctest::Approx(0.1).epsilon(1e-6));
    }
    {
        float p[] = {0.2f, 0.3f, 0.4f};
        // 1 - 0.8*0.7*0.6
        CHECK(noisy_or_pool(p, 3) == doctest::Approx(0.664).epsilon(1e-6));
    }
    {
        float p[] = {0.0f, 0.0f, 0.0f};
        CHECK(noisy_or_pool(p, 3) == doctest::Approx(0.0));
    }
    {
        // p = 1 is clamped to 1 - 1e-7 rather than producing -inf logs
        float p[] = {1.0f};
        float got = noisy_or_pool(p, 1);
        CHECK(got > 0.9999f);
        CHECK(got <= 1.0f);
        CHECK(std::isfinite(got));
    }
}

TEST_CASE("noisy_or_pool rejects bad input") {
    CHECK_THROWS_AS(noisy_or_pool(nullptr, 0), std::runtime_error);
    float bad_hi[] = {1.5f};
    CHECK_THROWS_AS(noisy_or_pool(bad_hi, 1), std::runtime_error);
    float bad_lo[] = {-0.1f};
    CHECK_THROWS_AS(noisy_or_pool(bad_lo, 1), std::runtime_error);
}

TEST_CASE("voxel_logits shape and pooled_probs composition") {
    auto cfg = tiny_cfg();
    Classifier cls(cfg.s, cfg.h, cfg.w, 4, 6, 11);
    auto rec = generate_case(cfg, 555, {3, 9});
    Tensor vol = volume_tensor(cfg, rec.volume);

    Tensor logits = cls.voxel_logits(vol);
    // strides (2,2,2),(2,2,2),(1,2,2): 8x24x24 -> 2x3x3 cells
    const int cells = 2 * 3 * 3;
    REQUIRE(logits.shape() == dvp::Shape({1, cells, kNumClasses}));

    Tensor pooled = cls.pooled_probs(logits);
    REQUIRE(pooled.shape() == dvp::Shape({1, kNumClasses}));

    // compose the same answer per class with scalar sigmoid + noisy_or_pool
    const auto& lv = logits.values();
    for (int k = 0; k < kNumClasses; ++k) {
        std::vector<float> probs;
        for (int c = 0; c < cells; ++c) {
            float z = lv[(size_t)c * kNumClasses + (size_t)k];
            probs.push_back(1.0f / (1.0f + std::exp(-z)));
        }
        float want = noisy_or_pool(probs.data(), probs.size());
        CHECK(pooled.values()[(size_t)k] == doctest::Approx(want).epsilon(1e-5));
    }

    // pooled_log1m is log(1 - P) of the same pooled probabilities
    Tensor log1m = cls.pooled_log1m(logits);
    REQUIRE(log1m.shape() == pooled.shape());
    for (int k = 0; k < kNumClasses; ++k) {
        float lp = log1m.values()[(size_t)k];
        CHECK(std::exp(lp) == doctest::Approx(1.0 - pooled.values()[(size_t)k]).epsilon(1e-5));
    }
}

TEST_CASE("predict returns probabilities and validates volume size") {
    auto cfg = tiny_cfg();
    Classifier cls(cfg.s, cfg.h, cfg.w, 4, 6, 11);
    auto rec = generate_case(cfg, 556, {0});
    auto probs = cls.predict(rec.volume);
    for (float p : probs) {
        CHECK(p >= 0.0f);
        CHECK(p <= 1.0f);
    }
    std::vector<float> short_vol(rec.volume.begin(), rec.volume.end() - 1);
    CHECK_THROWS_AS(cls.predict(short_vol), std::runtime_error);
}

TEST_CASE("same seed rebuilds identical weights, different seed differs") {
    auto cfg = tiny_cfg();
    Classifier a(cfg.s, cfg.h, cfg.w, 4, 6, 11);
    Classifier b(cfg.s, cfg.h, cfg.w, 4, 6, 11);
    Classifier c(cfg.s, cfg.h, cfg.w, 4, 6, 12);
    CHECK(a.weight_checksum() == b.weight_checksum());
    CHECK(a.weight_checksum() != c.weight_checksum());
}

TEST_CASE("params carry the cls. prefix and are trainable before sealing") {
    auto cfg = tiny_cfg();
    Classifier cls(cfg.s, cfg.h, cfg.w, 4, 6, 11);
    auto pm = cls.params();
    CHECK(pm.size() == 6); // three convs, w + b each
    for (const auto& [name, t] : pm) {
        CHECK(name.rfind("cls.", 0) == 0);
        CHECK(t.defined());
    }
}

TEST_CASE("training reduces the loss and counts steps") {
    auto cfg = tiny_cfg();
    Dataset ds = build_dataset(cfg);
    Classifier cls(cfg.s, cfg.h, cfg.w, 4, 6, 11);
    ClassifierTrainConfig tc;
    tc.c1 = 4;
    tc.c2 = 6;
    tc.epochs = 3;
    tc.lr = 1e-3f;
    tc.seed = 11;
    auto stats = train_classifier(cls, ds, tc);
    CHECK(stats.steps == (int64_t)tc.epochs * cfg.n_train);
    CHECK(stats.last_epoch_loss < stats.first_epoch_loss);
    CHECK(std::isfinite(stats.last_epoch_loss));
}

TEST_CASE("training is restricted to the train split") {
    auto cfg = tiny_cfg();
    Dataset ds = build_dataset(cfg);
    Classifier cls(cfg.s, cfg.h, cfg.w, 4, 6, 11);
    ClassifierTrainConfig tc;
    tc.c1 = 4;
    tc.c2 = 6;
    tc.epochs = 1;
    // flipping every case off the train split leaves nothing to train on
    Dataset empty = ds;
    for (auto& c : empty.cases) c.split = "test";
    CHECK_THROWS_WITH_AS(train_classifier(cls, empty, tc),
                         doctest::Contains("no train cases"), std::runtime_error);
}

TEST_CASE("seal blocks further training and checksums drift") {
    auto cfg = tiny_cfg();
    Dataset ds = build_dataset(cfg);
    Classifier cls(cfg.s, cfg.h, cfg.w, 4, 6, 11);
    ClassifierTrainConfig tc;
    tc.c1 = 4;
    tc.c2 = 6;
    tc.epochs = 1;
    train_classifier(cls, ds, tc);

    CHECK_THROWS_AS(cls.verify_seal(), std::runtime_error); // not sealed yet
    cls.seal();
    CHECK(cls.sealed);
    CHECK_NOTHROW(cls.verify_seal());
    CHECK_THROWS_WITH_AS(train_classifier(cls, ds, tc),
                         doctest::Contains("after seal"), std::runtime_error);

    // prediction still works on a sealed classifier
    auto probs = cls.predict(ds.cases[0].volume);
    CHECK(probs[0] >= 0.0f);

    // silent weight drift must be detected
    cls.conv1.w.data()[0] += 0.25f;
    CHECK_THROWS_WITH_AS(cls.verify_seal(), doctest::Contains("checksum"),
                         std::runtime_error);
}

TEST_CASE("save and load round trip preserves weights and seal state") {
    auto cfg = tiny_cfg();
    Dataset ds = build_dataset(cfg);
    Classifier cls(cfg.s, cfg.h, cfg.w, 4, 6, 11);
    ClassifierTrainConfig tc;
    tc.c1 = 4;
    tc.c2 = 6;
    tc.epochs = 1;
    train_classifier(cls, ds, tc);
    cls.seal();

    std::string path = tmp_path("cls_roundtrip.dvp");
    save_classifier(path, cls);
    Classifier back = load_classifier(path, cfg.s, cfg.h, cfg.w, 4, 6, true);

    CHECK(back.sealed);
    CHECK_NOTHROW(back.verify_seal());
    CHECK(back.weight_checksum() == cls.weight_checksum());

    auto want = cls.predict(ds.cases[1].volume);
    auto got = back.predict(ds.cases[1].volume);
    for (int k = 0; k < kNumClasses; ++k)
        CHECK(got[(size_t)k] == want[(size_t)k]); // bitwise: same weights, same path

    std::filesystem::remove(path);
}

TEST_CASE("trained classifier separates an easy lesion from a normal case") {
    auto cfg = tiny_cfg();
    cfg.n_train = 24;
    cfg.seed = 131;
    Dataset ds = build_dataset(cfg);
    Classifier cls(cfg.s, cfg.h, cfg.w, 4, 6, 11);
    ClassifierTrainConfig tc;
    tc.c1 = 4;
    tc.c2 = 6;
    tc.epochs = 6;
    tc.lr = 2e-3f;
    train_classifier(cls, ds, tc);

    // average predicted probability for class k over train cases with label k
    // should exceed the average over cases without it
    double pos = 0.0, neg = 0.0;
    int64_t n_pos = 0, n_neg = 0;
    for (const auto& rec : ds.cases) {
        if (rec.split != "train") continue;
        auto probs = cls.predict(rec.volume);
        for (int k = 0; k < kNumClasses; ++k) {
            if (rec.labels[(size_t)k]) {
                pos += probs[(size_t)k];
                ++n_pos;
            } else {
                neg += probs[(size_t)k];
                ++n_neg;
            }
        }
    }
    REQUIRE(n_pos > 0);
    REQUIRE(n_neg > 0);
    CHECK(pos / (double)n_pos > neg / (double)n_neg);
}
