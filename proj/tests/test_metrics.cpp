// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dvp/metrics.hpp"
#include "oracle_tables.hpp"

using namespace dvp;
using metrics::Tokens;

namespace {

Tokens tok(const std::string& text) {
    Tokens out;
    std::istringstream ss(text);
    std::string w;
    while (ss >> w) out.push_back(w);
    return out;
}

constexpr double kTol = 1e-4; // percentage points; 1e-6 on proportions

} // namespace

TEST_CASE("text metrics match the frozen oracle table") {
    int row_idx = 0;
    for (const auto& row : dvp::oracle::kNlgTable) {
        CAPTURE(row_idx);
        CAPTURE(row.cand);
        CAPTURE(row.ref);
        Tokens c = tok(row.cand), r = tok(row.ref);
        CHECK(std::abs(metrics::bleu(c, r, 1) - row.bleu1) <= kTol);
        CHECK(std::abs(metrics::bleu(c, r, 2) - row.bleu2) <= kTol);
        CHECK(std::abs(metrics::bleu(c, r, 3) - row.bleu3) <= kTol);
        CHECK(std::abs(metrics::bleu(c, r, 4) - row.bleu4) <= kTol);
        CHECK(std::abs(metrics::rouge_n(c, r, 1) - row.rouge1) <= kTol);
        CHECK(std::abs(metrics::rouge_n(c, r, 2) - row.rouge2) <= kTol);
        CHECK(std::abs(metrics::rouge_l(c, r) - row.rougeL) <= kTol);
        CHECK(std::abs(metrics::meteor_lite(c, r) - row.meteor) <= kTol);
        ++row_idx;
    }
}

TEST_CASE("score_pair mirrors the individual metric functions") {
    Tokens c = tok("no mass seen . no nodule seen .");
    Tokens r = tok("no mass seen . nodule present , small .");
    auto s = metrics::score_pair(c, r);
    CHECK(s.bleu1 == metrics::bleu(c, r, 1));
    CHECK(s.bleu2 == metrics::bleu(c, r, 2));
    CHECK(s.bleu3 == metrics::bleu(c, r, 3));
    CHECK(s.bleu4 == metrics::bleu(c, r, 4));
    CHECK(s.rouge1 == metrics::rouge_n(c, r, 1));
    CHECK(s.rouge2 == metrics::rouge_n(c, r, 2));
    CHECK(s.rougeL == metrics::rouge_l(c, r));
    CHECK(s.meteor == metrics::meteor_lite(c, r));
}

TEST_CASE("empty sequences score zero rather than erroring") {
    Tokens some = tok("a b c");
    Tokens none;
    CHECK(metrics::bleu(none, some, 4) == 0.0);
    CHECK(metrics::bleu(some, none, 4) == 0.0);
    CHECK(metrics::rouge_n(none, some, 1) == 0.0);
    CHECK(metrics::rouge_n(some, none, 2) == 0.0);
    CHECK(metrics::rouge_l(none, some) == 0.0);
    CHECK(metrics::meteor_lite(none, some) == 0.0);
    CHECK(metrics::meteor_lite(some, none) == 0.0);
}

TEST_CASE("stemmer applies the first matching suffix with a length floor") {
    CHECK(metrics::stem("walking") == "walk");
    CHECK(metrics::stem("walked") == "walk");
    CHECK(metrics::stem("scans") == "scan");
    CHECK(metrics::stem("scanned") == "scann");
    CHECK(metrics::stem("scanning") == "scann");
    CHECK(metrics::stem("bodies") == "bod");
    CHECK(metrics::stem("ties") == "tie");        // too short for "ies", "s" applies
    CHECK(metrics::stem("organization") == "organ");
    CHECK(metrics::stem("largeness") == "large");
    CHECK(metrics::stem("findings") == "find");   // "ings" before "ing" and "s"
    CHECK(metrics::stem("ment") == "ment");       // below the length floor
    CHECK(metrics::stem("as") == "as");
    CHECK(metrics::stem("cat") == "cat");
}

TEST_CASE("label scoring on a worked example") {
    std::array<int, kNumClasses> gold{};
    gold[0] = gold[1] = gold[2] = gold[3] = gold[4] = 1;
    std::array<int, kNumClasses> pred{};
    pred[0] = pred[1] = pred[2] = pred[5] = 1;

    auto counts = metrics::ce_counts({pred}, {gold});
    CHECK(counts.tp == 3);
    CHECK(counts.fp == 1);
    CHECK(counts.fn == 2);

    auto s = metrics::ce_scores(counts);
    CHECK(s.precision == doctest::Approx(0.75));
    CHECK(s.recall == doctest::Approx(0.6));
    CHECK(s.f1 == doctest::Approx(2.0 / 3.0));

    auto zero = metrics::ce_scores({0, 0, 0});
    CHECK(zero.precision == 0.0);
    CHECK(zero.recall == 0.0);
    CHECK(zero.f1 == 0.0);
}

TEST_CASE("label counts match brute force on random grids") {
    std::mt19937 gen(991);
    std::bernoulli_distribution coin(0.3);
    for (int trial = 0; trial < 100; ++trial) {
        int cases = 1 + (int)(gen() % 10);
        std::vector<std::array<int, kNumClasses>> pred(cases), gold(cases);
        for (int i = 0; i < cases; ++i)
            for (int k = 0; k < kNumClasses; ++k) {
                pred[(size_t)i][(size_t)k] = coin(gen) ? 1 : 0;
                gold[(size_t)i][(size_t)k] = coin(gen) ? 1 : 0;
            }
        int64_t tp = 0, fp = 0, fn = 0;
        for (int i = 0; i < cases; ++i)
            for (int k = 0; k < kNumClasses; ++k) {
                int p = pred[(size_t)i][(size_t)k], g = gold[(size_t)i][(size_t)k];
                if (p == 1 && g == 1) ++tp;
                if (p == 1 && g == 0) ++fp;
                if (p == 0 && g == 1) ++fn;
            }
        auto counts = metrics::ce_counts(pred, gold);
        CHECK(counts.tp == tp);
        CHECK(counts.fp == fp);
        CHECK(counts.fn == fn);
        auto micro = metrics::clinical_efficacy(pred, gold);
        auto direct = metrics::ce_scores(counts);
        CHECK(micro.f1 == direct.f1);
    }
}

TEST_CASE("clinical_efficacy rejects mismatched case counts") {
    std::vector<std::array<int, kNumClasses>> two(2), three(3);
    CHECK_THROWS_AS(metrics::clinical_efficacy(two, three), std::runtime_error);
}

TEST_CASE("top_k_mass on pinned cases") {
    std::vector<float> uniform(32, 1.0f);
    CHECK(metrics::top_k_mass(uniform, 8) == doctest::Approx(0.25).epsilon(1e-9));

    std::vector<float> onehot(16, 0.0f);
    onehot[5] = 3.0f;
    CHECK(metrics::top_k_mass(onehot, 1) == doctest::Approx(1.0));
    CHECK(metrics::top_k_mass(onehot, 4) == doctest::Approx(1.0));

    std::vector<float> ramp = {4.0f, 3.0f, 2.0f, 1.0f};
    CHECK(metrics::top_k_mass(ramp, 2) == doctest::Approx(0.7).epsilon(1e-9));
    CHECK(metrics::top_k_mass(ramp, 4) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(metrics::top_k_mass(ramp, 0) == doctest::Approx(0.0));

    // vanishing total falls back to the uniform value
    std::vector<float> tiny(10, 1e-14f);
    CHECK(metrics::top_k_mass(tiny, 3) == doctest::Approx(0.3));

    std::vector<float> neg = {1.0f, -0.5f};
    CHECK_THROWS_AS(metrics::top_k_mass(neg, 1), std::runtime_error);
    CHECK_THROWS_AS(metrics::top_k_mass(ramp, 5), std::runtime_error);
    CHECK_THROWS_AS(metrics::top_k_mass(ramp, -1), std::runtime_error);
}
