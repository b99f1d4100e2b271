// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dvp/grammar.hpp"

// Text metrics over whitespace tokens plus label-set scoring. All
// aggregation in doubles; scores are percentages in [0, 100] unless noted.
namespace dvp::metrics {

using Tokens = std::vector<std::string>;

// Modified n-gram precision, geometric mean over orders 1..n, brevity
// penalty e^{1-r/c} when c < r. Order-1 precision is never smoothed (zero
// overlap scores 0); higher orders use add-one smoothing when the match
// count is zero or no n-gram fits.
double bleu(const Tokens& cand, const Tokens& ref, int order);

double rouge_n(const Tokens& cand, const Tokens& ref, int n); // clipped n-gram F1
double rouge_l(const Tokens& cand, const Tokens& ref);        // LCS F1

// Unigram alignment, exact match first then suffix-stem match, both greedy
// left to right. F_mean = 10PR/(R+9P), penalty 0.5*(chunks/matches)^3.
double meteor_lite(const Tokens& cand, const Tokens& ref);
// fixed 10-rule suffix stemmer used by meteor_lite (exposed for tests)
std::string stem(const std::string& word);

struct NlgScores {
    double bleu1 = 0, bleu2 = 0, bleu3 = 0, bleu4 = 0;
    double rouge1 = 0, rouge2 = 0, rougeL = 0;
    double meteor = 0;
};
NlgScores score_pair(const Tokens& cand, const Tokens& ref);

struct CeCounts {
    int64_t tp = 0, fp = 0, fn = 0;
};
struct CeScores {
    double precision = 0, recall = 0, f1 = 0; // in [0, 1]
};
CeCounts ce_counts(const std::vector<std::array<int, kNumClasses>>& pred,
                   const std::vector<std::array<int, kNumClasses>>& gold);
CeScores ce_scores(const CeCounts& c);
// micro-averaged over every case x class cell; length mismatch throws
CeScores clinical_efficacy(const std::vector<std::array<int, kNumClasses>>& pred,
                           const std::vector<std::array<int, kNumClasses>>& gold);

// Sum of the k largest normalized scores; a vanishing total (< 1e-12)
// falls back to the uniform value k/n. k must be in [0, n].
double top_k_mass(const std::vector<float>& scores, int k);

} // namespace dvp::metrics
