// SPDX-License-Identifier: Apache-2.0
#include "dvp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace dvp::metrics {

static std::map<std::vector<std::string>, int> ngram_counts(const Tokens& t, int n) {
    std::map<std::vector<std::string>, int> counts;
    if ((int)t.size() >= n)
        for (size_t i = 0; i + n <= t.size(); ++i)
            ++counts[std::vector<std::string>(t.begin() + i, t.begin() + i + n)];
    return counts;
}

static int64_t clipped_matches(const Tokens& cand, const Tokens& ref, int n) {
    auto cc = ngram_counts(cand, n);
    auto rc = ngram_counts(ref, n);
    int64_t m = 0;
    for (const auto& [g, c] : cc) {
        auto it = rc.find(g);
        if (it != rc.end()) m += std::min(c, it->second);
    }
    return m;
}

double bleu(const Tokens& cand, const Tokens& ref, int order) {
    if (order < 1 || order > 4)
        throw std::runtime_error("bleu: order " + std::to_string(order) + " outside 1..4");
    if (cand.empty()) return 0.0;
    const int64_t c = (int64_t)cand.size(), r = (int64_t)ref.size();
    double log_sum = 0.0;
    for (int k = 1; k <= order; ++k) {
        const int64_t m = clipped_matches(cand, ref, k);
        const int64_t den = std::max<int64_t>(c - k + 1, 0);
        double p;
        if (k == 1) {
            if (m == 0) return 0.0;
            p = (double)m / (double)den;
        } else if (m == 0 || den == 0) {
            p = (double)(m + 1) / (double)(den + 1);
        } else {
            p = (double)m / (double)den;
        }
        log_sum += std::log(p);
    }
    const double bp = c < r ? std::exp(1.0 - (double)r / (double)c) : 1.0;
    return 100.0 * bp * std::exp(log_sum / order);
}

static double f1_pct(double p, double r) {
    return p + r > 0.0 ? 100.0 * 2.0 * p * r / (p + r) : 0.0;
}

double rouge_n(const Tokens& cand, const Tokens& ref, int n) {
    if (n < 1) throw std::runtime_error("rouge: order must be positive");
    const int64_t nc = std::max<int64_t>((int64_t)cand.size() - n + 1, 0);
    const int64_t nr = std::max<int64_t>((int64_t)ref.size() - n + 1, 0);
    if (nc == 0 || nr == 0) return 0.0;
    const int64_t m = clipped_matches(cand, ref, n);
    return f1_pct((double)m / (double)nc, (double)m / (double)nr);
}

static int64_t lcs_len(const Tokens& a, const Tokens& b) {
    std::vector<int64_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (size_t i = 1; i <= a.size(); ++i) {
        for (size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rouge_l(const Tokens& cand, const Tokens& ref) {
    if (cand.empty() || ref.empty()) return 0.0;
    const int64_t l = lcs_len(cand, ref);
    return f1_pct((double)l / (double)cand.size(), (double)l / (double)ref.size());
}

std::string stem(const std::string& word) {
    static const char* suffixes[] = {"ization", "ations", "ings", "ment", "ness",
                                     "ing",     "ies",    "ed",   "es",   "s"};
    for (const char* suf : suffixes) {
        const size_t n = std::string(suf).size();
        if (word.size() >= n + 3 && word.compare(word.size() - n, n, suf) == 0)
            return word.substr(0, word.size() - n);
    }
    return word;
}

double meteor_lite(const Tokens& cand, const Tokens& ref) {
    if (cand.empty() || ref.empty()) return 0.0;
    std::vector<int> align(cand.size(), -1); // cand index -> ref index
    std::vector<bool> used(ref.size(), false);
    // stage 1: exact, greedy left-to-right
    for (size_t i = 0; i < cand.size(); ++i)
        for (size_t j = 0; j < ref.size(); ++j)
            if (!used[j] && cand[i] == ref[j]) {
                align[i] = (int)j;
                used[j] = true;
                break;
            }
    // stage 2: stems of whatever is left
    for (size_t i = 0; i < cand.size(); ++i) {
        if (align[i] >= 0) continue;
        const std::string cs = stem(cand[i]);
        for (size_t j = 0; j < ref.size(); ++j)
            if (!used[j] && cs == stem(ref[j])) {
                align[i] = (int)j;
                used[j] = true;
                break;
            }
    }
    int64_t m = 0;
    int chunks = 0;
    int prev_c = -2, prev_r = -2;
    for (size_t i = 0; i < cand.size(); ++i) {
        if (align[i] < 0) continue;
        ++m;
        if (!((int)i == prev_c + 1 && align[i] == prev_r + 1)) ++chunks;
        prev_c = (int)i;
        prev_r = align[i];
    }
    if (m == 0) return 0.0;
    const double p = (double)m / (double)cand.size();
    const double r = (double)m / (double)ref.size();
    const double f = 10.0 * p * r / (r + 9.0 * p);
    const double frag = (double)chunks / (double)m;
    return 100.0 * f * (1.0 - 0.5 * frag * frag * frag);
}

NlgScores score_pair(const Tokens& cand, const Tokens& ref) {
    NlgScores s;
    s.bleu1 = bleu(cand, ref, 1);
    s.bleu2 = bleu(cand, ref, 2);
    s.bleu3 = bleu(cand, ref, 3);
    s.bleu4 = bleu(cand, ref, 4);
    s.rouge1 = rouge_n(cand, ref, 1);
    s.rouge2 = rouge_n(cand, ref, 2);
    s.rougeL = rouge_l(cand, ref);
    s.meteor = meteor_lite(cand, ref);
    return s;
}

CeCounts ce_counts(const std::vector<std::array<int, kNumClasses>>& pred,
                   const std::vector<std::array<int, kNumClasses>>& gold) {
    if (pred.size() != gold.size())
        throw std::runtime_error("clinical efficacy: " + std::to_string(pred.size()) +
                                 " predictions vs " + std::to_string(gold.size()) + " references");
    CeCounts c;
    for (size_t i = 0; i < pred.size(); ++i)
        for (int k = 0; k < kNumClasses; ++k) {
            const bool p = pred[i][(size_t)k] != 0, g = gold[i][(size_t)k] != 0;
            c.tp += p && g;
            c.fp += p && !g;
            c.fn += !p && g;
        }
    return c;
}

CeScores ce_scores(const CeCounts& c) {
    CeScores s;
    s.precision = c.tp + c.fp > 0 ? (double)c.tp / (double)(c.tp + c.fp) : 0.0;
    s.recall = c.tp + c.fn > 0 ? (double)c.tp / (double)(c.tp + c.fn) : 0.0;
    s.f1 = s.precision + s.recall > 0.0
               ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
               : 0.0;
    return s;
}

CeScores clinical_efficacy(const std::vector<std::array<int, kNumClasses>>& pred,
                           const std::vector<std::array<int, kNumClasses>>& gold) {
    return ce_scores(ce_counts(pred, gold));
}

double top_k_mass(const std::vector<float>& scores, int k) {
    const int n = (int)scores.size();
    if (k < 0 || k > n)
        throw std::runtime_error("top-k mass: k=" + std::to_string(k) + " outside [0," +
                                 std::to_string(n) + "]");
    if (n == 0 || k == 0) return 0.0;
    double total = 0.0;
    for (float s : scores) {
        if (s < 0.0f) throw std::runtime_error("top-k mass: negative score");
        total += (double)s;
    }
    if (total < 1e-12) return (double)k / (double)n;
    std::vector<float> sorted(scores);
    std::sort(sorted.begin(), sorted.end(), std::greater<float>());
    double top = 0.0;
    for (int i = 0; i < k; ++i) top += (double)sorted[(size_t)i];
    return top / total;
}

} // namespace dvp::metrics
