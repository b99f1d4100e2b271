// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

namespace dvp {

// Eighteen finding classes. Index order is fixed: report sentences, label
// vectors, classifier heads and anchor rendering all use it.
constexpr int kNumClasses = 18;
const std::array<const char*, kNumClasses>& class_names();

enum class LesionSize { small = 0, medium = 1, large = 2 };
const char* size_word(LesionSize s);

// Token vocabulary. Ids 0/1/2 are reserved for <bos>/<eos>/<pad>; the
// remaining words are enumerated in a fixed order so ids never shift.
class Vocabulary {
public:
    static constexpr int bos_id = 0;
    static constexpr int eos_id = 1;
    static constexpr int pad_id = 2;

    Vocabulary();

    int size() const { return (int)words_.size(); }
    int id(const std::string& word) const; // errors on unknown word
    const std::string& word(int id) const; // errors on out-of-range id

    std::vector<int> encode(const std::vector<std::string>& words) const;
    std::vector<std::string> decode(const std::vector<int>& ids) const;
    std::string detokenize(const std::vector<int>& ids) const;

private:
    std::vector<std::string> words_;
    std::vector<std::pair<std::string, int>> index_; // sorted by word
};

// process-wide shared instance
const Vocabulary& vocab();

// One sentence per class, in class order:
//   positive: "<name> present , <size> ."
//   negative: "no <name> seen ."
struct Finding {
    bool present = false;
    LesionSize size = LesionSize::small;
};

std::vector<std::string> render_report_words(
    const std::array<Finding, kNumClasses>& findings);
std::vector<int> render_report(const std::array<Finding, kNumClasses>& f);

// exact inverse of render_report; throws on any malformed sentence
std::array<Finding, kNumClasses> parse_report(const std::vector<int>& ids);

// label extraction tolerant to free-form token streams: labels[k] = 1 iff
// the tokens of class k's name occur immediately followed by "present"
std::array<int, kNumClasses> extract_labels(const std::vector<int>& ids);

// diagnostic anchor: "findings: <name>, <name>, ..." or "findings: none"
std::vector<int> anchor_tokens(const std::array<float, kNumClasses>& probs,
                               float threshold);

// fixed instruction suffix: "generate the findings report ."
const std::vector<int>& instruction_tokens();

} // namespace dvp
