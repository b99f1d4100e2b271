// SPDX-License-Identifier: Apache-2.0
#include "dvp/grammar.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace dvp {

const std::array<const char*, kNumClasses>& class_names() {
    static const std::array<const char*, kNumClasses> names = {
        "medical material",
        "arterial wall calcification",
        "cardiomegaly",
        "pericardial effusion",
        "coronary artery wall calcification",
        "hiatal hernia",
        "lymphadenopathy",
        "emphysema",
        "atelectasis",
        "lung nodule",
        "lung opacity",
        "pulmonary fibrotic sequela",
        "pleural effusion",
        "mosaic attenuation pattern",
        "peribronchial thickening",
        "consolidation",
        "bronchiectasis",
        "interlobular septal thickening",
    };
    return names;
}

const char* size_word(LesionSize s) {
    switch (s) {
        case LesionSize::small: return "small";
        case LesionSize::medium: return "medium";
        case LesionSize::large: return "large";
    }
    throw std::logic_error("size_word: bad enum value");
}

static std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream ss(text);
    std::string w;
    while (ss >> w) out.push_back(w);
    return out;
}

Vocabulary::Vocabulary() {
    words_ = {"<bos>", "<eos>", "<pad>"};
    auto put = [this](const std::string& w) {
        for (const auto& have : words_)
            if (have == w) return;
        words_.push_back(w);
    };
    put("no");
    for (const char* name : class_names())
        for (const auto& w : split_words(name)) put(w);
    for (const char* w :
         {"seen", ".", "present", ",", "small", "medium", "large",
          "findings:", "none", "generate", "the", "findings", "report"})
        put(w);
    for (int i = 0; i < (int)words_.size(); ++i)
        index_.emplace_back(words_[(size_t)i], i);
    std::sort(index_.begin(), index_.end());
}

int Vocabulary::id(const std::string& word) const {
    auto it = std::lower_bound(
        index_.begin(), index_.end(), word,
        [](const auto& p, const std::string& w) { return p.first < w; });
    if (it == index_.end() || it->first != word)
        throw std::runtime_error("vocabulary: unknown word '" + word + "'");
    return it->second;
}

const std::string& Vocabulary::word(int id) const {
    if (id < 0 || id >= (int)words_.size())
        throw std::runtime_error("vocabulary: token id " + std::to_string(id) +
                                 " out of range (size " +
                                 std::to_string(words_.size()) + ")");
    return words_[(size_t)id];
}

std::vector<int> Vocabulary::encode(
    const std::vector<std::string>& words) const {
    std::vector<int> out;
    out.reserve(words.size());
    for (const auto& w : words) out.push_back(id(w));
    return out;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int i : ids) out.push_back(word(i));
    return out;
}

std::string Vocabulary::detokenize(const std::vector<int>& ids) const {
    std::string out;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ' ';
        out += word(ids[(size_t)i]);
    }
    return out;
}

const Vocabulary& vocab() {
    static const Vocabulary v;
    return v;
}

std::vector<std::string> render_report_words(
    const std::array<Finding, kNumClasses>& findings) {
    std::vector<std::string> out;
    for (int k = 0; k < kNumClasses; ++k) {
        const auto name = split_words(class_names()[(size_t)k]);
        if (findings[(size_t)k].present) {
            out.insert(out.end(), name.begin(), name.end());
            out.push_back("present");
            out.push_back(",");
            out.push_back(size_word(findings[(size_t)k].size));
            out.push_back(".");
        } else {
            out.push_back("no");
            out.insert(out.end(), name.begin(), name.end());
            out.push_back("seen");
            out.push_back(".");
        }
    }
    return out;
}

std::vector<int> render_report(const std::array<Finding, kNumClasses>& f) {
    return vocab().encode(render_report_words(f));
}

std::array<Finding, kNumClasses> parse_report(const std::vector<int>& ids) {
    const auto& v = vocab();
    std::array<Finding, kNumClasses> out;
    size_t pos = 0;
    auto expect = [&](const std::string& w) {
        if (pos >= ids.size() || v.word(ids[pos]) != w)
            throw std::runtime_error(
                "parse_report: expected '" + w + "' at token " +
                std::to_string(pos) +
                (pos < ids.size() ? ", got '" + v.word(ids[pos]) + "'"
                                  : ", got end of report"));
        ++pos;
    };
    for (int k = 0; k < kNumClasses; ++k) {
        const auto name = split_words(class_names()[(size_t)k]);
        if (pos < ids.size() && v.word(ids[pos]) == "no") {
            expect("no");
            for (const auto& w : name) expect(w);
            expect("seen");
            expect(".");
            out[(size_t)k] = Finding{false, LesionSize::small};
        } else {
            for (const auto& w : name) expect(w);
            expect("present");
            expect(",");
            if (pos >= ids.size())
                throw std::runtime_error(
                    "parse_report: missing size word for class " +
                    std::to_string(k));
            const std::string sw = v.word(ids[pos]);
            LesionSize size;
            if (sw == "small")
                size = LesionSize::small;
            else if (sw == "medium")
                size = LesionSize::medium;
            else if (sw == "large")
                size = LesionSize::large;
            else
                throw std::runtime_error("parse_report: bad size word '" + sw +
                                         "' for class " + std::to_string(k));
            ++pos;
            expect(".");
            out[(size_t)k] = Finding{true, size};
        }
    }
    if (pos != ids.size())
        throw std::runtime_error("parse_report: trailing tokens after class " +
                                 std::to_string(kNumClasses - 1));
    return out;
}

std::array<int, kNumClasses> extract_labels(const std::vector<int>& ids) {
    const auto& v = vocab();
    std::array<int, kNumClasses> labels{};
    const int present_id = v.id("present");
    for (int k = 0; k < kNumClasses; ++k) {
        const auto name = v.encode(split_words(class_names()[(size_t)k]));
        const size_t span = name.size();
        for (size_t i = 0; i + span < ids.size(); ++i) {
            bool match = true;
            for (size_t j = 0; j < span; ++j)
                if (ids[i + j] != name[(size_t)j]) {
                    match = false;
                    break;
                }
            if (match && ids[i + span] == present_id) {
                labels[(size_t)k] = 1;
                break;
            }
        }
    }
    return labels;
}

std::vector<int> anchor_tokens(const std::array<float, kNumClasses>& probs,
                               float threshold) {
    const auto& v = vocab();
    std::vector<std::string> words{"findings:"};
    bool any = false;
    for (int k = 0; k < kNumClasses; ++k) {
        if (probs[(size_t)k] < threshold) continue;
        if (any) words.push_back(",");
        const auto name = split_words(class_names()[(size_t)k]);
        words.insert(words.end(), name.begin(), name.end());
        any = true;
    }
    if (!any) words.push_back("none");
    return v.encode(words);
}

const std::vector<int>& instruction_tokens() {
    static const std::vector<int> toks =
        vocab().encode({"generate", "the", "findings", "report", "."});
    return toks;
}

} // namespace dvp
