#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "valr/util.hpp"

namespace valr {

// Word-level vocabulary built deterministically from the task lexicon,
// specials first, padded with reserved entries to a fixed size of 250 so the
// vocabulary is identical across runs and corpora.
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kImage = 3;
    static constexpr int kLatentOpen = 4;
    static constexpr int kLatentClose = 5;
    static constexpr int kAnswerMarker = 6;  // "Answer:"
    static constexpr int kLatentInterior = 7;  // plan bookkeeping only, never embedded
    static constexpr int kSize = 250;

    static const Vocabulary& standard();

    int size() const { return int(tokens_.size()); }
    int id(const std::string& token) const;
    const std::string& token(int id) const;
    bool is_special(int id) const { return id < kFirstWord; }

    // whitespace tokenization of templated text
    std::vector<int> encode(const std::string& text) const;
    std::string decode(const std::vector<int>& ids, bool skip_specials = true) const;

private:
    static constexpr int kFirstWord = 8;
    Vocabulary();
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

}  // namespace valr
