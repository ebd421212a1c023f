#include "valr/vocab.hpp"

#include <sstream>

namespace valr {

namespace {

const char* kSpecials[] = {"<pad>", "<bos>", "<eos>", "<image>",
                           "<latent>", "</latent>", "Answer:", "<linner>"};

// every word any template can produce
const char* kLexicon[] = {
    "above", "across", "and",      "appears", "are",   "at",      "before", "below",
    "blue",  "column", "contains", "disk",    "first", "green",   "how",    "in",
    "is",    "left",   "many",     "matching", "neither", "no",   "nothing", "object",
    "objects", "of",   "or",       "red",     "right", "row",     "shows",  "square",
    "the",   "there",  "total",    "triangle", "view", "views",   "which",  "yellow",
    "yes",
};

}  // namespace

Vocabulary::Vocabulary() {
    for (const char* s : kSpecials) tokens_.emplace_back(s);
    for (int n = 0; n < 32; ++n) tokens_.push_back(std::to_string(n));
    for (const char* w : kLexicon) tokens_.emplace_back(w);
    int extra = 0;
    while (int(tokens_.size()) < kSize) tokens_.push_back("<extra_" + std::to_string(extra++) + ">");
    if (int(tokens_.size()) != kSize) fail("vocabulary: lexicon exceeds fixed size");
    for (size_t i = 0; i < tokens_.size(); ++i) {
        if (index_.count(tokens_[i])) fail("vocabulary: duplicate token " + tokens_[i]);
        index_[tokens_[i]] = int(i);
    }
}

const Vocabulary& Vocabulary::standard() {
    static const Vocabulary v;
    return v;
}

int Vocabulary::id(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) fail("vocabulary: unknown token '" + token + "'");
    return it->second;
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || id >= size()) fail("vocabulary: id " + std::to_string(id) + " out of range");
    return tokens_[size_t(id)];
}

std::vector<int> Vocabulary::encode(const std::string& text) const {
    std::vector<int> out;
    std::istringstream in(text);
    std::string word;
    while (in >> word) out.push_back(id(word));
    return out;
}

std::string Vocabulary::decode(const std::vector<int>& ids, bool skip_specials) const {
    std::string out;
    for (int id : ids) {
        if (skip_specials && is_special(id) && id != kAnswerMarker) continue;
        if (!out.empty()) out += ' ';
        out += token(id);
    }
    return out;
}

}  // namespace valr
