#pragma once

#include <array>
#include <functional>
#include <map>

#include "valr/checkpoint.hpp"
#include "valr/data.hpp"
#include "valr/latent_decode.hpp"

namespace valr {

// Reasoning-length buckets over generated non-latent tokens; fixed a priori
// for cross-run comparability.
constexpr std::array<int, 4> kLengthBucketEdges{0, 8, 16, 32};

struct EvalCell {
    int n = 0;
    int correct = 0;
    double accuracy() const { return n == 0 ? 0.0 : double(correct) / n; }
};

struct EvalReport {
    EvalCell overall;
    std::map<std::string, EvalCell> per_family;   // family from the sample-id prefix
    std::array<EvalCell, 4> per_length_bucket;
    int missing_marker = 0;  // answers without the marker, counted incorrect
    uint64_t seed = 0;
    std::string checkpoint_id;
    int decode_k = 0;
    int max_new_positions = 0;

    std::string to_json() const;
};

// Prompt prefix in the training layout: <bos>, image slots, question tokens.
SequenceInput make_prompt(const ReasoningSample& sample, const Vocabulary& vocab,
                          int patches_per_image);

// Extracts the answer string: language tokens after the first marker,
// case-folded and whitespace-trimmed. Empty optional when no marker exists.
std::optional<std::string> extract_answer(const std::vector<int>& tokens, const Vocabulary& vocab);

using DecodeFn = std::function<DecodeResult(const ReasoningSample&)>;

// Core loop, parameterized over the decoder so oracles and mocks can stand in
// for a trained model.
EvalReport evaluate_with(const DecodeFn& decode_fn, const std::vector<ReasoningSample>& corpus,
                         const Vocabulary& vocab, int n_threads = 2);

// Greedy-decodes a trained checkpoint over the corpus.
EvalReport evaluate(const ModelConfig& cfg, const ModelParams& params,
                    const std::vector<ReasoningSample>& corpus, const DecodeConfig& dcfg,
                    int n_threads = 2);

struct CompareRow {
    std::string checkpoint_id;
    double mean = 0.0;
    double stdev = 0.0;
    std::map<std::string, double> per_family_mean;
    std::vector<EvalReport> reports;  // one per seed
};

// Per-checkpoint mean +/- stdev across seeds. Each seed evaluates a
// deterministic half-subsample of the corpus (seed 0 = the full corpus), so
// the spread reflects evaluation-set variation.
std::vector<CompareRow> compare(const std::vector<std::pair<std::string, const ModelParams*>>& models,
                                const ModelConfig& cfg, const std::vector<ReasoningSample>& corpus,
                                const DecodeConfig& dcfg, const std::vector<uint64_t>& seeds,
                                int n_threads = 2);

std::string compare_table_json(const std::vector<CompareRow>& rows);
std::string compare_table_text(const std::vector<CompareRow>& rows);

}  // namespace valr
