#pragma once

#include <string>
#include <vector>

#include "valr/model.hpp"

namespace valr {

enum class DecodeMode { Language, Latent };
enum class InputKind { Token, HiddenFeedback, ForcedControl };

struct TraceEntry {
    int pos;
    DecodeMode mode;
    InputKind input;
    int token;  // input token id; -1 at hidden-feedback positions
};

struct DecodeTrace {
    std::vector<TraceEntry> entries;
    bool truncated = false;
    std::string truncation_reason;

    // Exactly-K property: every latent run is contiguous, K long, opens with
    // the <latent> token and (for K >= 2) closes with the forced control
    // token; no feedback or forced input appears outside a run.
    void validate_segments(int K) const;
    std::string to_jsonl() const;
};

struct DecodeConfig {
    int K = 16;
    int max_new_positions = 256;
    int max_latent_segments = 32;
    // special token ids, filled in from the vocabulary
    int latent_open = -1;
    int latent_close = -1;
    int eos = -1;
    // greedy sampling only
};

// The automaton drives decoding through this surface, so the same state
// machine runs against the real model and against scripted mocks.
class DecodeBackend {
public:
    virtual ~DecodeBackend() = default;
    virtual void feed_token(int id) = 0;
    // Feed this backend's own newest hidden state as the next input.
    virtual void feed_hidden_feedback() = 0;
    virtual int sample_greedy() = 0;
};

struct DecodeResult {
    std::vector<int> tokens;  // language tokens emitted, <eos> excluded
    DecodeTrace trace;
};

// Language/latent alternation: greedy argmax in language mode; emitting
// <latent> enters a K-position segment (the control token itself is step 1,
// steps 2..K-1 feed back hidden states, step K force-inserts </latent>),
// after which language mode resumes from the newest hidden state. A segment
// is only entered when the position budget can hold all K steps, so every
// run in every trace is complete.
DecodeResult run_latent_automaton(DecodeBackend& backend, const DecodeConfig& dcfg, int start_pos);

// Inference-side model driver; no tape, encoder-free by construction.
class ModelBackend final : public DecodeBackend {
public:
    ModelBackend(const ModelConfig& cfg, const ModelParams& params, std::vector<Image> images);
    void feed_prompt(const SequenceInput& prompt);
    void feed_token(int id) override;
    void feed_hidden_feedback() override;
    int sample_greedy() override;
    int position() const { return cache_.length; }

private:
    void feed(SequenceInput seq);
    const ModelConfig& cfg_;
    const ModelParams& params_;
    std::vector<Image> images_;
    Tape tape_;  // stays empty: inference inputs are constants
    KVCache cache_;
    Tensor last_hidden_;  // [1 x d] at the newest position
};

DecodeResult decode(const ModelConfig& cfg, const ModelParams& params, const SequenceInput& prompt,
                    const std::vector<Image>& images, const DecodeConfig& dcfg);

// Removes latent-segment positions from a raw token sequence. For K >= 2
// segments are [open .. close] runs and an unterminated open is a structure
// error; K == 1 segments are bare open tokens.
std::vector<int> strip_latent(const std::vector<int>& tokens, int latent_open, int latent_close,
                              int K = 0);
// Trace variant: keeps language-mode token inputs in order.
std::vector<int> strip_latent(const DecodeTrace& trace);

}  // namespace valr
