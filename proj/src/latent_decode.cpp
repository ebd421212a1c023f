#include "valr/latent_decode.hpp"

#include <json.hpp>

namespace valr {

// ---- trace -----------------------------------------------------------

void DecodeTrace::validate_segments(int K) const {
    size_t i = 0;
    while (i < entries.size()) {
        const TraceEntry& e = entries[i];
        if (e.input == InputKind::HiddenFeedback || e.input == InputKind::ForcedControl)
            fail("trace: latent-interior input outside a segment at position " + std::to_string(e.pos));
        if (e.mode == DecodeMode::Latent) {
            // run start: the <latent> token entry
            if (e.input != InputKind::Token) fail("trace: latent run must open with the control token");
            if (K >= 2) {
                for (int s = 2; s <= K - 1; ++s) {
                    ++i;
                    if (i >= entries.size() || entries[i].input != InputKind::HiddenFeedback ||
                        entries[i].mode != DecodeMode::Latent)
                        fail("trace: latent run shorter than K at position " + std::to_string(e.pos));
                }
                ++i;
                if (i >= entries.size() || entries[i].input != InputKind::ForcedControl)
                    fail("trace: latent run missing forced close at position " + std::to_string(e.pos));
            }
            ++i;
        } else {
            ++i;
        }
    }
}

std::string DecodeTrace::to_jsonl() const {
    std::string out;
    for (const auto& e : entries) {
        nlohmann::json j;
        j["pos"] = e.pos;
        j["mode"] = e.mode == DecodeMode::Language ? "language" : "latent";
        j["input_kind"] = e.input == InputKind::Token
                              ? "token"
                              : (e.input == InputKind::HiddenFeedback ? "hidden-feedback"
                                                                      : "forced-control");
        if (e.token >= 0)
            j["token"] = e.token;
        else
            j["token"] = nullptr;
        out += j.dump();
        out += '\n';
    }
    return out;
}

// ---- automaton ---------------------------------------------------------

DecodeResult run_latent_automaton(DecodeBackend& backend, const DecodeConfig& dcfg, int start_pos) {
    if (dcfg.K < 1) fail("decode: K must be >= 1");
    if (dcfg.latent_open < 0 || dcfg.eos < 0) fail("decode: special token ids not configured");

    DecodeResult res;
    int pos = start_pos;
    int new_positions = 0;
    int segments = 0;
    bool latent = false;
    int latent_step = 0;

    auto emit = [&](DecodeMode mode, InputKind kind, int token) {
        res.trace.entries.push_back(TraceEntry{pos, mode, kind, token});
        ++pos;
        ++new_positions;
    };

    while (true) {
        if (new_positions >= dcfg.max_new_positions) {
            res.trace.truncated = true;
            res.trace.truncation_reason = "max_new_positions";
            break;
        }
        if (!latent) {
            const int tok = backend.sample_greedy();
            if (tok == dcfg.eos) {
                emit(DecodeMode::Language, InputKind::Token, tok);  // recorded, never fed
                break;
            }
            if (tok == dcfg.latent_open) {
                if (segments >= dcfg.max_latent_segments) {
                    res.trace.truncated = true;
                    res.trace.truncation_reason = "max_latent_segments";
                    break;
                }
                if (new_positions + dcfg.K > dcfg.max_new_positions) {
                    // refuse to start a segment the budget cannot finish
                    res.trace.truncated = true;
                    res.trace.truncation_reason = "max_new_positions";
                    break;
                }
                ++segments;
                backend.feed_token(tok);
                emit(DecodeMode::Latent, InputKind::Token, tok);
                if (dcfg.K >= 2) {
                    latent = true;
                    latent_step = 1;
                }
                continue;
            }
            backend.feed_token(tok);
            emit(DecodeMode::Language, InputKind::Token, tok);
            res.tokens.push_back(tok);
        } else {
            if (latent_step + 1 <= dcfg.K - 1) {
                backend.feed_hidden_feedback();
                ++latent_step;
                emit(DecodeMode::Latent, InputKind::HiddenFeedback, -1);
            } else {
                if (dcfg.latent_close < 0) fail("decode: latent close id not configured");
                backend.feed_token(dcfg.latent_close);
                latent = false;
                emit(DecodeMode::Latent, InputKind::ForcedControl, dcfg.latent_close);
            }
        }
    }
    return res;
}

// ---- model backend -------------------------------------------------------

ModelBackend::ModelBackend(const ModelConfig& cfg, const ModelParams& params,
                           std::vector<Image> images)
    : cfg_(cfg), params_(params), images_(std::move(images)) {
    cache_.init(cfg.n_layers);
}

void ModelBackend::feed(SequenceInput seq) {
    ForwardOutput out = forward(tape_, cfg_, params_, seq, images_, &cache_, false);
    const int m = out.last_hidden.rows();
    last_hidden_ = m == 1 ? out.last_hidden : slice_rows(tape_, out.last_hidden, m - 1, m);
    cache_.compact_if_large();
}

void ModelBackend::feed_prompt(const SequenceInput& prompt) { feed(prompt); }

void ModelBackend::feed_token(int id) {
    SequenceInput s;
    s.push_token(id);
    feed(std::move(s));
}

void ModelBackend::feed_hidden_feedback() {
    // the exact vector the LM head would consume, fed back per the recursion
    SequenceInput s;
    s.push_direct(last_hidden_);
    feed(std::move(s));
}

int ModelBackend::sample_greedy() {
    Tensor logits = lm_head(tape_, params_, last_hidden_);
    int best = 0;
    double bv = logits.at(0, 0);
    for (int j = 1; j < logits.cols(); ++j)
        if (logits.at(0, j) > bv) {  // ties resolve to the lowest id
            bv = logits.at(0, j);
            best = j;
        }
    return best;
}

DecodeResult decode(const ModelConfig& cfg, const ModelParams& params, const SequenceInput& prompt,
                    const std::vector<Image>& images, const DecodeConfig& dcfg) {
    if (dcfg.K != cfg.K)
        fail("decode: K=" + std::to_string(dcfg.K) + " does not match checkpoint K=" +
             std::to_string(cfg.K));
    if (prompt.length() == 0) fail("decode: empty prompt");
    if (prompt.entries.back().kind == SeqEntry::Kind::Direct)
        fail("decode: prompt must end in language mode");
    if (prompt.length() >= cfg.max_seq_len)
        fail("decode: prompt length " + std::to_string(prompt.length()) + " exceeds max_seq_len");

    ModelBackend backend(cfg, params, images);
    backend.feed_prompt(prompt);

    DecodeConfig adj = dcfg;
    adj.max_new_positions = std::min(dcfg.max_new_positions, cfg.max_seq_len - prompt.length());
    return run_latent_automaton(backend, adj, prompt.length());
}

// ---- strip -----------------------------------------------------------------

std::vector<int> strip_latent(const std::vector<int>& tokens, int latent_open, int latent_close,
                              int K) {
    std::vector<int> out;
    size_t i = 0;
    while (i < tokens.size()) {
        if (tokens[i] == latent_open) {
            if (K == 1) {
                ++i;  // bare control token, no interior, no close
                continue;
            }
            size_t j = i + 1;
            while (j < tokens.size() && tokens[j] != latent_close) {
                if (tokens[j] == latent_open)
                    fail("strip_latent: nested latent open at index " + std::to_string(j));
                ++j;
            }
            if (j >= tokens.size())
                fail("strip_latent: unterminated latent segment at index " + std::to_string(i));
            i = j + 1;
        } else if (tokens[i] == latent_close) {
            fail("strip_latent: stray latent close at index " + std::to_string(i));
        } else {
            out.push_back(tokens[i]);
            ++i;
        }
    }
    return out;
}

std::vector<int> strip_latent(const DecodeTrace& trace) {
    std::vector<int> out;
    for (const auto& e : trace.entries)
        if (e.mode == DecodeMode::Language && e.input == InputKind::Token) out.push_back(e.token);
    return out;
}

}  // namespace valr
