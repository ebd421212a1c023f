#pragma once

#include <functional>
#include <string>
#include <vector>

#include "valr/image.hpp"
#include "valr/rng.hpp"
#include "valr/tensor.hpp"

namespace valr {

struct ModelConfig {
    int vocab_size = 250;
    int d_model = 64;
    int n_layers = 4;
    int n_heads = 4;
    int d_ff = 256;
    int max_seq_len = 512;
    int image_side = 16;
    int native_patch = 4;
    int align_layer = 2;  // 0-based; the tapped layer for alignment
    int K = 16;           // latent segment length; 1 and 2 are degenerate CE-only modes
    uint64_t seed = 0;

    int head_dim() const { return d_model / n_heads; }
    int patches_per_image() const {
        int g = image_side / native_patch;
        return g * g;
    }
    void validate() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
};

struct LayerParams {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln1_g, ln1_b, ln2_g, ln2_b;
    Tensor w1, b1, w2, b2;
};

struct ModelParams {
    Tensor tok_embed;     // [V x d]
    Tensor pos_embed;     // [max_seq_len x d], absolute positions shared across modalities
    Tensor patch_proj_w;  // [3*p*p x d], the native patch embedder
    Tensor patch_proj_b;  // [d]
    Tensor patch_pos;     // [S x d], learned 2-D grid position per patch slot
    std::vector<LayerParams> layers;
    Tensor final_ln_g, final_ln_b;
    Tensor lm_w;  // [d x V], zero-initialized so an untrained model is exactly uniform
    Tensor lm_b;  // [V]

    static ModelParams init(const ModelConfig& cfg, uint64_t seed);
};

// Visits every parameter in a fixed canonical order.
void for_each_param(ModelParams& p, const std::function<void(const std::string&, Tensor&)>& fn);
void for_each_param(const ModelParams& p,
                    const std::function<void(const std::string&, const Tensor&)>& fn);
int64_t param_count(const ModelConfig& cfg);

// Per-position input: a vocabulary token, a raw embedding vector (the latent
// feedback path), or one patch slot of an input image.
struct SeqEntry {
    enum class Kind { Token, Direct, Patch };
    Kind kind = Kind::Token;
    int token = -1;
    Tensor direct;  // [d] or [1 x d]; keeps its tape node so gradients flow
    int image = -1;
    int patch = -1;

    static SeqEntry tok(int id) {
        SeqEntry e;
        e.kind = Kind::Token;
        e.token = id;
        return e;
    }
    static SeqEntry direct_embedding(Tensor v) {
        SeqEntry e;
        e.kind = Kind::Direct;
        e.direct = std::move(v);
        return e;
    }
    static SeqEntry patch_slot(int image, int patch) {
        SeqEntry e;
        e.kind = Kind::Patch;
        e.image = image;
        e.patch = patch;
        return e;
    }
};

struct SequenceInput {
    std::vector<SeqEntry> entries;
    int length() const { return int(entries.size()); }
    void push_token(int id) { entries.push_back(SeqEntry::tok(id)); }
    void push_direct(Tensor v) { entries.push_back(SeqEntry::direct_embedding(std::move(v))); }
    void push_patch(int image, int patch) { entries.push_back(SeqEntry::patch_slot(image, patch)); }
};

// Projected K/V per layer, kept as lists of row chunks so incremental decode
// steps never re-copy the whole history. Chunks stay on the tape during
// training; compact() merges constant chunks to bound per-step op count.
struct KVCache {
    int length = 0;
    std::vector<std::vector<Tensor>> k_chunks, v_chunks;

    void init(int n_layers);
    bool tape_free() const;
    void compact_if_large(int max_chunks = 32);
};

struct ForwardOutput {
    Tensor last_hidden;  // [T x d], after the final layer norm
    Tensor tapped;       // [T x d], residual stream after block align_layer
    Tensor logits;       // [T x V]; undefined when not requested
};

// Per-position embeddings before absolute positions are added: tokens map
// through the table, patch slots through the patch embedder plus grid
// positions, direct embeddings pass through unchanged.
Tensor embed_inputs(Tape& t, const ModelConfig& cfg, const ModelParams& p,
                    const SequenceInput& seq, const std::vector<Image>& images);

// Causal forward over a suffix of `seq.length()` positions. With a cache the
// suffix continues from cache->length; without one a scratch cache covering
// just this call is used. An incremental call must reproduce the full-
// sequence values at the shared positions (pinned by the recompute oracle).
ForwardOutput forward(Tape& t, const ModelConfig& cfg, const ModelParams& p,
                      const SequenceInput& seq, const std::vector<Image>& images,
                      KVCache* cache = nullptr, bool want_logits = true);

Tensor lm_head(Tape& t, const ModelParams& p, const Tensor& hidden);

}  // namespace valr
