#include "valr/model.hpp"

#include <cmath>

#include <json.hpp>

namespace valr {

using nlohmann::json;

// ---- config ------------------------------------------------------------

void ModelConfig::validate() const {
    if (vocab_size <= 0 || d_model <= 0 || n_layers <= 0 || n_heads <= 0 || d_ff <= 0)
        fail("model config: non-positive dimension");
    if (d_model % n_heads != 0) fail("model config: d_model must be divisible by n_heads");
    if (align_layer < 0 || align_layer >= n_layers)
        fail("model config: align_layer " + std::to_string(align_layer) + " outside [0," +
             std::to_string(n_layers) + ")");
    if (image_side <= 0 || native_patch <= 0 || image_side % native_patch != 0)
        fail("model config: image side must divide into native patches");
    // K=1 is the degenerate control-only mode; K=2 is the CE-only segment with
    // no interior. Everything else must form a square latent grid.
    if (K < 1 || (K > 2 && !is_perfect_square(K)))
        fail("model config: K must be 1, 2, or a perfect square, got " + std::to_string(K));
    if (max_seq_len <= 0) fail("model config: max_seq_len must be positive");
}

std::string ModelConfig::to_json() const {
    json j{{"vocab_size", vocab_size}, {"d_model", d_model},       {"n_layers", n_layers},
           {"n_heads", n_heads},       {"d_ff", d_ff},             {"max_seq_len", max_seq_len},
           {"image_side", image_side}, {"native_patch", native_patch},
           {"align_layer", align_layer}, {"K", K},                 {"seed", seed}};
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.max_seq_len = j.at("max_seq_len").get<int>();
    c.image_side = j.at("image_side").get<int>();
    c.native_patch = j.at("native_patch").get<int>();
    c.align_layer = j.at("align_layer").get<int>();
    c.K = j.at("K").get<int>();
    c.seed = j.at("seed").get<uint64_t>();
    c.validate();
    return c;
}

// ---- params ------------------------------------------------------------

namespace {

Tensor gauss_tensor(Rng& rng, std::vector<int> shape, double sd) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t.mut()[i] = rng.gauss() * sd;
    return t;
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng = Rng(seed).split(0x6d6f64656cull);  // model stream
    const int d = cfg.d_model;
    const int S = cfg.patches_per_image();
    const int pin = 3 * cfg.native_patch * cfg.native_patch;
    const double sd = 0.02;

    ModelParams p;
    p.tok_embed = gauss_tensor(rng, {cfg.vocab_size, d}, sd);
    p.pos_embed = gauss_tensor(rng, {cfg.max_seq_len, d}, sd);
    p.patch_proj_w = gauss_tensor(rng, {pin, d}, sd);
    p.patch_proj_b = Tensor::zeros({d});
    p.patch_pos = gauss_tensor(rng, {S, d}, sd);
    p.layers.resize(size_t(cfg.n_layers));
    const double attn_sd = sd / std::sqrt(2.0 * cfg.n_layers);
    for (auto& l : p.layers) {
        l.wq = gauss_tensor(rng, {d, d}, sd);
        l.bq = Tensor::zeros({d});
        l.wk = gauss_tensor(rng, {d, d}, sd);
        l.bk = Tensor::zeros({d});
        l.wv = gauss_tensor(rng, {d, d}, sd);
        l.bv = Tensor::zeros({d});
        l.wo = gauss_tensor(rng, {d, d}, attn_sd);
        l.bo = Tensor::zeros({d});
        l.ln1_g = Tensor::full({d}, 1.0);
        l.ln1_b = Tensor::zeros({d});
        l.ln2_g = Tensor::full({d}, 1.0);
        l.ln2_b = Tensor::zeros({d});
        l.w1 = gauss_tensor(rng, {d, cfg.d_ff}, sd);
        l.b1 = Tensor::zeros({cfg.d_ff});
        l.w2 = gauss_tensor(rng, {cfg.d_ff, d}, attn_sd);
        l.b2 = Tensor::zeros({d});
    }
    p.final_ln_g = Tensor::full({d}, 1.0);
    p.final_ln_b = Tensor::zeros({d});
    p.lm_w = Tensor::zeros({d, cfg.vocab_size});
    p.lm_b = Tensor::zeros({cfg.vocab_size});
    return p;
}

template <class P, class F>
static void visit_params(P& p, F&& fn) {
    fn("tok_embed", p.tok_embed);
    fn("pos_embed", p.pos_embed);
    fn("patch_proj_w", p.patch_proj_w);
    fn("patch_proj_b", p.patch_proj_b);
    fn("patch_pos", p.patch_pos);
    for (size_t i = 0; i < p.layers.size(); ++i) {
        auto& l = p.layers[i];
        std::string k = "layer" + std::to_string(i) + ".";
        fn(k + "wq", l.wq);
        fn(k + "bq", l.bq);
        fn(k + "wk", l.wk);
        fn(k + "bk", l.bk);
        fn(k + "wv", l.wv);
        fn(k + "bv", l.bv);
        fn(k + "wo", l.wo);
        fn(k + "bo", l.bo);
        fn(k + "ln1_g", l.ln1_g);
        fn(k + "ln1_b", l.ln1_b);
        fn(k + "ln2_g", l.ln2_g);
        fn(k + "ln2_b", l.ln2_b);
        fn(k + "w1", l.w1);
        fn(k + "b1", l.b1);
        fn(k + "w2", l.w2);
        fn(k + "b2", l.b2);
    }
    fn("final_ln_g", p.final_ln_g);
    fn("final_ln_b", p.final_ln_b);
    fn("lm_w", p.lm_w);
    fn("lm_b", p.lm_b);
}

void for_each_param(ModelParams& p, const std::function<void(const std::string&, Tensor&)>& fn) {
    visit_params(p, fn);
}
void for_each_param(const ModelParams& p,
                    const std::function<void(const std::string&, const Tensor&)>& fn) {
    visit_params(p, fn);
}

int64_t param_count(const ModelConfig& cfg) {
    ModelParams p = ModelParams::init(cfg, 0);
    int64_t n = 0;
    for_each_param(p, [&](const std::string&, const Tensor& t) { n += t.size(); });
    return n;
}

// ---- cache ---------------------------------------------------------------

void KVCache::init(int n_layers) {
    length = 0;
    k_chunks.assign(size_t(n_layers), {});
    v_chunks.assign(size_t(n_layers), {});
}

bool KVCache::tape_free() const {
    for (const auto& layer : k_chunks)
        for (const auto& t : layer)
            if (t.node >= 0) return false;
    for (const auto& layer : v_chunks)
        for (const auto& t : layer)
            if (t.node >= 0) return false;
    return true;
}

void KVCache::compact_if_large(int max_chunks) {
    if (k_chunks.empty() || int(k_chunks[0].size()) <= max_chunks) return;
    if (!tape_free()) return;  // merging tracked chunks would need tape ops
    Tape scratch;
    for (auto& layer : k_chunks) layer = {concat_rows(scratch, layer)};
    for (auto& layer : v_chunks) layer = {concat_rows(scratch, layer)};
}

// ---- embedding -------------------------------------------------------------

Tensor embed_inputs(Tape& t, const ModelConfig& cfg, const ModelParams& p,
                    const SequenceInput& seq, const std::vector<Image>& images) {
    if (seq.entries.empty()) fail("embed_inputs: empty sequence");
    const int d = cfg.d_model;
    const int np = cfg.native_patch;
    const int S = cfg.patches_per_image();
    const int pin = 3 * np * np;

    std::vector<Tensor> parts;
    size_t i = 0;
    while (i < seq.entries.size()) {
        const SeqEntry& e = seq.entries[i];
        if (e.kind == SeqEntry::Kind::Token) {
            std::vector<int> ids;
            while (i < seq.entries.size() && seq.entries[i].kind == SeqEntry::Kind::Token) {
                int id = seq.entries[i].token;
                if (id < 0 || id >= cfg.vocab_size)
                    fail("embed_inputs: token id " + std::to_string(id) + " outside vocabulary");
                ids.push_back(id);
                ++i;
            }
            parts.push_back(embed_rows(t, p.tok_embed, ids));
        } else if (e.kind == SeqEntry::Kind::Patch) {
            std::vector<int> patch_ids;
            std::vector<std::pair<int, int>> slots;
            while (i < seq.entries.size() && seq.entries[i].kind == SeqEntry::Kind::Patch) {
                const SeqEntry& s = seq.entries[i];
                if (s.image < 0 || size_t(s.image) >= images.size())
                    fail("embed_inputs: image index " + std::to_string(s.image) + " out of range");
                if (s.patch < 0 || s.patch >= S)
                    fail("embed_inputs: patch index " + std::to_string(s.patch) + " outside grid of " +
                         std::to_string(S));
                slots.emplace_back(s.image, s.patch);
                patch_ids.push_back(s.patch);
                ++i;
            }
            Tensor pix = Tensor::zeros({int(slots.size()), pin});
            const int grid = cfg.image_side / np;
            for (size_t r = 0; r < slots.size(); ++r) {
                const Image& img = images[size_t(slots[r].first)];
                if (img.side != cfg.image_side)
                    fail("embed_inputs: image side " + std::to_string(img.side) +
                         " does not match config");
                int py = slots[r].second / grid, px = slots[r].second % grid;
                double* row = pix.mut() + int64_t(r) * pin;
                int k = 0;
                for (int y = 0; y < np; ++y)
                    for (int x = 0; x < np; ++x)
                        for (int c = 0; c < 3; ++c)
                            row[k++] = img.at(py * np + y, px * np + x, c);
            }
            Tensor proj = add_row_broadcast(t, matmul(t, pix, p.patch_proj_w), p.patch_proj_b);
            parts.push_back(add(t, proj, gather_rows(t, p.patch_pos, patch_ids)));
        } else {
            Tensor v = e.direct;
            if (v.size() != d) fail("embed_inputs: direct embedding length mismatch");
            if (v.shape.size() == 1) v = reshape(t, v, {1, d});
            parts.push_back(v);
            ++i;
        }
    }
    return parts.size() == 1 ? parts[0] : concat_rows(t, parts);
}

// ---- forward ---------------------------------------------------------------

ForwardOutput forward(Tape& t, const ModelConfig& cfg, const ModelParams& p,
                      const SequenceInput& seq, const std::vector<Image>& images, KVCache* cache,
                      bool want_logits) {
    const int m = seq.length();
    if (m == 0) fail("forward: empty input");
    KVCache local;
    if (!cache) {
        local.init(cfg.n_layers);
        cache = &local;
    }
    if (cache->k_chunks.empty()) cache->init(cfg.n_layers);
    if (int(cache->k_chunks.size()) != cfg.n_layers)
        fail("forward: stale cache, layer count mismatch");
    const int p0 = cache->length;
    if (p0 + m > cfg.max_seq_len)
        fail("forward: sequence length " + std::to_string(p0 + m) + " exceeds max_seq_len " +
             std::to_string(cfg.max_seq_len));
    int cached_rows = 0;
    for (const auto& c : cache->k_chunks[0]) {
        if (c.cols() != cfg.d_model) fail("forward: stale cache, width mismatch");
        cached_rows += c.rows();
    }
    if (cached_rows != p0) fail("forward: stale cache, position count mismatch");

    const int H = cfg.n_heads;
    const double att_scale = 1.0 / std::sqrt(double(cfg.head_dim()));

    Tensor x = embed_inputs(t, cfg, p, seq, images);
    x = add(t, x, slice_rows(t, p.pos_embed, p0, p0 + m));

    ForwardOutput out;
    for (int l = 0; l < cfg.n_layers; ++l) {
        const LayerParams& lp = p.layers[size_t(l)];
        Tensor h = layer_norm(t, x, lp.ln1_g, lp.ln1_b);
        Tensor q = add_row_broadcast(t, matmul(t, h, lp.wq), lp.bq);
        Tensor k_new = add_row_broadcast(t, matmul(t, h, lp.wk), lp.bk);
        Tensor v_new = add_row_broadcast(t, matmul(t, h, lp.wv), lp.bv);
        cache->k_chunks[size_t(l)].push_back(k_new);
        cache->v_chunks[size_t(l)].push_back(v_new);

        std::vector<Tensor> sparts;
        int t_total = 0;
        for (const auto& kc : cache->k_chunks[size_t(l)]) {
            sparts.push_back(attn_scores(t, q, kc, H, att_scale));
            t_total += kc.rows();
        }
        Tensor scores = sparts.size() == 1 ? sparts[0] : concat_cols(t, sparts);
        scores = add(t, scores, causal_mask(p0, m, t_total, H));
        Tensor probs = softmax_rows(t, scores);

        Tensor ctx;
        int off = 0;
        for (const auto& vc : cache->v_chunks[size_t(l)]) {
            Tensor part = cache->v_chunks[size_t(l)].size() == 1
                              ? probs
                              : slice_cols(t, probs, off, off + vc.rows());
            off += vc.rows();
            Tensor mixed = attn_mix(t, part, vc, H);
            ctx = ctx.defined() ? add(t, ctx, mixed) : mixed;
        }
        x = add(t, x, add_row_broadcast(t, matmul(t, ctx, lp.wo), lp.bo));

        Tensor h2 = layer_norm(t, x, lp.ln2_g, lp.ln2_b);
        Tensor act = gelu(t, add_row_broadcast(t, matmul(t, h2, lp.w1), lp.b1));
        x = add(t, x, add_row_broadcast(t, matmul(t, act, lp.w2), lp.b2));

        if (l == cfg.align_layer) out.tapped = x;
    }
    cache->length = p0 + m;
    out.last_hidden = layer_norm(t, x, p.final_ln_g, p.final_ln_b);
    if (want_logits) out.logits = lm_head(t, p, out.last_hidden);
    return out;
}

Tensor lm_head(Tape& t, const ModelParams& p, const Tensor& hidden) {
    Tensor h = hidden;
    if (h.shape.size() == 1) h = reshape(t, h, {1, h.shape[0]});
    return add_row_broadcast(t, matmul(t, h, p.lm_w), p.lm_b);
}

}  // namespace valr
