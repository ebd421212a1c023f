#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "fd_check.hpp"
#include "valr/checkpoint.hpp"
#include "valr/model.hpp"
#include "valr/rng.hpp"

using namespace valr;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.vocab_size = 23;
    c.d_model = 16;
    c.n_layers = 2;
    c.n_heads = 2;
    c.d_ff = 32;
    c.max_seq_len = 64;
    c.image_side = 16;
    c.native_patch = 4;
    c.align_layer = 1;
    c.K = 4;
    return c;
}

Image noise_image(int side, uint64_t seed) {
    Rng rng(seed);
    Image img;
    img.side = side;
    img.pixels.resize(size_t(side) * side * 3);
    for (auto& p : img.pixels) p = rng.u01();
    return img;
}

double max_abs_row_diff(const Tensor& a, int ra, const Tensor& b, int rb) {
    double worst = 0;
    REQUIRE(a.cols() == b.cols());
    for (int j = 0; j < a.cols(); ++j)
        worst = std::max(worst, std::abs(a.at(ra, j) - b.at(rb, j)));
    return worst;
}

}  // namespace

TEST_CASE("config validation") {
    ModelConfig c = tiny_config();
    CHECK_NOTHROW(c.validate());
    c.K = 9;
    CHECK_NOTHROW(c.validate());
    c.K = 1;
    CHECK_NOTHROW(c.validate());
    c.K = 2;
    CHECK_NOTHROW(c.validate());
    c.K = 7;
    CHECK_THROWS_AS(c.validate(), Error);
    c = tiny_config();
    c.align_layer = 2;
    CHECK_THROWS_AS(c.validate(), Error);
    c = tiny_config();
    c.n_heads = 3;
    CHECK_THROWS_AS(c.validate(), Error);
    c = tiny_config();
    auto text = c.to_json();
    ModelConfig back = ModelConfig::from_json(text);
    CHECK(back.to_json() == text);
}

TEST_CASE("embed_inputs: token lookup, direct passthrough, patch arithmetic") {
    ModelConfig cfg = tiny_config();
    ModelParams p = ModelParams::init(cfg, 5);
    Tape t;

    SequenceInput seq;
    seq.push_token(7);
    Tensor e = embed_inputs(t, cfg, p, seq, {});
    CHECK(max_abs_row_diff(e, 0, p.tok_embed, 7) == 0.0);

    Tensor v = Tensor::zeros({cfg.d_model});
    for (int i = 0; i < cfg.d_model; ++i) v.mut()[i] = 0.01 * i - 0.05;
    SequenceInput seq2;
    seq2.push_direct(v);
    Tensor e2 = embed_inputs(t, cfg, p, seq2, {});
    CHECK(std::memcmp(e2.data(), v.data(), size_t(cfg.d_model) * sizeof(double)) == 0);

    // image of side 16, native_patch 4 -> 16 image positions
    CHECK(cfg.patches_per_image() == 16);
    SequenceInput seq3;
    for (int s = 0; s < cfg.patches_per_image(); ++s) seq3.push_patch(0, s);
    Tensor e3 = embed_inputs(t, cfg, p, seq3, {noise_image(16, 3)});
    CHECK(e3.rows() == 16);

    SequenceInput bad;
    bad.push_patch(0, 16);
    CHECK_THROWS_AS(embed_inputs(t, cfg, p, bad, {noise_image(16, 3)}), Error);
    SequenceInput bad2;
    bad2.push_token(cfg.vocab_size);
    CHECK_THROWS_AS(embed_inputs(t, cfg, p, bad2, {}), Error);
}

TEST_CASE("cache-vs-full equivalence on a random sequence extended by one") {
    ModelConfig cfg = tiny_config();
    ModelParams p = ModelParams::init(cfg, 11);
    // non-trivial lm head so logits differ across tokens
    Rng lw(99);
    for (int64_t i = 0; i < p.lm_w.size(); ++i) p.lm_w.mut()[i] = lw.gauss() * 0.05;

    Rng rng(17);
    std::vector<int> toks;
    for (int i = 0; i < 13; ++i) toks.push_back(int(rng.uniform_int(0, cfg.vocab_size - 1)));

    Tape t;
    SequenceInput full;
    for (int id : toks) full.push_token(id);
    ForwardOutput whole = forward(t, cfg, p, full, {});

    KVCache cache;
    SequenceInput prefix;
    for (int i = 0; i < 12; ++i) prefix.push_token(toks[size_t(i)]);
    forward(t, cfg, p, prefix, {}, &cache);
    SequenceInput last;
    last.push_token(toks.back());
    ForwardOutput inc = forward(t, cfg, p, last, {}, &cache);

    CHECK(max_abs_row_diff(whole.last_hidden, 12, inc.last_hidden, 0) < 1e-9);
    CHECK(max_abs_row_diff(whole.tapped, 12, inc.tapped, 0) < 1e-9);
    CHECK(max_abs_row_diff(whole.logits, 12, inc.logits, 0) < 1e-9);
}

TEST_CASE("causality: permuting future tokens leaves earlier outputs unchanged") {
    ModelConfig cfg = tiny_config();
    ModelParams p = ModelParams::init(cfg, 13);
    Tape t;
    SequenceInput a, b;
    std::vector<int> base{1, 2, 3, 4, 5, 6};
    for (int id : base) a.push_token(id);
    std::vector<int> permuted{1, 2, 3, 6, 4, 5};  // positions >= 3 shuffled
    for (int id : permuted) b.push_token(id);
    ForwardOutput fa = forward(t, cfg, p, a, {});
    ForwardOutput fb = forward(t, cfg, p, b, {});
    for (int pos = 0; pos < 3; ++pos)
        CHECK(max_abs_row_diff(fa.last_hidden, pos, fb.last_hidden, pos) == 0.0);
    CHECK(max_abs_row_diff(fa.last_hidden, 4, fb.last_hidden, 4) > 0.0);
}

TEST_CASE("zeroed weights reduce to the residual identity") {
    ModelConfig cfg = tiny_config();
    cfg.n_layers = 1;
    cfg.align_layer = 0;
    ModelParams p = ModelParams::init(cfg, 1);
    // zero everything that could move the residual stream
    for (auto& l : p.layers) {
        for (Tensor* w : {&l.wq, &l.wk, &l.wv, &l.wo, &l.w1, &l.w2})
            std::fill(w->store->begin(), w->store->end(), 0.0);
    }
    std::fill(p.pos_embed.store->begin(), p.pos_embed.store->end(), 0.0);

    Tape t;
    SequenceInput seq;
    seq.push_token(3);
    ForwardOutput out = forward(t, cfg, p, seq, {});
    // last_hidden should be the layer-normalized input embedding
    Tensor emb = embed_inputs(t, cfg, p, seq, {});
    Tensor ref = layer_norm(t, emb, p.final_ln_g, p.final_ln_b);
    CHECK(max_abs_row_diff(out.last_hidden, 0, ref, 0) < 1e-12);
}

TEST_CASE("tapped hidden identical with and without logits") {
    ModelConfig cfg = tiny_config();
    ModelParams p = ModelParams::init(cfg, 19);
    Tape t;
    SequenceInput seq;
    for (int id : {4, 9, 2}) seq.push_token(id);
    ForwardOutput with = forward(t, cfg, p, seq, {}, nullptr, true);
    ForwardOutput without = forward(t, cfg, p, seq, {}, nullptr, false);
    CHECK(std::memcmp(with.tapped.data(), without.tapped.data(),
                      size_t(with.tapped.size()) * sizeof(double)) == 0);
    CHECK_FALSE(without.logits.defined());
}

TEST_CASE("parameter count is a deterministic function of the config") {
    ModelConfig cfg = tiny_config();
    const int d = cfg.d_model, V = cfg.vocab_size, L = cfg.max_seq_len;
    const int S = cfg.patches_per_image(), pin = 3 * 16;
    int64_t expect = int64_t(V) * d + int64_t(L) * d + pin * d + d + int64_t(S) * d;
    expect += int64_t(cfg.n_layers) * (4 * d * d + 4 * d + 4 * d + 2 * (d * cfg.d_ff) + cfg.d_ff + d);
    expect += 2 * d;                  // final norm
    expect += int64_t(d) * V + V;     // lm head
    CHECK(param_count(cfg) == expect);
    CHECK(param_count(cfg) == param_count(cfg));
}

TEST_CASE("lm_head: linearity, shape, gradient") {
    ModelConfig cfg = tiny_config();
    ModelParams p = ModelParams::init(cfg, 23);
    Tape t;
    Tensor zero_h = Tensor::zeros({cfg.d_model});
    Tensor logits = lm_head(t, p, zero_h);
    REQUIRE(logits.shape == std::vector<int>{1, cfg.vocab_size});
    for (int j = 0; j < cfg.vocab_size; ++j) CHECK(logits.at(0, j) == 0.0);  // zero weights, zero bias

    Rng rng(29);
    for (int64_t i = 0; i < p.lm_w.size(); ++i) p.lm_w.mut()[i] = rng.gauss() * 0.1;
    Tensor h0 = Tensor::zeros({cfg.d_model});
    for (int i = 0; i < cfg.d_model; ++i) h0.mut()[i] = rng.gauss();
    std::vector<double> flat(h0.data(), h0.data() + h0.size());
    Tape tape;
    Tensor h = h0;
    h.node = tape.leaf(h.size());
    Tensor y = sum_all(tape, mul(tape, lm_head(tape, p, h), lm_head(tape, p, h)));
    tape.backward(y.node);
    auto analytic = tape.grad(h.node);
    auto f = [&](const std::vector<double>& vals) {
        Tape t2;
        Tensor hh = Tensor::from({cfg.d_model}, vals);
        return sum_all(t2, mul(t2, lm_head(t2, p, hh), lm_head(t2, p, hh))).item();
    };
    CHECK(valr::test::fd_max_rel_err(f, flat, analytic) < 1e-5);
}

TEST_CASE("forward rejects overflow and stale caches") {
    ModelConfig cfg = tiny_config();
    cfg.max_seq_len = 4;
    ModelParams p = ModelParams::init(cfg, 31);
    Tape t;
    SequenceInput seq;
    for (int i = 0; i < 5; ++i) seq.push_token(1);
    CHECK_THROWS_WITH_AS(forward(t, cfg, p, seq, {}), doctest::Contains("max_seq_len"), Error);

    KVCache cache;
    cache.init(cfg.n_layers);
    cache.length = 2;  // lies about cached rows
    SequenceInput one;
    one.push_token(1);
    CHECK_THROWS_WITH_AS(forward(t, cfg, p, one, {}, &cache), doctest::Contains("stale"), Error);
}

TEST_CASE("checkpoint round-trip reproduces logits bitwise") {
    ModelConfig cfg = tiny_config();
    ModelParams p = ModelParams::init(cfg, 37);
    Rng rng(41);
    for (int64_t i = 0; i < p.lm_w.size(); ++i) p.lm_w.mut()[i] = rng.gauss() * 0.05;

    Checkpoint ck;
    ck.config = cfg;
    ck.meta_json = R"({"stage":1})";
    ck.put_model(p);
    auto path = (std::filesystem::temp_directory_path() / "valr_ck_test.valrckpt").string();
    save_checkpoint(path, ck);
    Checkpoint back = load_checkpoint(path);
    CHECK(back.config.to_json() == cfg.to_json());
    ModelParams p2 = back.take_model();

    Tape t;
    SequenceInput seq;
    for (int id : {2, 7, 19}) seq.push_token(id);
    ForwardOutput a = forward(t, cfg, p, seq, {});
    ForwardOutput b = forward(t, cfg, p2, seq, {});
    CHECK(std::memcmp(a.logits.data(), b.logits.data(), size_t(a.logits.size()) * sizeof(double)) ==
          0);
    std::filesystem::remove(path);
}
