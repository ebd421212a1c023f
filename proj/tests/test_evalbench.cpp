#include <doctest.h>

#include <cstring>

#include "valr/evalbench.hpp"
#include "valr/rng.hpp"

using namespace valr;

namespace {

std::vector<ReasoningSample> eval_corpus(int n, uint64_t seed) {
    GeneratorOptions opt;
    opt.families = {TaskFamily::Count, TaskFamily::AppearanceOrder};
    auto gen = generate_synthetic(n, opt, seed);
    RuleBasedMatcher rules;
    std::vector<ReasoningSample> out;
    for (auto& g : gen) out.push_back(assign_targets(g.sample, rules));
    return out;
}

// replays the ground-truth continuation: steps, marker, answer
DecodeResult oracle_decode(const ReasoningSample& s, const Vocabulary& vocab) {
    DecodeResult res;
    for (const auto& st : s.steps)
        for (int id : vocab.encode(st.text)) res.tokens.push_back(id);
    res.tokens.push_back(Vocabulary::kAnswerMarker);
    for (int id : vocab.encode(s.answer)) res.tokens.push_back(id);
    return res;
}

}  // namespace

TEST_CASE("oracle model that replays ground truth scores accuracy 1.0") {
    const Vocabulary& vocab = Vocabulary::standard();
    auto corpus = eval_corpus(40, 9);
    auto rep = evaluate_with([&](const ReasoningSample& s) { return oracle_decode(s, vocab); },
                             corpus, vocab);
    CHECK(rep.overall.n == 40);
    CHECK(rep.overall.accuracy() == 1.0);
    CHECK(rep.missing_marker == 0);
    CHECK(rep.per_family.count("count") == 1);
    CHECK(rep.per_family.count("appearance_order") == 1);
    for (const auto& [name, cell] : rep.per_family) CHECK(cell.accuracy() == 1.0);
}

TEST_CASE("empty answers score 0.0 and are flagged") {
    const Vocabulary& vocab = Vocabulary::standard();
    auto corpus = eval_corpus(10, 11);
    auto rep = evaluate_with([&](const ReasoningSample&) { return DecodeResult{}; }, corpus, vocab);
    CHECK(rep.overall.accuracy() == 0.0);
    CHECK(rep.missing_marker == 10);
}

TEST_CASE("length buckets are fully populated bookkeeping") {
    const Vocabulary& vocab = Vocabulary::standard();
    auto corpus = eval_corpus(200, 13);
    Rng rng(5);
    // decoder emitting variable-length junk with a marker
    auto fn = [&](const ReasoningSample&) {
        DecodeResult res;
        Rng local(rng.next_u64());
        int len = int(local.uniform_int(0, 40));
        for (int i = 0; i < len; ++i) res.tokens.push_back(int(Vocabulary::kSize - 1));
        res.tokens.push_back(Vocabulary::kAnswerMarker);
        res.tokens.push_back(vocab.id("no"));
        return res;
    };
    auto rep = evaluate_with(fn, corpus, vocab, 1);
    int total = 0;
    for (const auto& cell : rep.per_length_bucket) total += cell.n;
    CHECK(total == 200);
    CHECK(rep.overall.n == 200);
}

TEST_CASE("evaluation neither mutates parameters nor varies across runs") {
    ModelConfig cfg;
    cfg.vocab_size = Vocabulary::kSize;
    cfg.d_model = 16;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.d_ff = 32;
    cfg.max_seq_len = 256;
    cfg.align_layer = 0;
    cfg.K = 4;
    ModelParams params = ModelParams::init(cfg, 3);
    Rng rng(7);
    for (int64_t i = 0; i < params.lm_w.size(); ++i) params.lm_w.mut()[i] = rng.gauss() * 0.2;

    auto corpus = eval_corpus(6, 21);
    DecodeConfig dcfg;
    dcfg.K = 4;
    dcfg.max_new_positions = 48;
    dcfg.latent_open = Vocabulary::kLatentOpen;
    dcfg.latent_close = Vocabulary::kLatentClose;
    dcfg.eos = Vocabulary::kEos;

    std::vector<double> before(params.lm_w.data(), params.lm_w.data() + params.lm_w.size());
    auto r1 = evaluate(cfg, params, corpus, dcfg);
    auto r2 = evaluate(cfg, params, corpus, dcfg);
    CHECK(std::memcmp(before.data(), params.lm_w.data(), before.size() * sizeof(double)) == 0);
    CHECK(r1.to_json() == r2.to_json());
}

TEST_CASE("compare: identical checkpoints give identical rows, stdev over 3 seeds") {
    ModelConfig cfg;
    cfg.vocab_size = Vocabulary::kSize;
    cfg.d_model = 16;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.d_ff = 32;
    cfg.max_seq_len = 256;
    cfg.align_layer = 0;
    cfg.K = 4;
    ModelParams params = ModelParams::init(cfg, 3);
    Rng rng(7);
    for (int64_t i = 0; i < params.lm_w.size(); ++i) params.lm_w.mut()[i] = rng.gauss() * 0.2;

    auto corpus = eval_corpus(12, 31);
    DecodeConfig dcfg;
    dcfg.K = 4;
    dcfg.max_new_positions = 32;
    dcfg.latent_open = Vocabulary::kLatentOpen;
    dcfg.latent_close = Vocabulary::kLatentClose;
    dcfg.eos = Vocabulary::kEos;

    auto rows = compare({{"a", &params}, {"b", &params}}, cfg, corpus, dcfg, {1, 2, 3});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].mean == rows[1].mean);
    CHECK(rows[0].stdev == rows[1].stdev);
    CHECK(rows[0].reports.size() == 3);
    // text table renders one row per checkpoint with family columns
    auto text = compare_table_text(rows);
    CHECK(text.find("a") != std::string::npos);
    CHECK(text.find("count") != std::string::npos);
    CHECK_THROWS_AS(compare({{"only", &params}}, cfg, corpus, dcfg, {1}), Error);
}
