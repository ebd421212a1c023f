#include "valr/evalbench.hpp"

#include <algorithm>
#include <cctype>
#include <future>
#include <sstream>

#include <json.hpp>

#include "valr/rng.hpp"

namespace valr {

using nlohmann::json;

std::string EvalReport::to_json() const {
    json j;
    j["n"] = overall.n;
    j["correct"] = overall.correct;
    j["accuracy"] = overall.accuracy();
    json fam = json::object();
    for (const auto& [name, cell] : per_family)
        fam[name] = {{"n", cell.n}, {"correct", cell.correct}, {"accuracy", cell.accuracy()}};
    j["per_family"] = fam;
    json buckets = json::array();
    for (size_t b = 0; b < per_length_bucket.size(); ++b) {
        std::string label = "[" + std::to_string(kLengthBucketEdges[b]) + "," +
                            (b + 1 < kLengthBucketEdges.size()
                                 ? std::to_string(kLengthBucketEdges[b + 1])
                                 : "inf") +
                            ")";
        buckets.push_back({{"bucket", label},
                           {"n", per_length_bucket[b].n},
                           {"correct", per_length_bucket[b].correct},
                           {"accuracy", per_length_bucket[b].accuracy()}});
    }
    j["per_length_bucket"] = buckets;
    j["missing_marker"] = missing_marker;
    j["seed"] = seed;
    j["checkpoint_id"] = checkpoint_id;
    j["decode_k"] = decode_k;
    j["max_new_positions"] = max_new_positions;
    return j.dump();
}

SequenceInput make_prompt(const ReasoningSample& sample, const Vocabulary& vocab,
                          int patches_per_image) {
    SequenceInput seq;
    seq.push_token(Vocabulary::kBos);
    for (size_t i = 0; i < sample.images.size(); ++i)
        for (int s = 0; s < patches_per_image; ++s) seq.push_patch(int(i), s);
    for (int id : vocab.encode(sample.question)) seq.push_token(id);
    return seq;
}

std::optional<std::string> extract_answer(const std::vector<int>& tokens, const Vocabulary& vocab) {
    auto it = std::find(tokens.begin(), tokens.end(), Vocabulary::kAnswerMarker);
    if (it == tokens.end()) return std::nullopt;
    std::vector<int> tail(it + 1, tokens.end());
    std::string text = vocab.decode(tail, true);
    // case-fold and trim
    std::string out;
    for (char c : text) out += char(std::tolower(uint8_t(c)));
    size_t a = out.find_first_not_of(" \t\n");
    size_t b = out.find_last_not_of(" \t\n");
    if (a == std::string::npos) return std::string();
    return out.substr(a, b - a + 1);
}

namespace {

std::string family_of(const std::string& sample_id) {
    auto dash = sample_id.find_last_of('-');
    std::string stem = dash == std::string::npos ? sample_id : sample_id.substr(0, dash);
    auto slash = stem.find_last_of('/');
    return slash == std::string::npos ? stem : stem.substr(slash + 1);
}

std::string folded(const std::string& s) {
    std::string out;
    for (char c : s) out += char(std::tolower(uint8_t(c)));
    size_t a = out.find_first_not_of(" \t\n");
    size_t b = out.find_last_not_of(" \t\n");
    return a == std::string::npos ? std::string() : out.substr(a, b - a + 1);
}

struct SampleOutcome {
    bool correct = false;
    bool missing_marker = false;
    int gen_len = 0;
};

}  // namespace

EvalReport evaluate_with(const DecodeFn& decode_fn, const std::vector<ReasoningSample>& corpus,
                         const Vocabulary& vocab, int n_threads) {
    EvalReport rep;
    std::vector<SampleOutcome> outcomes(corpus.size());
    auto eval_one = [&](size_t i) {
        const ReasoningSample& s = corpus[i];
        DecodeResult res = decode_fn(s);
        SampleOutcome o;
        o.gen_len = int(res.tokens.size());
        auto answer = extract_answer(res.tokens, vocab);
        if (!answer.has_value()) {
            o.missing_marker = true;
            o.correct = false;
        } else {
            o.correct = *answer == folded(s.answer);
        }
        return o;
    };
    const int workers = std::max(1, n_threads);
    for (size_t base = 0; base < corpus.size(); base += size_t(workers)) {
        std::vector<std::future<SampleOutcome>> futs;
        size_t lim = std::min(corpus.size(), base + size_t(workers));
        for (size_t i = base + 1; i < lim; ++i)
            futs.push_back(std::async(std::launch::async, eval_one, i));
        outcomes[base] = eval_one(base);
        for (size_t i = base + 1; i < lim; ++i) outcomes[i] = futs[i - base - 1].get();
    }

    for (size_t i = 0; i < corpus.size(); ++i) {
        const SampleOutcome& o = outcomes[i];
        ++rep.overall.n;
        rep.overall.correct += o.correct ? 1 : 0;
        EvalCell& fam = rep.per_family[family_of(corpus[i].sample_id)];
        ++fam.n;
        fam.correct += o.correct ? 1 : 0;
        size_t b = kLengthBucketEdges.size() - 1;
        while (b > 0 && o.gen_len < kLengthBucketEdges[b]) --b;
        ++rep.per_length_bucket[b].n;
        rep.per_length_bucket[b].correct += o.correct ? 1 : 0;
        rep.missing_marker += o.missing_marker ? 1 : 0;
    }
    return rep;
}

EvalReport evaluate(const ModelConfig& cfg, const ModelParams& params,
                    const std::vector<ReasoningSample>& corpus, const DecodeConfig& dcfg,
                    int n_threads) {
    const Vocabulary& vocab = Vocabulary::standard();
    DecodeFn fn = [&](const ReasoningSample& s) {
        SequenceInput prompt = make_prompt(s, vocab, cfg.patches_per_image());
        return decode(cfg, params, prompt, s.images, dcfg);
    };
    EvalReport rep = evaluate_with(fn, corpus, vocab, n_threads);
    rep.decode_k = dcfg.K;
    rep.max_new_positions = dcfg.max_new_positions;
    return rep;
}

std::vector<CompareRow> compare(
    const std::vector<std::pair<std::string, const ModelParams*>>& models, const ModelConfig& cfg,
    const std::vector<ReasoningSample>& corpus, const DecodeConfig& dcfg,
    const std::vector<uint64_t>& seeds, int n_threads) {
    if (models.size() < 2) fail("compare: need at least two checkpoints");
    if (seeds.empty()) fail("compare: need at least one seed");

    std::vector<CompareRow> rows;
    for (const auto& [id, params] : models) {
        CompareRow row;
        row.checkpoint_id = id;
        std::map<std::string, double> fam_sums;
        for (uint64_t seed : seeds) {
            // seed 0 evaluates the full corpus; otherwise a deterministic
            // half-subsample measures evaluation-set variation
            std::vector<ReasoningSample> subset;
            if (seed == 0) {
                subset = corpus;
            } else {
                std::vector<int> idx(corpus.size());
                for (size_t i = 0; i < idx.size(); ++i) idx[i] = int(i);
                Rng rng(seed);
                for (size_t k = idx.size(); k > 1; --k)
                    std::swap(idx[k - 1], idx[size_t(rng.uniform_int(0, int64_t(k) - 1))]);
                size_t keep = std::max<size_t>(1, corpus.size() / 2);
                idx.resize(keep);
                std::sort(idx.begin(), idx.end());
                for (int i : idx) subset.push_back(corpus[size_t(i)]);
            }
            EvalReport rep = evaluate(cfg, *params, subset, dcfg, n_threads);
            rep.seed = seed;
            rep.checkpoint_id = id;
            for (const auto& [name, cell] : rep.per_family) fam_sums[name] += cell.accuracy();
            row.reports.push_back(std::move(rep));
        }
        double sum = 0;
        for (const auto& r : row.reports) sum += r.overall.accuracy();
        row.mean = sum / double(row.reports.size());
        double var = 0;
        for (const auto& r : row.reports) {
            double d = r.overall.accuracy() - row.mean;
            var += d * d;
        }
        row.stdev = row.reports.size() > 1 ? std::sqrt(var / double(row.reports.size() - 1)) : 0.0;
        for (auto& [name, s] : fam_sums) row.per_family_mean[name] = s / double(row.reports.size());
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string compare_table_json(const std::vector<CompareRow>& rows) {
    json out = json::array();
    for (const auto& r : rows) {
        json j{{"checkpoint", r.checkpoint_id}, {"mean", r.mean}, {"stdev", r.stdev}};
        json fam = json::object();
        for (const auto& [name, v] : r.per_family_mean) fam[name] = v;
        j["per_family_mean"] = fam;
        json reps = json::array();
        for (const auto& rep : r.reports) reps.push_back(json::parse(rep.to_json()));
        j["reports"] = reps;
        out.push_back(j);
    }
    return out.dump(2);
}

std::string compare_table_text(const std::vector<CompareRow>& rows) {
    std::ostringstream out;
    out << "checkpoint                        mean    stdev";
    std::vector<std::string> fams;
    if (!rows.empty())
        for (const auto& [name, v] : rows[0].per_family_mean) fams.push_back(name);
    for (const auto& f : fams) out << "  " << f;
    out << "\n";
    for (const auto& r : rows) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%-32s %.4f  %.4f", r.checkpoint_id.c_str(), r.mean,
                      r.stdev);
        out << buf;
        for (const auto& f : fams) {
            auto it = r.per_family_mean.find(f);
            std::snprintf(buf, sizeof(buf), "  %.4f", it == r.per_family_mean.end() ? 0.0 : it->second);
            out << buf;
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace valr
