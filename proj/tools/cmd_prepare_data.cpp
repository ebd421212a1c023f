#include <filesystem>
#include <iostream>

#include <json.hpp>

#include "commands.hpp"
#include "valr/manifest.hpp"
#include "valr/matcher.hpp"
#include "valr/rng.hpp"

namespace valr::cli {

namespace {

std::vector<ReasoningSample> build_split(int n, const GeneratorOptions& opt, uint64_t seed,
                                         const StepImageMatcher& matcher, bool skip_failures) {
    auto generated = generate_synthetic(n, opt, seed);
    std::vector<ReasoningSample> out;
    out.reserve(generated.size());
    int skipped = 0;
    for (auto& g : generated) {
        try {
            out.push_back(assign_targets(g.sample, matcher));
        } catch (const Error& e) {
            if (!skip_failures) throw;
            ++skipped;
            std::cerr << "[prepare-data] skipping " << g.sample.sample_id << ": " << e.what()
                      << "\n";
        }
    }
    if (skipped > 0)
        std::cerr << "[prepare-data] " << skipped << " of " << n << " samples failed curation\n";
    return out;
}

}  // namespace

int run_prepare_data(const PrepareDataOptions& opt) {
    if (opt.out_dir.empty()) fail("prepare-data: --out is required");
    std::filesystem::create_directories(opt.out_dir);

    GeneratorOptions gopt;
    gopt.families.clear();
    for (const auto& f : split_csv(opt.families)) gopt.families.push_back(family_from_name(f));
    for (const auto& r : split_csv(opt.regimes)) {
        if (r == "multi") continue;  // the default regime
        if (r == "single") gopt.p_single = 0.15;
        else if (r == "interleaved") gopt.p_interleaved = 0.15;
        else fail("prepare-data: unknown regime '" + r + "'");
    }

    std::unique_ptr<StepImageMatcher> matcher;
    if (opt.matcher == "rule") {
        matcher = std::make_unique<RuleBasedMatcher>();
    } else if (opt.matcher == "external") {
        if (opt.matcher_url.empty()) fail("prepare-data: --matcher external needs --matcher-url");
        ExternalMatcherConfig mc;
        mc.url = opt.matcher_url;
        mc.fallback_to_rules = opt.matcher_fallback;
        matcher = std::make_unique<ExternalLlmMatcher>(mc);
    } else {
        fail("prepare-data: unknown matcher '" + opt.matcher + "' (expected rule|external)");
    }

    std::string train_path = (std::filesystem::path(opt.out_dir) / "train.jsonl").string();
    std::string eval_path = (std::filesystem::path(opt.out_dir) / "eval.jsonl").string();
    std::vector<std::string> outputs{train_path, eval_path};

    auto enc_names = split_csv(opt.encoders);
    std::vector<std::string> store_paths;
    if (!opt.features_out.empty())
        for (const auto& name : enc_names)
            store_paths.push_back((std::filesystem::path(opt.features_out) / (name + ".valrfeat"))
                                      .string());
    for (const auto& p : store_paths) outputs.push_back(p);

    nlohmann::json cfg{{"families", opt.families}, {"n_train", opt.n_train},
                       {"n_eval", opt.n_eval},     {"matcher", opt.matcher},
                       {"regimes", opt.regimes},   {"encoders", opt.encoders}};
    RunManifest manifest =
        RunManifest::begin("prepare-data", cfg.dump(), opt.seed, {}, outputs, opt.out_dir);

    Rng master(opt.seed);
    const bool skip_failures = opt.matcher == "external";

    GeneratorOptions train_opt = gopt;
    train_opt.id_prefix = "train/";
    auto train_set = build_split(opt.n_train, train_opt, master.split(1).seed(), *matcher,
                                 skip_failures);
    save_jsonl(train_set, train_path);
    std::cerr << "[prepare-data] wrote " << train_set.size() << " samples to " << train_path
              << "\n";

    // held-out split draws from a disjoint seed stream
    GeneratorOptions eval_opt = gopt;
    eval_opt.id_prefix = "eval/";
    auto eval_set = build_split(opt.n_eval, eval_opt, master.split(2).seed(), *matcher,
                                skip_failures);
    save_jsonl(eval_set, eval_path);
    std::cerr << "[prepare-data] wrote " << eval_set.size() << " samples to " << eval_path << "\n";

    if (!opt.features_out.empty()) {
        std::vector<ReasoningSample> all = train_set;
        all.insert(all.end(), eval_set.begin(), eval_set.end());
        extract_feature_stores(all, enc_names, opt.features_out, opt.seed);
    }

    manifest.finish(opt.out_dir);
    return 0;
}

}  // namespace valr::cli
