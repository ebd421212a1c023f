#include <filesystem>
#include <iostream>

#include <json.hpp>

#include "commands.hpp"
#include "valr/encoders.hpp"
#include "valr/manifest.hpp"

namespace valr::cli {

void extract_feature_stores(const std::vector<ReasoningSample>& corpus,
                            const std::vector<std::string>& encoder_names,
                            const std::string& out_dir, uint64_t seed) {
    if (corpus.empty()) fail("extract-features: empty corpus");
    if (encoder_names.empty()) fail("extract-features: no encoders requested");
    std::filesystem::create_directories(out_dir);
    const int side = corpus[0].images[0].side;
    EncoderRegistry registry = EncoderRegistry::standard(side, encoder_names, seed);
    for (size_t m = 0; m < registry.size(); ++m) {
        const Encoder& enc = registry.at(m);
        FeatureStore store;
        for (const auto& s : corpus)
            for (const auto& img : s.images) store.add(s.sample_id, img.image_id,
                                                       enc.encode(s.sample_id, img));
        std::string path = (std::filesystem::path(out_dir) / (enc.name() + ".valrfeat")).string();
        store.save(path);
        std::cerr << "[extract-features] " << enc.name() << ": " << store.size() << " entries -> "
                  << path << "\n";
    }
}

int run_extract_features(const ExtractFeaturesOptions& opt) {
    if (opt.data_path.empty() || opt.out_dir.empty())
        fail("extract-features: --data and --out are required");
    auto corpus = load_jsonl(opt.data_path);
    auto names = split_csv(opt.encoders);

    std::vector<std::string> outputs;
    for (const auto& n : names)
        outputs.push_back((std::filesystem::path(opt.out_dir) / (n + ".valrfeat")).string());
    nlohmann::json cfg{{"data", opt.data_path}, {"encoders", opt.encoders}};
    RunManifest manifest = RunManifest::begin("extract-features", cfg.dump(), opt.seed,
                                              {opt.data_path}, outputs, opt.out_dir);

    extract_feature_stores(corpus, names, opt.out_dir, opt.seed);
    manifest.finish(opt.out_dir);
    return 0;
}

}  // namespace valr::cli
