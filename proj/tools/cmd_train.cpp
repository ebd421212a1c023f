#include <filesystem>
#include <iostream>

#include <json.hpp>

#include "commands.hpp"
#include "valr/manifest.hpp"

namespace valr::cli {

using nlohmann::json;

namespace {

std::string vocab_meta() {
    const Vocabulary& v = Vocabulary::standard();
    json tokens = json::array();
    for (int i = 0; i < v.size(); ++i) tokens.push_back(v.token(i));
    return json{{"vocab", tokens}}.dump();
}

}  // namespace

int run_train(const TrainOptions& opt) {
    if (opt.config_path.empty() || opt.data_path.empty() || opt.out_dir.empty())
        fail("train: --config, --data and --out are required");

    FlatConfig cfg = parse_flat_config(read_text_file(opt.config_path), opt.stage);
    cfg.train.stage = opt.stage;
    if (opt.seed_set) {
        cfg.train.seed = opt.seed;
        cfg.model.seed = opt.seed;
    }

    std::string ckpt_path =
        (std::filesystem::path(opt.out_dir) / ("stage" + std::to_string(opt.stage) + ".valrckpt"))
            .string();
    std::string metrics_path = (std::filesystem::path(opt.out_dir) / "metrics.jsonl").string();

    std::vector<std::string> inputs{opt.config_path, opt.data_path};
    if (!opt.init_checkpoint.empty()) inputs.push_back(opt.init_checkpoint);

    FeatureSet features;
    if (opt.stage == 2 && cfg.train.lambda > 0) {
        if (opt.features_dir.empty())
            fail("train: stage 2 with lambda > 0 needs --features (run extract-features first)");
        if (cfg.encoders.empty())
            fail("train: stage 2 config must name encoders (\"encoders\" key)");
        for (const auto& name : cfg.encoders) {
            std::string path =
                (std::filesystem::path(opt.features_dir) / (name + ".valrfeat")).string();
            features.encoder_names.push_back(name);
            features.stores.push_back(FeatureStore::load(path));
            inputs.push_back(path);
        }
    }

    json mcfg{{"stage", opt.stage},
              {"config", json::parse(read_text_file(opt.config_path))},
              {"data", opt.data_path}};
    RunManifest manifest = RunManifest::begin("train", mcfg.dump(), cfg.train.seed, inputs,
                                              {ckpt_path, metrics_path}, opt.out_dir);

    auto corpus = load_jsonl(opt.data_path);
    std::cerr << "[train] stage " << opt.stage << ": " << corpus.size() << " samples\n";

    std::optional<Trainer> trainer;
    if (!opt.init_checkpoint.empty()) {
        Checkpoint init = load_checkpoint(opt.init_checkpoint);
        // architecture comes from the checkpoint; the config file still
        // controls optimization and (for fresh heads) the encoder set
        Checkpoint with_heads = init;
        json meta = json::parse(init.meta_json);
        bool has_heads = meta.contains("heads") && !meta.at("heads").empty();
        if (opt.stage == 2 && cfg.train.lambda > 0 && !has_heads) {
            json hmeta = json::array();
            for (size_t m = 0; m < features.stores.size(); ++m) {
                auto [P, D] = features.stores[m].first();
                (void)P;
                hmeta.push_back({{"encoder_name", features.encoder_names[m]}, {"out_dim", D}});
            }
            meta["heads"] = hmeta;
            // moments belong to the previous stage's parameter space
            for (auto it = with_heads.tensors.begin(); it != with_heads.tensors.end();)
                it = it->first.rfind("adam.", 0) == 0 ? with_heads.tensors.erase(it) : ++it;
            with_heads.meta_json = meta.dump();
        }
        trainer.emplace(Trainer::from_checkpoint(with_heads, cfg.train, std::move(features)));
    } else {
        if (opt.stage == 2) fail("train: stage 2 needs --init with the stage-1 checkpoint");
        ModelParams params = ModelParams::init(cfg.model, cfg.model.seed);
        trainer.emplace(cfg.model, cfg.train, std::move(params), std::vector<ProjectionHead>{},
                        std::move(features));
    }

    trainer->load_data(corpus);
    std::cerr << "[train] " << trainer->total_steps() << " optimizer steps\n";
    auto reports = trainer->run();

    std::string metrics;
    for (const auto& r : reports) {
        metrics += r.to_json();
        metrics += '\n';
    }
    write_file_atomic(metrics_path, metrics.data(), metrics.size());
    save_checkpoint(ckpt_path, trainer->make_checkpoint(vocab_meta()));
    std::cerr << "[train] checkpoint -> " << ckpt_path << "\n";

    manifest.finish(opt.out_dir);
    return 0;
}

}  // namespace valr::cli
