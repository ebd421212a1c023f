#include <filesystem>
#include <iostream>

#include <json.hpp>

#include "commands.hpp"
#include "valr/evalbench.hpp"
#include "valr/manifest.hpp"

namespace valr::cli {

using nlohmann::json;

namespace {

void validate_axis_value(const std::string& axis, double v, const ModelConfig& model) {
    if (axis == "lambda") {
        if (v < 0) fail("sweep: lambda must be >= 0, got " + std::to_string(v));
    } else if (axis == "K") {
        int k = int(v);
        if (double(k) != v || k < 1 || (k != 1 && !is_perfect_square(k)))
            fail("sweep: K values must be perfect squares or 1, got " + std::to_string(v));
    } else if (axis == "align_layer") {
        int l = int(v);
        if (double(l) != v || l < 0 || l >= model.n_layers)
            fail("sweep: align_layer " + std::to_string(v) + " outside [0," +
                 std::to_string(model.n_layers) + ")");
    } else {
        fail("sweep: unknown axis '" + axis + "' (expected lambda|K|align_layer)");
    }
}

}  // namespace

int run_sweep(const SweepOptions& opt) {
    if (opt.config_path.empty() || opt.data_path.empty() || opt.eval_data_path.empty() ||
        opt.out_dir.empty())
        fail("sweep: --config, --data, --eval-data and --out are required");

    FlatConfig base = parse_flat_config(read_text_file(opt.config_path), 2);
    base.train.seed = opt.seed;
    base.model.seed = opt.seed;

    std::vector<double> values;
    for (const auto& v : split_csv(opt.values)) values.push_back(std::stod(v));
    if (values.empty()) fail("sweep: no values given");
    // every value is validated before any training starts
    for (double v : values) validate_axis_value(opt.axis, v, base.model);

    std::filesystem::create_directories(opt.out_dir);
    json mcfg{{"axis", opt.axis}, {"values", opt.values},
              {"config", json::parse(read_text_file(opt.config_path))}};
    std::string merged_path = (std::filesystem::path(opt.out_dir) / "sweep.json").string();
    RunManifest manifest = RunManifest::begin(
        "sweep", mcfg.dump(), opt.seed,
        {opt.config_path, opt.data_path, opt.eval_data_path}, {merged_path}, opt.out_dir);

    auto train_corpus = load_jsonl(opt.data_path);
    auto eval_corpus = load_jsonl(opt.eval_data_path);

    // stage-1 init shared across values: none of the axes affect stage 1
    std::string stage1_path = opt.init_checkpoint;
    if (stage1_path.empty()) {
        std::cerr << "[sweep] no --init given, training a shared stage-1 checkpoint\n";
        TrainConfig tc1 = base.train;
        tc1.stage = 1;
        Trainer tr(base.model, tc1, ModelParams::init(base.model, base.model.seed), {}, {});
        tr.load_data(train_corpus);
        tr.run();
        stage1_path = (std::filesystem::path(opt.out_dir) / "stage1.valrckpt").string();
        save_checkpoint(stage1_path, tr.make_checkpoint());
    }

    json merged = json::array();
    for (double v : values) {
        FlatConfig cfg = base;
        ModelConfig mdl = cfg.model;
        TrainConfig tc = cfg.train;
        tc.stage = 2;
        std::string tag;
        if (opt.axis == "lambda") {
            tc.lambda = v;
            tag = "lambda_" + std::to_string(v);
        } else if (opt.axis == "K") {
            mdl.K = int(v);
            tag = "K_" + std::to_string(int(v));
        } else {
            mdl.align_layer = int(v);
            tag = "align_" + std::to_string(int(v));
        }
        std::cerr << "[sweep] " << tag << "\n";

        Checkpoint init = load_checkpoint(stage1_path);
        init.config.K = mdl.K;
        init.config.align_layer = mdl.align_layer;

        FeatureSet features;
        if (tc.lambda > 0) {
            if (opt.features_dir.empty() || cfg.encoders.empty())
                fail("sweep: lambda > 0 needs --features and an \"encoders\" config key");
            json meta = json::parse(init.meta_json);
            json hmeta = json::array();
            for (const auto& name : cfg.encoders) {
                std::string path =
                    (std::filesystem::path(opt.features_dir) / (name + ".valrfeat")).string();
                features.encoder_names.push_back(name);
                features.stores.push_back(FeatureStore::load(path));
                auto [P, D] = features.stores.back().first();
                (void)P;
                hmeta.push_back({{"encoder_name", name}, {"out_dim", D}});
            }
            meta["heads"] = hmeta;
            init.meta_json = meta.dump();
        }
        for (auto it = init.tensors.begin(); it != init.tensors.end();)
            it = it->first.rfind("adam.", 0) == 0 ? init.tensors.erase(it) : ++it;

        Trainer tr = Trainer::from_checkpoint(init, tc, std::move(features));
        tr.load_data(train_corpus);
        tr.run();

        std::string ck_path = (std::filesystem::path(opt.out_dir) / (tag + ".valrckpt")).string();
        save_checkpoint(ck_path, tr.make_checkpoint());

        DecodeConfig dcfg;
        dcfg.K = mdl.K;
        dcfg.max_new_positions = 192;
        dcfg.latent_open = Vocabulary::kLatentOpen;
        dcfg.latent_close = Vocabulary::kLatentClose;
        dcfg.eos = Vocabulary::kEos;
        ModelConfig eval_cfg = init.config;
        EvalReport rep = evaluate(eval_cfg, tr.params(), eval_corpus, dcfg);
        rep.checkpoint_id = ck_path;

        json row{{"axis", opt.axis}, {"value", v}, {"checkpoint", ck_path},
                 {"report", json::parse(rep.to_json())}};
        merged.push_back(row);
        std::cout << tag << ": accuracy " << rep.overall.accuracy() << "\n";
    }

    std::string text = merged.dump(2);
    write_file_atomic(merged_path, text.data(), text.size());
    std::cerr << "[sweep] merged report -> " << merged_path << "\n";
    manifest.finish(opt.out_dir);
    return 0;
}

}  // namespace valr::cli
