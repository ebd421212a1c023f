#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "valr/manifest.hpp"

using namespace valr::cli;

int main(int argc, char** argv) {
    CLI::App app{"valr: latent-reasoning multimodal transformer, desk scale"};
    app.set_version_flag("--version", valr::kValrVersion);
    app.require_subcommand(1);
    uint64_t seed = 0;

    PrepareDataOptions prep;
    auto* c_prep = app.add_subcommand("prepare-data", "generate synthetic corpora");
    c_prep->add_option("--out", prep.out_dir, "output directory")->required();
    c_prep->add_option("--families", prep.families, "task families, csv");
    c_prep->add_option("--n-train", prep.n_train, "training samples");
    c_prep->add_option("--n-eval", prep.n_eval, "held-out samples");
    c_prep->add_option("--seed", prep.seed, "master seed");
    c_prep->add_option("--matcher", prep.matcher, "rule|external");
    c_prep->add_option("--matcher-url", prep.matcher_url, "external matcher endpoint");
    c_prep->add_flag("!--no-matcher-fallback", prep.matcher_fallback,
                     "fail samples instead of falling back to rules");
    c_prep->add_option("--regimes", prep.regimes, "csv of multi,single,interleaved");
    c_prep->add_option("--features-out", prep.features_out, "also extract feature stores here");
    c_prep->add_option("--encoders", prep.encoders, "encoders for --features-out, csv");

    ExtractFeaturesOptions ext;
    auto* c_ext = app.add_subcommand("extract-features", "precompute frozen encoder features");
    c_ext->add_option("--data", ext.data_path, "corpus jsonl")->required();
    c_ext->add_option("--encoders", ext.encoders, "encoders, csv");
    c_ext->add_option("--out", ext.out_dir, "output directory")->required();
    c_ext->add_option("--seed", ext.seed, "seed for the seeded encoder");

    TrainOptions train;
    auto* c_train = app.add_subcommand("train", "run one training stage");
    c_train->add_option("--stage", train.stage, "1 or 2")->required();
    c_train->add_option("--config", train.config_path, "flat JSON config")->required();
    c_train->add_option("--data", train.data_path, "corpus jsonl")->required();
    c_train->add_option("--features", train.features_dir, "feature store directory (stage 2)");
    c_train->add_option("--init", train.init_checkpoint, "initial checkpoint");
    c_train->add_option("--out", train.out_dir, "output directory")->required();
    auto* train_seed = c_train->add_option("--seed", train.seed, "seed override");

    DecodeOptions dec;
    auto* c_dec = app.add_subcommand("decode", "greedy latent decoding from a prompt");
    c_dec->add_option("--checkpoint", dec.checkpoint, "model checkpoint")->required();
    c_dec->add_option("--prompt-file", dec.prompt_file, "prompt JSON")->required();
    c_dec->add_option("--max-new", dec.max_new, "position budget");
    c_dec->add_option("--trace-out", dec.trace_out, "trace JSONL path");

    EvalOptions ev;
    auto* c_ev = app.add_subcommand("eval", "exact-match evaluation");
    c_ev->add_option("--checkpoint", ev.checkpoints, "checkpoint(s)")->required();
    c_ev->add_option("--data", ev.data_path, "held-out corpus")->required();
    c_ev->add_option("--report-out", ev.report_out, "report JSON path");
    c_ev->add_option("--seeds", ev.seeds, "csv of evaluation seeds");

    SweepOptions sw;
    auto* c_sw = app.add_subcommand("sweep", "stage-2 ablation sweeps");
    c_sw->add_option("--axis", sw.axis, "lambda|K|align_layer")->required();
    c_sw->add_option("--values", sw.values, "csv of axis values")->required();
    c_sw->add_option("--config", sw.config_path, "flat JSON config")->required();
    c_sw->add_option("--data", sw.data_path, "training corpus")->required();
    c_sw->add_option("--eval-data", sw.eval_data_path, "held-out corpus")->required();
    c_sw->add_option("--features", sw.features_dir, "feature store directory");
    c_sw->add_option("--init", sw.init_checkpoint, "shared stage-1 checkpoint");
    c_sw->add_option("--out", sw.out_dir, "output directory")->required();
    c_sw->add_option("--seed", sw.seed, "master seed");
    (void)seed;

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*c_prep) return run_prepare_data(prep);
        if (*c_ext) return run_extract_features(ext);
        if (*c_train) {
            train.seed_set = train_seed->count() > 0;
            return run_train(train);
        }
        if (*c_dec) return run_decode(dec);
        if (*c_ev) return run_eval(ev);
        if (*c_sw) return run_sweep(sw);
    } catch (const valr::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
