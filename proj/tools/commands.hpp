#pragma once

#include <string>
#include <vector>

#include "valr/training.hpp"

namespace valr::cli {

// Flat key-value JSON config shared by train and sweep; unknown keys are
// rejected. Model keys: d_model, n_layers, n_heads, d_ff, max_seq_len,
// image_side, native_patch, align_layer, K. Train keys mirror TrainConfig.
// "encoders" is a comma-separated list (stage 2).
struct FlatConfig {
    ModelConfig model;
    TrainConfig train;
    std::vector<std::string> encoders;
};
FlatConfig parse_flat_config(const std::string& json_text, int stage);

std::vector<std::string> split_csv(const std::string& csv);

struct PrepareDataOptions {
    std::string out_dir;
    std::string families = "count,relative_position,appearance_order";
    int n_train = 20000;
    int n_eval = 2000;
    uint64_t seed = 0;
    std::string matcher = "rule";  // rule|external
    std::string matcher_url;
    bool matcher_fallback = true;
    std::string regimes = "multi";  // csv subset of multi,single,interleaved
    std::string features_out;       // optional
    std::string encoders;           // csv, with --features-out
};
int run_prepare_data(const PrepareDataOptions& opt);

struct ExtractFeaturesOptions {
    std::string data_path;
    std::string encoders = "dct,hist,randproj";
    std::string out_dir;
    uint64_t seed = 0;
};
int run_extract_features(const ExtractFeaturesOptions& opt);
// shared with prepare-data
void extract_feature_stores(const std::vector<ReasoningSample>& corpus,
                            const std::vector<std::string>& encoder_names,
                            const std::string& out_dir, uint64_t seed);

struct TrainOptions {
    int stage = 1;
    std::string config_path;
    std::string data_path;
    std::string features_dir;
    std::string init_checkpoint;
    std::string out_dir;
    uint64_t seed = 0;
    bool seed_set = false;
};
int run_train(const TrainOptions& opt);

struct DecodeOptions {
    std::string checkpoint;
    std::string prompt_file;
    int max_new = 256;
    std::string trace_out;
};
int run_decode(const DecodeOptions& opt);

struct EvalOptions {
    std::vector<std::string> checkpoints;
    std::string data_path;
    std::string report_out;
    std::string seeds;  // csv, empty = single full-corpus pass
};
int run_eval(const EvalOptions& opt);

struct SweepOptions {
    std::string axis;  // lambda|K|align_layer
    std::string values;
    std::string config_path;
    std::string data_path;
    std::string eval_data_path;
    std::string features_dir;
    std::string init_checkpoint;
    std::string out_dir;
    uint64_t seed = 0;
};
int run_sweep(const SweepOptions& opt);

}  // namespace valr::cli
