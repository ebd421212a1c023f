#include <sstream>

#include <json.hpp>

#include "commands.hpp"

namespace valr::cli {

using nlohmann::json;

std::vector<std::string> split_csv(const std::string& csv) {
    std::vector<std::string> out;
    std::istringstream in(csv);
    std::string item;
    while (std::getline(in, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

FlatConfig parse_flat_config(const std::string& json_text, int stage) {
    json j = json::parse(json_text);
    if (!j.is_object()) fail("config: expected a flat JSON object");
    FlatConfig cfg;
    cfg.train = TrainConfig::defaults(stage);
    cfg.model.vocab_size = Vocabulary::kSize;

    for (const auto& [key, value] : j.items()) {
        if (key == "d_model") cfg.model.d_model = value.get<int>();
        else if (key == "n_layers") cfg.model.n_layers = value.get<int>();
        else if (key == "n_heads") cfg.model.n_heads = value.get<int>();
        else if (key == "d_ff") cfg.model.d_ff = value.get<int>();
        else if (key == "max_seq_len") cfg.model.max_seq_len = value.get<int>();
        else if (key == "image_side") cfg.model.image_side = value.get<int>();
        else if (key == "native_patch") cfg.model.native_patch = value.get<int>();
        else if (key == "align_layer") cfg.model.align_layer = value.get<int>();
        else if (key == "K") cfg.model.K = value.get<int>();
        else if (key == "lr_backbone") cfg.train.lr_backbone = value.get<double>();
        else if (key == "lr_heads") cfg.train.lr_heads = value.get<double>();
        else if (key == "weight_decay") cfg.train.weight_decay = value.get<double>();
        else if (key == "warmup_ratio") cfg.train.warmup_ratio = value.get<double>();
        else if (key == "epochs") cfg.train.epochs = value.get<int>();
        else if (key == "batch_size") cfg.train.batch_size = value.get<int>();
        else if (key == "grad_accum") cfg.train.grad_accum = value.get<int>();
        else if (key == "lambda") cfg.train.lambda = value.get<double>();
        else if (key == "detach_feedback") cfg.train.detach_feedback = value.get<bool>();
        else if (key == "grad_clip") cfg.train.grad_clip = value.get<double>();
        else if (key == "n_threads") cfg.train.n_threads = value.get<int>();
        else if (key == "log_every") cfg.train.log_every = value.get<int>();
        else if (key == "probe_every") cfg.train.probe_every = value.get<int>();
        else if (key == "probe_size") cfg.train.probe_size = value.get<int>();
        else if (key == "seed") cfg.train.seed = value.get<uint64_t>();
        else if (key == "encoders") {
            if (value.is_string()) cfg.encoders = split_csv(value.get<std::string>());
            else
                for (const auto& e : value) cfg.encoders.push_back(e.get<std::string>());
        } else {
            fail("config: unknown key '" + key + "'");
        }
    }
    cfg.model.seed = cfg.train.seed;
    cfg.model.validate();
    cfg.train.validate();
    return cfg;
}

}  // namespace valr::cli
