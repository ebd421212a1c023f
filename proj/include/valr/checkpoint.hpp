#pragma once

#include <map>
#include <string>

#include "valr/model.hpp"

namespace valr {

// Checkpoint file: little-endian, magic "VALRCKPT", version u32 = 1, config
// as a u32-length-prefixed UTF-8 JSON blob (model config plus run metadata:
// vocabulary, stage, projection-head dims, optimizer step), then a named
// tensor table: count u32, per tensor name (u16 length + bytes), rank u8,
// dims u32 each, f64 payload. Model params, projection heads, and optimizer
// moments all live in the one table under distinct name prefixes.
struct Checkpoint {
    ModelConfig config;
    std::string meta_json;  // full config blob, including "model"
    std::map<std::string, Tensor> tensors;

    void put_model(const ModelParams& p);                 // names as in for_each_param
    ModelParams take_model() const;                       // rebuilds from the table
    bool has(const std::string& name) const { return tensors.count(name) > 0; }
    const Tensor& at(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace valr
