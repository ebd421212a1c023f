#include "valr/checkpoint.hpp"

#include <cstring>

#include <json.hpp>

namespace valr {

namespace {
constexpr char kMagic[8] = {'V', 'A', 'L', 'R', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;
}  // namespace

void Checkpoint::put_model(const ModelParams& p) {
    for_each_param(p, [&](const std::string& name, const Tensor& t) {
        tensors["model." + name] = t.detached();
    });
}

ModelParams Checkpoint::take_model() const {
    ModelParams p = ModelParams::init(config, config.seed);
    for_each_param(p, [&](const std::string& name, Tensor& t) {
        const Tensor& src = at("model." + name);
        if (src.shape != t.shape) fail("checkpoint: shape mismatch for model." + name);
        t = src.detached();
    });
    return p;
}

const Tensor& Checkpoint::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) fail("checkpoint: missing tensor " + name);
    return it->second;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    ByteWriter w;
    w.raw(kMagic, 8);
    w.u32(kVersion);
    // meta_json must embed the model config under "model"
    nlohmann::json meta = ck.meta_json.empty() ? nlohmann::json::object()
                                               : nlohmann::json::parse(ck.meta_json);
    meta["model"] = nlohmann::json::parse(ck.config.to_json());
    w.str_u32(meta.dump());
    w.u32(uint32_t(ck.tensors.size()));
    for (const auto& [name, t] : ck.tensors) {
        w.str_u16(name);
        w.u8(uint8_t(t.shape.size()));
        for (int d : t.shape) w.u32(uint32_t(d));
        for (int64_t i = 0; i < t.size(); ++i) w.f64(t.data()[i]);
    }
    write_file_atomic(path, w.bytes().data(), w.bytes().size());
}

Checkpoint load_checkpoint(const std::string& path) {
    auto bytes = read_file(path);
    ByteReader r(bytes);
    char magic[8];
    r.raw(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0) fail("checkpoint: bad magic in " + path);
    uint32_t version = r.u32();
    if (version != kVersion) fail("checkpoint: unsupported version in " + path);

    Checkpoint ck;
    ck.meta_json = r.str_u32();
    ck.config = ModelConfig::from_json(nlohmann::json::parse(ck.meta_json).at("model").dump());
    uint32_t count = r.u32();
    for (uint32_t i = 0; i < count; ++i) {
        std::string name = r.str_u16();
        int rank = r.u8();
        std::vector<int> shape;
        for (int d = 0; d < rank; ++d) shape.push_back(int(r.u32()));
        Tensor t = Tensor::zeros(shape);
        for (int64_t j = 0; j < t.size(); ++j) t.mut()[j] = r.f64();
        ck.tensors[name] = std::move(t);
    }
    return ck;
}

}  // namespace valr
