#include "valr/features.hpp"

#include <cstring>

namespace valr {

namespace {
constexpr char kMagic[8] = {'V', 'A', 'L', 'R', 'F', 'E', 'A', 'T'};
constexpr uint32_t kVersion = 1;
}  // namespace

FeatureStore FeatureStore::load(const std::string& path) {
    auto bytes = read_file(path);
    ByteReader r(bytes);
    char magic[8];
    r.raw(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0) fail("feature store: bad magic in " + path);
    uint32_t version = r.u32();
    if (version != kVersion)
        fail("feature store: unsupported version " + std::to_string(version) + " in " + path);
    uint32_t count = r.u32();

    FeatureStore fs;
    for (uint32_t i = 0; i < count; ++i) {
        std::string sid = r.str_u16();
        int image_id = int(r.u32());
        Entry e;
        e.P = int(r.u32());
        e.D = int(r.u32());
        if (e.P <= 0 || e.D <= 0) fail("feature store: non-positive dims in " + path);
        if (!is_perfect_square(e.P))
            fail("feature store: invariant violation, P=" + std::to_string(e.P) +
                 " is not a perfect square in " + path);
        e.values.resize(size_t(e.P) * size_t(e.D));
        for (auto& v : e.values) v = r.f32();
        fs.entries_[{sid, image_id}] = std::move(e);
    }
    return fs;
}

void FeatureStore::save(const std::string& path) const {
    ByteWriter w;
    w.raw(kMagic, 8);
    w.u32(kVersion);
    w.u32(uint32_t(entries_.size()));
    for (const auto& [key, e] : entries_) {
        w.str_u16(key.first);
        w.u32(uint32_t(key.second));
        w.u32(uint32_t(e.P));
        w.u32(uint32_t(e.D));
        for (float v : e.values) w.f32(v);
    }
    write_file_atomic(path, w.bytes().data(), w.bytes().size());
}

void FeatureStore::add(const std::string& sample_id, int image_id, const EncoderFeatures& f) {
    Entry e;
    e.P = f.P;
    e.D = f.D;
    e.values.resize(size_t(f.P) * size_t(f.D));
    for (size_t i = 0; i < e.values.size(); ++i) e.values[i] = float(f.features.data()[i]);
    entries_[{sample_id, image_id}] = std::move(e);
}

bool FeatureStore::contains(const std::string& sample_id, int image_id) const {
    return entries_.count({sample_id, image_id}) > 0;
}

EncoderFeatures FeatureStore::get(const std::string& sample_id, int image_id,
                                  const std::string& encoder_name) const {
    auto it = entries_.find({sample_id, image_id});
    if (it == entries_.end())
        fail("feature store: no entry for sample '" + sample_id + "' image " + std::to_string(image_id));
    const Entry& e = it->second;
    EncoderFeatures f;
    f.encoder_name = encoder_name;
    f.P = e.P;
    f.D = e.D;
    f.features = Tensor::zeros({e.P, e.D});
    for (size_t i = 0; i < e.values.size(); ++i) f.features.mut()[i] = double(e.values[i]);
    f.validate();
    return f;
}

std::pair<int, int> FeatureStore::first() const {
    if (entries_.empty()) fail("feature store: empty");
    const Entry& e = entries_.begin()->second;
    return {e.P, e.D};
}

void FeatureStore::require_uniform(int P, int D) const {
    for (const auto& [key, e] : entries_)
        if (e.P != P || e.D != D)
            fail("feature store: entry for sample '" + key.first + "' has P/D " + std::to_string(e.P) +
                 "/" + std::to_string(e.D) + ", expected " + std::to_string(P) + "/" + std::to_string(D));
}

}  // namespace valr
