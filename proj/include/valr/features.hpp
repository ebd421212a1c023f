#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "valr/tensor.hpp"

namespace valr {

// P x D patch-feature matrix emitted by one frozen encoder for one image.
// P forms a sqrt(P) x sqrt(P) grid and no row may be the zero vector.
struct EncoderFeatures {
    std::string encoder_name;
    int P = 0;
    int D = 0;
    Tensor features;  // [P x D], constant (never on a tape)

    void validate() const;
};

// On-disk store of precomputed features keyed by (sample id, image id).
// Binary, little-endian: magic "VALRFEAT", version u32 = 1, entry count u32,
// then per entry: sample-id (u16 length + UTF-8 bytes), image-id u32, P u32,
// D u32, P*D f32 values. Payload stays f32 in memory; values convert to f64
// when an entry is materialized. One store file per encoder.
class FeatureStore {
public:
    static FeatureStore load(const std::string& path);
    void save(const std::string& path) const;

    void add(const std::string& sample_id, int image_id, const EncoderFeatures& f);
    bool contains(const std::string& sample_id, int image_id) const;
    EncoderFeatures get(const std::string& sample_id, int image_id,
                        const std::string& encoder_name) const;

    size_t size() const { return entries_.size(); }
    std::pair<int, int> first() const;  // (P, D) of the first entry
    void require_uniform(int P, int D) const;

private:
    struct Entry {
        int P, D;
        std::vector<float> values;
    };
    std::map<std::pair<std::string, int>, Entry> entries_;
};

}  // namespace valr
