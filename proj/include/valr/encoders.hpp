#pragma once

#include <memory>
#include <string>
#include <vector>

#include "valr/features.hpp"
#include "valr/image.hpp"

namespace valr {

// Frozen vision encoder: a pure function of (image, static config). Encoders
// hold no trainable state and never appear on a gradient tape; they exist
// only on the training side of the pipeline.
class Encoder {
public:
    virtual ~Encoder() = default;
    virtual const std::string& name() const = 0;
    virtual int patch_count() const = 0;
    virtual int feature_dim() const = 0;
    virtual EncoderFeatures encode(const std::string& sample_id, const Image& img) const = 0;
};

// First D zigzag-ordered coefficients of the orthonormal 2-D DCT of each
// grayscale patch. Grayscale is mean(R,G,B) shifted by +1 so the DC term is
// always positive and no feature row can be zero. An optional nearest-
// neighbor upscale lets a small canvas realize a finer patch grid.
EncoderFeatures encode_dct(const Image& img, int patch, int D, const std::string& name = "dct");

// Concatenated per-channel normalized histograms; D = 3*bins, every row sums
// to exactly 3 (patch areas are powers of two, so counts/n are exact).
EncoderFeatures encode_hist(const Image& img, int patch, int bins, const std::string& name = "hist");

// Fixed seeded Gaussian projection of flattened patch pixels plus a strictly
// positive bias. Weights come from the counter-based SplitMix64 stream with
// Irwin-Hall Gaussians (see rng.hpp), so identical seeds give bitwise
// identical features on every IEEE-754 platform.
EncoderFeatures encode_randproj(const Image& img, int patch, int D, uint64_t seed,
                                const std::string& name = "randproj");

std::unique_ptr<Encoder> make_dct_encoder(int image_side, int upscale, int patch, int D);
std::unique_ptr<Encoder> make_hist_encoder(int image_side, int patch, int bins);
std::unique_ptr<Encoder> make_randproj_encoder(int image_side, int patch, int D, uint64_t seed);
// Serves features recorded in a store file; the image argument is used only
// for its id. All entries must agree on P and D.
std::unique_ptr<Encoder> make_file_encoder(const std::string& name, const std::string& store_path);

// Ordered set of frozen encoders; order fixes the projection-head pairing.
class EncoderRegistry {
public:
    void add(std::unique_ptr<Encoder> enc);
    size_t size() const { return entries_.size(); }
    const Encoder& at(size_t i) const { return *entries_[i]; }
    const Encoder* find(const std::string& name) const;
    std::vector<std::string> names() const;

    // Default desk-scale registry: dct (P=64 via 2x upscale), hist (P=16),
    // randproj (P=16). Grids differ so at least one encoder exercises a
    // non-trivial upsample.
    static EncoderRegistry standard(int image_side, const std::vector<std::string>& which,
                                    uint64_t seed);

private:
    std::vector<std::unique_ptr<Encoder>> entries_;
};

}  // namespace valr
