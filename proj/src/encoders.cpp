#include "valr/encoders.hpp"

#include <cmath>

#include "valr/rng.hpp"

namespace valr {

// ---- Image -----------------------------------------------------------

Image Image::filled(int side, double r, double g, double b, int image_id) {
    Image img;
    img.side = side;
    img.image_id = image_id;
    img.pixels.resize(size_t(side) * side * 3);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            img.at(y, x, 0) = r;
            img.at(y, x, 1) = g;
            img.at(y, x, 2) = b;
        }
    return img;
}

void Image::validate() const {
    if (side <= 0) fail("image: non-positive side");
    if (pixels.size() != size_t(side) * side * 3) fail("image: pixel buffer size mismatch");
    for (double p : pixels)
        if (!(p >= 0.0 && p <= 1.0)) fail("image: pixel outside [0,1]");
}

Image Image::upscaled(int factor) const {
    if (factor < 1) fail("image: bad upscale factor");
    Image out;
    out.side = side * factor;
    out.image_id = image_id;
    out.pixels.resize(size_t(out.side) * out.side * 3);
    for (int y = 0; y < out.side; ++y)
        for (int x = 0; x < out.side; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = at(y / factor, x / factor, c);
    return out;
}

// ---- EncoderFeatures ---------------------------------------------------

void EncoderFeatures::validate() const {
    if (!is_perfect_square(P)) fail("encoder features: P=" + std::to_string(P) + " is not a perfect square");
    if (features.shape != std::vector<int>{P, D}) fail("encoder features: tensor shape mismatch");
    for (int p = 0; p < P; ++p) {
        bool nonzero = false;
        for (int j = 0; j < D; ++j)
            if (features.at(p, j) != 0.0) {
                nonzero = true;
                break;
            }
        if (!nonzero) fail("encoder features: zero row at patch " + std::to_string(p));
    }
}

// ---- analytic encoders --------------------------------------------------

namespace {

int patch_grid(const Image& img, int patch) {
    if (patch <= 0 || img.side % patch != 0)
        fail("encoder: image side " + std::to_string(img.side) + " not divisible into patches of " +
             std::to_string(patch));
    return img.side / patch;
}

// standard JPEG-style zigzag scan of an n x n coefficient block
std::vector<std::pair<int, int>> zigzag(int n) {
    std::vector<std::pair<int, int>> order;
    order.reserve(size_t(n) * n);
    for (int s = 0; s <= 2 * (n - 1); ++s) {
        if (s % 2 == 0) {
            for (int u = std::min(s, n - 1); u >= std::max(0, s - n + 1); --u)
                order.emplace_back(u, s - u);
        } else {
            for (int u = std::max(0, s - n + 1); u <= std::min(s, n - 1); ++u)
                order.emplace_back(u, s - u);
        }
    }
    return order;
}

}  // namespace

EncoderFeatures encode_dct(const Image& img, int patch, int D, const std::string& name) {
    const int grid = patch_grid(img, patch);
    const int n = patch;
    if (D > n * n) fail("encode_dct: D exceeds patch coefficient count");

    // cosine basis and orthonormal scale factors
    std::vector<double> cosv(size_t(n) * n);
    for (int u = 0; u < n; ++u)
        for (int x = 0; x < n; ++x)
            cosv[size_t(u) * n + x] = std::cos(M_PI * (2.0 * x + 1.0) * u / (2.0 * n));
    std::vector<double> alpha((size_t)n);
    for (int u = 0; u < n; ++u) alpha[size_t(u)] = std::sqrt((u == 0 ? 1.0 : 2.0) / n);
    auto order = zigzag(n);

    EncoderFeatures out;
    out.encoder_name = name;
    out.P = grid * grid;
    out.D = D;
    out.features = Tensor::zeros({out.P, D});

    std::vector<double> gray(size_t(n) * n);
    std::vector<double> coef(size_t(n) * n);
    for (int py = 0; py < grid; ++py)
        for (int px = 0; px < grid; ++px) {
            for (int y = 0; y < n; ++y)
                for (int x = 0; x < n; ++x) {
                    int iy = py * n + y, ix = px * n + x;
                    // +1 shift keeps the DC coefficient strictly positive
                    gray[size_t(y) * n + x] =
                        (img.at(iy, ix, 0) + img.at(iy, ix, 1) + img.at(iy, ix, 2)) / 3.0 + 1.0;
                }
            for (int u = 0; u < n; ++u)
                for (int v = 0; v < n; ++v) {
                    double s = 0.0;
                    for (int y = 0; y < n; ++y)
                        for (int x = 0; x < n; ++x)
                            s += gray[size_t(y) * n + x] * cosv[size_t(u) * n + y] * cosv[size_t(v) * n + x];
                    coef[size_t(u) * n + v] = alpha[size_t(u)] * alpha[size_t(v)] * s;
                }
            double* row = out.features.mut() + int64_t(py * grid + px) * D;
            for (int d = 0; d < D; ++d) row[d] = coef[size_t(order[size_t(d)].first) * n + order[size_t(d)].second];
        }
    return out;
}

EncoderFeatures encode_hist(const Image& img, int patch, int bins, const std::string& name) {
    if (bins < 2) fail("encode_hist: bins must be >= 2");
    const int grid = patch_grid(img, patch);
    const int n = patch;

    EncoderFeatures out;
    out.encoder_name = name;
    out.P = grid * grid;
    out.D = 3 * bins;
    out.features = Tensor::zeros({out.P, out.D});

    const double inv_area = 1.0 / double(n * n);
    std::vector<int> counts(size_t(3) * bins);
    for (int py = 0; py < grid; ++py)
        for (int px = 0; px < grid; ++px) {
            std::fill(counts.begin(), counts.end(), 0);
            for (int y = 0; y < n; ++y)
                for (int x = 0; x < n; ++x)
                    for (int c = 0; c < 3; ++c) {
                        double v = img.at(py * n + y, px * n + x, c);
                        int b = std::min(bins - 1, int(v * bins));
                        ++counts[size_t(c) * bins + b];
                    }
            double* row = out.features.mut() + int64_t(py * grid + px) * out.D;
            for (int j = 0; j < 3 * bins; ++j) row[j] = counts[size_t(j)] * inv_area;
        }
    return out;
}

EncoderFeatures encode_randproj(const Image& img, int patch, int D, uint64_t seed,
                                const std::string& name) {
    const int grid = patch_grid(img, patch);
    const int n = patch;
    const int in_dim = 3 * n * n;

    // fixed projection: counters [0, D*in_dim) for weights, then D for bias
    std::vector<double> w(size_t(D) * in_dim);
    for (int i = 0; i < D; ++i)
        for (int j = 0; j < in_dim; ++j)
            w[size_t(i) * in_dim + j] = counter_gauss(seed, uint64_t(i) * in_dim + uint64_t(j));
    std::vector<double> bias((size_t)D);
    for (int i = 0; i < D; ++i)
        bias[size_t(i)] = 0.1 + std::abs(counter_gauss(seed, uint64_t(D) * in_dim + uint64_t(i)));

    EncoderFeatures out;
    out.encoder_name = name;
    out.P = grid * grid;
    out.D = D;
    out.features = Tensor::zeros({out.P, D});

    std::vector<double> flat((size_t)in_dim);
    for (int py = 0; py < grid; ++py)
        for (int px = 0; px < grid; ++px) {
            int k = 0;
            for (int y = 0; y < n; ++y)
                for (int x = 0; x < n; ++x)
                    for (int c = 0; c < 3; ++c) flat[size_t(k++)] = img.at(py * n + y, px * n + x, c);
            double* row = out.features.mut() + int64_t(py * grid + px) * D;
            for (int i = 0; i < D; ++i) {
                double s = bias[size_t(i)];
                for (int j = 0; j < in_dim; ++j) s += w[size_t(i) * in_dim + j] * flat[size_t(j)];
                row[i] = s;
            }
        }
    return out;
}

// ---- encoder classes -----------------------------------------------------

namespace {

class DctEncoder final : public Encoder {
public:
    DctEncoder(int image_side, int upscale, int patch, int D)
        : name_("dct"), upscale_(upscale), patch_(patch), D_(D) {
        int side = image_side * upscale;
        if (side % patch != 0) fail("dct encoder: bad patch grid");
        int g = side / patch;
        P_ = g * g;
    }
    const std::string& name() const override { return name_; }
    int patch_count() const override { return P_; }
    int feature_dim() const override { return D_; }
    EncoderFeatures encode(const std::string&, const Image& img) const override {
        Image scaled = upscale_ > 1 ? img.upscaled(upscale_) : img;
        return encode_dct(scaled, patch_, D_, name_);
    }

private:
    std::string name_;
    int upscale_, patch_, D_, P_;
};

class HistEncoder final : public Encoder {
public:
    HistEncoder(int image_side, int patch, int bins) : name_("hist"), patch_(patch), bins_(bins) {
        if (image_side % patch != 0) fail("hist encoder: bad patch grid");
        int g = image_side / patch;
        P_ = g * g;
    }
    const std::string& name() const override { return name_; }
    int patch_count() const override { return P_; }
    int feature_dim() const override { return 3 * bins_; }
    EncoderFeatures encode(const std::string&, const Image& img) const override {
        return encode_hist(img, patch_, bins_, name_);
    }

private:
    std::string name_;
    int patch_, bins_, P_;
};

class RandProjEncoder final : public Encoder {
public:
    RandProjEncoder(int image_side, int patch, int D, uint64_t seed)
        : name_("randproj"), patch_(patch), D_(D), seed_(seed) {
        if (image_side % patch != 0) fail("randproj encoder: bad patch grid");
        int g = image_side / patch;
        P_ = g * g;
    }
    const std::string& name() const override { return name_; }
    int patch_count() const override { return P_; }
    int feature_dim() const override { return D_; }
    EncoderFeatures encode(const std::string&, const Image& img) const override {
        return encode_randproj(img, patch_, D_, seed_, name_);
    }

private:
    std::string name_;
    int patch_, D_, P_;
    uint64_t seed_;
};

class FileEncoder final : public Encoder {
public:
    FileEncoder(std::string name, const std::string& path)
        : name_(std::move(name)), store_(FeatureStore::load(path)) {
        if (store_.size() == 0) fail("file encoder: store is empty: " + path);
        auto probe = store_.first();
        P_ = probe.first;
        D_ = probe.second;
        store_.require_uniform(P_, D_);
    }
    const std::string& name() const override { return name_; }
    int patch_count() const override { return P_; }
    int feature_dim() const override { return D_; }
    EncoderFeatures encode(const std::string& sample_id, const Image& img) const override {
        return store_.get(sample_id, img.image_id, name_);
    }

private:
    std::string name_;
    FeatureStore store_;
    int P_, D_;
};

}  // namespace

std::unique_ptr<Encoder> make_dct_encoder(int image_side, int upscale, int patch, int D) {
    return std::make_unique<DctEncoder>(image_side, upscale, patch, D);
}
std::unique_ptr<Encoder> make_hist_encoder(int image_side, int patch, int bins) {
    return std::make_unique<HistEncoder>(image_side, patch, bins);
}
std::unique_ptr<Encoder> make_randproj_encoder(int image_side, int patch, int D, uint64_t seed) {
    return std::make_unique<RandProjEncoder>(image_side, patch, D, seed);
}
std::unique_ptr<Encoder> make_file_encoder(const std::string& name, const std::string& store_path) {
    return std::make_unique<FileEncoder>(name, store_path);
}

void EncoderRegistry::add(std::unique_ptr<Encoder> enc) {
    for (const auto& e : entries_)
        if (e->name() == enc->name()) fail("encoder registry: duplicate name " + enc->name());
    entries_.push_back(std::move(enc));
}

const Encoder* EncoderRegistry::find(const std::string& name) const {
    for (const auto& e : entries_)
        if (e->name() == name) return e.get();
    return nullptr;
}

std::vector<std::string> EncoderRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& e : entries_) out.push_back(e->name());
    return out;
}

EncoderRegistry EncoderRegistry::standard(int image_side, const std::vector<std::string>& which,
                                          uint64_t seed) {
    EncoderRegistry reg;
    for (const auto& w : which) {
        if (w == "dct")
            reg.add(make_dct_encoder(image_side, 2, 4, 8));
        else if (w == "hist")
            reg.add(make_hist_encoder(image_side, 4, 4));
        else if (w == "randproj")
            reg.add(make_randproj_encoder(image_side, 4, 12, splitmix64(seed ^ 0x5eedf00dull)));
        else
            fail("unknown encoder name: " + w + " (expected dct|hist|randproj)");
    }
    return reg;
}

}  // namespace valr
