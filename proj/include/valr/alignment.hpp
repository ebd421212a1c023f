#pragma once

#include <functional>
#include <string>
#include <vector>

#include "valr/encoders.hpp"
#include "valr/tensor.hpp"

namespace valr {

// Per-encoder learnable projection head: d_model -> hidden -> D_m with GELU
// between, hidden = max(d_model, D_m). Trains with its own learning rate.
struct ProjectionHead {
    std::string encoder_name;
    int d_model = 0;
    int out_dim = 0;
    int hidden = 0;
    Tensor w1, b1, w2, b2;

    static ProjectionHead init(const std::string& encoder_name, int d_model, int out_dim,
                               uint64_t seed);
};

void for_each_head_param(std::vector<ProjectionHead>& heads,
                         const std::function<void(const std::string&, Tensor&)>& fn);
void for_each_head_param(const std::vector<ProjectionHead>& heads,
                         const std::function<void(const std::string&, const Tensor&)>& fn);

// Heads paired one-to-one with the registry, in registry order.
std::vector<ProjectionHead> make_heads(const EncoderRegistry& registry, int d_model, uint64_t seed);

Tensor project_head(Tape& t, const ProjectionHead& head, const Tensor& x);

// Reshape K latent features into their sqrt(K) x sqrt(K) grid (row-major over
// segment order), nearest-neighbor upsample to sqrt(P) x sqrt(P), flatten
// row-major. Identity when P == K. Downsampling (P < K) is rejected.
Tensor upsample_grid(Tape& t, const Tensor& latent_feats, int P);
std::vector<int> upsample_index_map(int K, int P);

// -(1/P) * sum_p cos(psi(Upsample(tapped))[p,:], target[p,:]). Differentiable
// w.r.t. tapped features and head parameters, never w.r.t. the target.
Tensor repa_loss_single(Tape& t, const Tensor& tapped_span, const ProjectionHead& head,
                        const EncoderFeatures& target);

// Mean of the per-encoder single losses; heads and targets must cover the
// registry in the same order.
Tensor repa_loss_multi(Tape& t, const Tensor& tapped_span,
                       const std::vector<ProjectionHead>& heads,
                       const std::vector<EncoderFeatures>& targets);

struct SegmentAlignment {
    Tensor tapped_span;                    // [K x d_model]
    std::vector<EncoderFeatures> targets;  // one per registry entry, registry order
};

// Mean over segments of the per-segment (multi-encoder) losses. Segments
// with a single-position span (K = 1) carry no alignment grid and are
// skipped. Optionally reports the per-encoder means.
Tensor batch_alignment_loss(Tape& t, const std::vector<SegmentAlignment>& segments,
                            const std::vector<ProjectionHead>& heads,
                            std::vector<double>* per_encoder = nullptr);

}  // namespace valr
