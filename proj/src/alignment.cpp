#include "valr/alignment.hpp"

#include "valr/rng.hpp"

namespace valr {

ProjectionHead ProjectionHead::init(const std::string& encoder_name, int d_model, int out_dim,
                                    uint64_t seed) {
    ProjectionHead h;
    h.encoder_name = encoder_name;
    h.d_model = d_model;
    h.out_dim = out_dim;
    h.hidden = std::max(d_model, out_dim);
    Rng rng = Rng(seed).split(fnv1a64(encoder_name.data(), encoder_name.size()));
    const double sd = 0.05;
    h.w1 = Tensor::zeros({d_model, h.hidden});
    for (int64_t i = 0; i < h.w1.size(); ++i) h.w1.mut()[i] = rng.gauss() * sd;
    h.b1 = Tensor::zeros({h.hidden});
    h.w2 = Tensor::zeros({h.hidden, out_dim});
    for (int64_t i = 0; i < h.w2.size(); ++i) h.w2.mut()[i] = rng.gauss() * sd;
    h.b2 = Tensor::zeros({out_dim});
    return h;
}

template <class H, class F>
static void visit_heads(H& heads, F&& fn) {
    for (auto& h : heads) {
        std::string k = "psi." + h.encoder_name + ".";
        fn(k + "w1", h.w1);
        fn(k + "b1", h.b1);
        fn(k + "w2", h.w2);
        fn(k + "b2", h.b2);
    }
}

void for_each_head_param(std::vector<ProjectionHead>& heads,
                         const std::function<void(const std::string&, Tensor&)>& fn) {
    visit_heads(heads, fn);
}
void for_each_head_param(const std::vector<ProjectionHead>& heads,
                         const std::function<void(const std::string&, const Tensor&)>& fn) {
    visit_heads(heads, fn);
}

std::vector<ProjectionHead> make_heads(const EncoderRegistry& registry, int d_model,
                                       uint64_t seed) {
    std::vector<ProjectionHead> heads;
    for (size_t i = 0; i < registry.size(); ++i) {
        const Encoder& e = registry.at(i);
        heads.push_back(ProjectionHead::init(e.name(), d_model, e.feature_dim(), seed));
    }
    return heads;
}

Tensor project_head(Tape& t, const ProjectionHead& head, const Tensor& x) {
    if (x.cols() != head.d_model) fail("projection head: input width mismatch");
    Tensor h = gelu(t, add_row_broadcast(t, matmul(t, x, head.w1), head.b1));
    return add_row_broadcast(t, matmul(t, h, head.w2), head.b2);
}

std::vector<int> upsample_index_map(int K, int P) {
    if (!is_perfect_square(K) || !is_perfect_square(P))
        fail("upsample: K and P must be perfect squares, got K=" + std::to_string(K) +
             " P=" + std::to_string(P));
    if (P < K)
        fail("upsample: downsampling unsupported, P=" + std::to_string(P) + " < K=" +
             std::to_string(K));
    const int gk = isqrt_exact(K), gp = isqrt_exact(P);
    std::vector<int> idx;
    idx.reserve(size_t(P));
    for (int r = 0; r < gp; ++r)
        for (int c = 0; c < gp; ++c) {
            int sr = int(int64_t(r) * gk / gp);
            int sc = int(int64_t(c) * gk / gp);
            idx.push_back(sr * gk + sc);
        }
    return idx;
}

Tensor upsample_grid(Tape& t, const Tensor& latent_feats, int P) {
    const int K = latent_feats.rows();
    if (P == K) {
        // identity; still dimension-checked
        upsample_index_map(K, P);
        return latent_feats;
    }
    return gather_rows(t, latent_feats, upsample_index_map(K, P));
}

Tensor repa_loss_single(Tape& t, const Tensor& tapped_span, const ProjectionHead& head,
                        const EncoderFeatures& target) {
    if (target.features.node >= 0) fail("repa: target features must be frozen constants");
    Tensor up = upsample_grid(t, tapped_span, target.P);
    Tensor projected = project_head(t, head, up);
    if (projected.cols() != target.D) fail("repa: head output dim does not match encoder D");
    Tensor sims = cosine_rows_floored(t, projected, target.features);
    return scale(t, mean_all(t, sims), -1.0);
}

Tensor repa_loss_multi(Tape& t, const Tensor& tapped_span,
                       const std::vector<ProjectionHead>& heads,
                       const std::vector<EncoderFeatures>& targets) {
    if (heads.empty() || heads.size() != targets.size())
        fail("repa multi: heads and targets must cover the registry in the same order");
    Tensor acc;
    for (size_t m = 0; m < heads.size(); ++m) {
        if (heads[m].encoder_name != targets[m].encoder_name)
            fail("repa multi: head/target order mismatch at index " + std::to_string(m) + " (" +
                 heads[m].encoder_name + " vs " + targets[m].encoder_name + ")");
        Tensor lm = repa_loss_single(t, tapped_span, heads[m], targets[m]);
        acc = acc.defined() ? add(t, acc, lm) : lm;
    }
    return scale(t, acc, 1.0 / double(heads.size()));
}

Tensor batch_alignment_loss(Tape& t, const std::vector<SegmentAlignment>& segments,
                            const std::vector<ProjectionHead>& heads,
                            std::vector<double>* per_encoder) {
    Tensor acc;
    int counted = 0;
    std::vector<double> enc_sums(heads.size(), 0.0);
    for (const auto& seg : segments) {
        if (seg.tapped_span.rows() == 1) continue;  // K=1: no alignment grid
        if (seg.targets.size() != heads.size())
            fail("batch alignment: segment is missing targets for some registry entries");
        Tensor multi;
        for (size_t m = 0; m < heads.size(); ++m) {
            if (heads[m].encoder_name != seg.targets[m].encoder_name)
                fail("batch alignment: head/target order mismatch at index " + std::to_string(m));
            Tensor lm = repa_loss_single(t, seg.tapped_span, heads[m], seg.targets[m]);
            enc_sums[m] += lm.item();
            multi = multi.defined() ? add(t, multi, lm) : lm;
        }
        multi = scale(t, multi, 1.0 / double(heads.size()));
        acc = acc.defined() ? add(t, acc, multi) : multi;
        ++counted;
    }
    if (counted == 0) fail("batch alignment: empty loss, no alignable segments in batch");
    if (per_encoder) {
        per_encoder->clear();
        for (double s : enc_sums) per_encoder->push_back(s / counted);
    }
    return scale(t, acc, 1.0 / double(counted));
}

}  // namespace valr
