#include "valr/training.hpp"

#include <cmath>
#include <future>
#include <iostream>

#include <json.hpp>

#include "valr/kernels.hpp"
#include "valr/rng.hpp"

namespace valr {

using nlohmann::json;

TrainConfig TrainConfig::defaults(int stage) {
    TrainConfig c;
    c.stage = stage;
    c.lr_backbone = stage == 1 ? 1e-5 : 2e-6;
    return c;
}

void TrainConfig::validate() const {
    if (stage != 1 && stage != 2) fail("train config: stage must be 1 or 2");
    if (lambda < 0) fail("train config: lambda must be >= 0");
    if (batch_size < 1 || grad_accum < 1) fail("train config: bad batch configuration");
    if (epochs < 1) fail("train config: epochs must be >= 1");
    if (warmup_ratio < 0 || warmup_ratio > 1) fail("train config: bad warmup ratio");
}

std::string StepReport::to_json() const {
    json j{{"step", step},          {"l_ce", l_ce},   {"l_repa", l_repa},
           {"total", total},        {"grad_norm", grad_norm}, {"lr", lr}};
    if (!per_encoder.empty()) {
        json pe = json::object();
        for (const auto& [name, v] : per_encoder) pe[name] = v;
        j["per_encoder"] = pe;
    }
    if (has_probe) j["probe_cosine"] = probe_cosine;
    return j.dump();
}

// ---- optimizer --------------------------------------------------------

void AdamW::step(const std::string& name, Tensor& param, const std::vector<double>& grad,
                 double lr, double weight_decay) {
    if (t_ < 1) fail("adamw: advance() must run before step()");
    const size_t n = size_t(param.size());
    if (grad.size() != n) fail("adamw: gradient size mismatch for " + name);
    Slot& s = slots_[name];
    if (s.m.empty()) {
        s.m.assign(n, 0.0);
        s.v.assign(n, 0.0);
    }
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double bc1 = 1.0 - std::pow(b1, double(t_));
    const double bc2 = 1.0 - std::pow(b2, double(t_));
    double* p = param.mut();
    for (size_t i = 0; i < n; ++i) {
        s.m[i] = b1 * s.m[i] + (1.0 - b1) * grad[i];
        s.v[i] = b2 * s.v[i] + (1.0 - b2) * grad[i] * grad[i];
        const double mhat = s.m[i] / bc1;
        const double vhat = s.v[i] / bc2;
        p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p[i]);
    }
}

void AdamW::save_into(Checkpoint& ck) const {
    for (const auto& [name, s] : slots_) {
        ck.tensors["adam.m." + name] = Tensor::from({int(s.m.size())}, s.m);
        ck.tensors["adam.v." + name] = Tensor::from({int(s.v.size())}, s.v);
    }
    ck.tensors["adam.t"] = Tensor::scalar(double(t_));
}

void AdamW::load_from(const Checkpoint& ck) {
    slots_.clear();
    t_ = 0;
    if (!ck.has("adam.t")) return;
    t_ = int64_t(ck.at("adam.t").item());
    for (const auto& [name, tensor] : ck.tensors) {
        const std::string mp = "adam.m.";
        if (name.rfind(mp, 0) != 0) continue;
        std::string pname = name.substr(mp.size());
        Slot s;
        s.m.assign(tensor.data(), tensor.data() + tensor.size());
        const Tensor& vt = ck.at("adam.v." + pname);
        s.v.assign(vt.data(), vt.data() + vt.size());
        slots_[pname] = std::move(s);
    }
}

double lr_at(double lr_max, int step, int warmup_steps) {
    if (warmup_steps <= 0) return lr_max;
    if (step >= warmup_steps) return lr_max;
    return lr_max * double(step) / double(warmup_steps);
}

// ---- per-sample losses ----------------------------------------------------

SequenceInput plan_to_input(const LatentPlan& plan) {
    SequenceInput seq;
    int slot = 0;
    for (int i = 0; i < plan.length(); ++i) {
        if (plan.roles[size_t(i)] == TokenRole::LatentInterior)
            fail("plan_to_input: plan has latent interiors; use the stage-2 walker");
        if (plan.roles[size_t(i)] == TokenRole::ImageSlot) {
            seq.push_patch(slot / plan.patches_per_image, slot % plan.patches_per_image);
            ++slot;
        } else {
            seq.push_token(plan.tokens[size_t(i)]);
        }
    }
    return seq;
}

void plan_labels(const LatentPlan& plan, std::vector<int>& targets, std::vector<uint8_t>& mask) {
    const int T = plan.length();
    targets.assign(size_t(T), 0);
    mask.assign(size_t(T), 0);
    for (int t = 0; t + 1 < T; ++t) {
        if (!plan.ce_mask[size_t(t) + 1]) continue;
        targets[size_t(t)] = plan.tokens[size_t(t) + 1];
        mask[size_t(t)] = 1;
    }
}

Tensor stage1_sample_loss(Tape& t, const ModelConfig& cfg, const ModelParams& p,
                          const LatentPlan& plan, const std::vector<Image>& images) {
    ForwardOutput out = forward(t, cfg, p, plan_to_input(plan), images, nullptr, true);
    std::vector<int> targets;
    std::vector<uint8_t> mask;
    plan_labels(plan, targets, mask);
    return cross_entropy(t, out.logits, targets, mask);
}

Stage2Forward stage2_sample_forward(Tape& t, const ModelConfig& cfg, const ModelParams& p,
                                    const LatentPlan& plan, const std::vector<Image>& images,
                                    bool detach_feedback) {
    KVCache cache;
    cache.init(cfg.n_layers);
    std::vector<Tensor> hidden_parts, tapped_parts;
    Tensor prev_row;  // [1 x d], final hidden of the previous position
    int slot = 0;
    int i = 0;
    const int T = plan.length();
    while (i < T) {
        if (plan.roles[size_t(i)] == TokenRole::LatentInterior) {
            if (!prev_row.defined()) fail("stage2: latent interior at sequence start");
            SequenceInput s;
            s.push_direct(detach_feedback ? prev_row.detached() : prev_row);
            ForwardOutput out = forward(t, cfg, p, s, images, &cache, false);
            hidden_parts.push_back(out.last_hidden);
            tapped_parts.push_back(out.tapped);
            prev_row = out.last_hidden;
            ++i;
        } else {
            SequenceInput s;
            int j = i;
            while (j < T && plan.roles[size_t(j)] != TokenRole::LatentInterior) {
                if (plan.roles[size_t(j)] == TokenRole::ImageSlot) {
                    s.push_patch(slot / plan.patches_per_image, slot % plan.patches_per_image);
                    ++slot;
                } else {
                    s.push_token(plan.tokens[size_t(j)]);
                }
                ++j;
            }
            ForwardOutput out = forward(t, cfg, p, s, images, &cache, false);
            hidden_parts.push_back(out.last_hidden);
            tapped_parts.push_back(out.tapped);
            const int m = out.last_hidden.rows();
            prev_row = m == 1 ? out.last_hidden : slice_rows(t, out.last_hidden, m - 1, m);
            i = j;
        }
    }
    Tensor hidden = hidden_parts.size() == 1 ? hidden_parts[0] : concat_rows(t, hidden_parts);
    Tensor tapped = tapped_parts.size() == 1 ? tapped_parts[0] : concat_rows(t, tapped_parts);
    Tensor logits = lm_head(t, p, hidden);

    std::vector<int> targets;
    std::vector<uint8_t> mask;
    plan_labels(plan, targets, mask);

    Stage2Forward out;
    out.ce = cross_entropy(t, logits, targets, mask);
    for (const auto& tg : plan.targets)
        out.segment_spans.push_back(slice_rows(t, tapped, tg.span_start, tg.span_start + tg.span_len));
    return out;
}

// ---- trainer ------------------------------------------------------------------

Trainer::Trainer(ModelConfig mcfg, TrainConfig tcfg, ModelParams params,
                 std::vector<ProjectionHead> heads, FeatureSet features)
    : mcfg_(std::move(mcfg)),
      tcfg_(tcfg),
      params_(std::move(params)),
      heads_(std::move(heads)),
      features_(std::move(features)) {
    mcfg_.validate();
    tcfg_.validate();
    // the optimizer updates in place; own every buffer outright so callers
    // and checkpoints never see trained-over values
    for_each_param(params_, [](const std::string&, Tensor& t) { t = t.deep_copy(); });
    for_each_head_param(heads_, [](const std::string&, Tensor& t) { t = t.deep_copy(); });
    if (tcfg_.stage == 2) {
        // freeze the native patch embedder alongside the (stateless) encoders
        frozen_ = {"patch_proj_w", "patch_proj_b", "patch_pos"};
        if (tcfg_.lambda > 0) {
            if (heads_.empty() || features_.stores.empty())
                fail("trainer: stage 2 with lambda > 0 needs projection heads and feature stores");
            if (features_.encoder_names.size() != features_.stores.size() ||
                heads_.size() != features_.encoder_names.size())
                fail("trainer: encoder registry, heads and stores disagree");
            for (size_t i = 0; i < heads_.size(); ++i)
                if (heads_[i].encoder_name != features_.encoder_names[i])
                    fail("trainer: head order does not match encoder registry order");
        }
    }
}

void Trainer::load_data(const std::vector<ReasoningSample>& samples) {
    if (samples.empty()) fail("trainer: empty corpus");
    const Vocabulary& vocab = Vocabulary::standard();
    plans_.clear();
    images_.clear();
    for (const auto& s : samples) {
        LatentPlan plan = tcfg_.stage == 1
                              ? plain_plan(s, vocab, mcfg_.patches_per_image(), mcfg_.max_seq_len)
                              : augment_latent(s, mcfg_.K, vocab, mcfg_.patches_per_image(),
                                               mcfg_.max_seq_len);
        plans_.push_back(std::move(plan));
        images_.push_back(s.images);
    }
    // precompute check: every segment target must have features in every store
    if (tcfg_.stage == 2 && tcfg_.lambda > 0) {
        for (size_t pi = 0; pi < plans_.size(); ++pi)
            for (const auto& tg : plans_[pi].targets) {
                const Image& img = images_[pi][size_t(tg.target_image)];
                for (size_t m = 0; m < features_.stores.size(); ++m)
                    if (!features_.stores[m].contains(plans_[pi].sample_id, img.image_id))
                        fail("trainer: feature store '" + features_.encoder_names[m] +
                             "' is missing sample " + plans_[pi].sample_id + " image " +
                             std::to_string(img.image_id) + "; run extract-features first");
            }
    }
    order_.resize(plans_.size());
    for (size_t i = 0; i < order_.size(); ++i) order_[i] = int(i);
    cursor_ = 0;
}

int Trainer::steps_per_epoch() const {
    if (plans_.empty()) fail("trainer: no data loaded");
    int64_t per_step = int64_t(tcfg_.batch_size) * tcfg_.grad_accum;
    return int((int64_t(plans_.size()) + per_step - 1) / per_step);
}

std::vector<SegmentAlignment> Trainer::segment_targets(int plan_idx,
                                                       const std::vector<Tensor>& spans) const {
    const LatentPlan& plan = plans_[size_t(plan_idx)];
    std::vector<SegmentAlignment> out;
    for (size_t i = 0; i < plan.targets.size(); ++i) {
        SegmentAlignment seg;
        seg.tapped_span = spans[i];
        const Image& img = images_[size_t(plan_idx)][size_t(plan.targets[i].target_image)];
        for (size_t m = 0; m < features_.stores.size(); ++m)
            seg.targets.push_back(features_.stores[m].get(plan.sample_id, img.image_id,
                                                          features_.encoder_names[m]));
        out.push_back(std::move(seg));
    }
    return out;
}

struct Trainer::SampleGrads {
    double ce = 0.0;
    double repa = 0.0;
    double total = 0.0;
    std::vector<double> per_encoder;
    std::vector<std::pair<std::string, std::vector<double>>> grads;
};

Trainer::SampleGrads Trainer::compute_sample(int plan_idx) const {
    Tape tape;
    ModelParams local = params_;
    std::vector<std::pair<std::string, int>> bindings;
    for_each_param(local, [&](const std::string& name, Tensor& t) {
        if (frozen_.count(name)) return;
        t.node = tape.leaf(t.size());
        bindings.emplace_back(name, t.node);
    });
    std::vector<ProjectionHead> lheads = heads_;
    if (tcfg_.stage == 2 && tcfg_.lambda > 0) {
        for_each_head_param(lheads, [&](const std::string& name, Tensor& t) {
            t.node = tape.leaf(t.size());
            bindings.emplace_back(name, t.node);
        });
    }

    SampleGrads out;
    Tensor loss;
    if (tcfg_.stage == 1) {
        loss = stage1_sample_loss(tape, mcfg_, local, plans_[size_t(plan_idx)],
                                  images_[size_t(plan_idx)]);
        out.ce = loss.item();
    } else {
        Stage2Forward fwd = stage2_sample_forward(tape, mcfg_, local, plans_[size_t(plan_idx)],
                                                  images_[size_t(plan_idx)], tcfg_.detach_feedback);
        out.ce = fwd.ce.item();
        if (tcfg_.lambda > 0 && !fwd.segment_spans.empty()) {
            auto segments = segment_targets(plan_idx, fwd.segment_spans);
            Tensor repa = batch_alignment_loss(tape, segments, lheads, &out.per_encoder);
            out.repa = repa.item();
            loss = add(tape, fwd.ce, scale(tape, repa, tcfg_.lambda));
        } else {
            loss = fwd.ce;
        }
    }
    out.total = loss.item();
    if (!std::isfinite(out.total)) {
        std::cerr << "[trainer] NaN/inf loss on sample " << plans_[size_t(plan_idx)].sample_id
                  << " (ce=" << out.ce << " repa=" << out.repa << ")\n";
        fail("trainer: non-finite loss, aborting");
    }
    tape.backward(loss.node);
    for (const auto& [name, node] : bindings) {
        if (tape.has_grad(node))
            out.grads.emplace_back(name, tape.grad(node));
        else
            out.grads.emplace_back(name, std::vector<double>());
    }
    return out;
}

StepReport Trainer::run_step() {
    if (plans_.empty()) fail("trainer: no data loaded");
    const int n_eff = tcfg_.batch_size * tcfg_.grad_accum;

    std::vector<int> batch;
    batch.reserve(size_t(n_eff));
    for (int i = 0; i < n_eff; ++i) {
        if (cursor_ >= order_.size()) cursor_ = 0;
        if (cursor_ == 0) {
            // epoch boundary: deterministic reshuffle
            Rng rng = Rng(tcfg_.seed).split(0x7368756666ull + uint64_t(epoch_));
            for (size_t k = order_.size(); k > 1; --k)
                std::swap(order_[k - 1], order_[size_t(rng.uniform_int(0, int64_t(k) - 1))]);
            ++epoch_;
        }
        batch.push_back(order_[cursor_++]);
    }

    // per-sample forward/backward, optionally on worker threads; reduction
    // happens in batch order so results do not depend on scheduling
    std::vector<SampleGrads> results((size_t)n_eff);
    const int workers = std::max(1, tcfg_.n_threads);
    for (int base = 0; base < n_eff; base += workers) {
        std::vector<std::future<SampleGrads>> futs;
        const int lim = std::min(n_eff, base + workers);
        for (int i = base + 1; i < lim; ++i)
            futs.push_back(std::async(std::launch::async,
                                      [this, idx = batch[size_t(i)]] { return compute_sample(idx); }));
        results[size_t(base)] = compute_sample(batch[size_t(base)]);
        for (int i = base + 1; i < lim; ++i) results[size_t(i)] = futs[size_t(i - base - 1)].get();
    }

    // reduce
    std::vector<std::pair<std::string, std::vector<double>>> accum;
    StepReport rep;
    rep.step = step_idx_;
    for (int i = 0; i < n_eff; ++i) {
        SampleGrads& sg = results[size_t(i)];
        rep.l_ce += sg.ce / n_eff;
        rep.l_repa += sg.repa / n_eff;
        rep.total += sg.total / n_eff;
        if (!sg.per_encoder.empty()) {
            if (rep.per_encoder.empty())
                for (size_t m = 0; m < sg.per_encoder.size(); ++m)
                    rep.per_encoder.emplace_back(features_.encoder_names[m], 0.0);
            for (size_t m = 0; m < sg.per_encoder.size(); ++m)
                rep.per_encoder[m].second += sg.per_encoder[m] / n_eff;
        }
        if (accum.empty()) {
            for (auto& [name, g] : sg.grads) accum.emplace_back(name, std::move(g));
        } else {
            for (size_t k = 0; k < accum.size(); ++k) {
                auto& [name, g] = sg.grads[k];
                if (name != accum[k].first) fail("trainer: gradient reduction order broke");
                if (g.empty()) continue;
                if (accum[k].second.empty())
                    accum[k].second = std::move(g);
                else
                    kernels::active().axpy(1.0, g.data(), accum[k].second.data(),
                                           int64_t(g.size()));
            }
        }
    }
    double norm2 = 0.0;
    for (auto& [name, g] : accum) {
        if (g.empty()) continue;
        kernels::active().scale(g.data(), 1.0 / n_eff, g.data(), int64_t(g.size()));
        for (double v : g) norm2 += v * v;
    }
    rep.grad_norm = std::sqrt(norm2);
    const double clip = rep.grad_norm > tcfg_.grad_clip && rep.grad_norm > 0
                            ? tcfg_.grad_clip / rep.grad_norm
                            : 1.0;

    const int warmup = int(std::ceil(tcfg_.warmup_ratio * total_steps()));
    const double lr_b = lr_at(tcfg_.lr_backbone, step_idx_, warmup);
    const double lr_h = lr_at(tcfg_.lr_heads, step_idx_, warmup);
    rep.lr = lr_b;

    opt_.advance();
    std::unordered_map<std::string, std::vector<double>*> gmap;
    for (auto& [name, g] : accum)
        if (!g.empty()) gmap[name] = &g;
    for_each_param(params_, [&](const std::string& name, Tensor& t) {
        auto it = gmap.find(name);
        if (it == gmap.end()) return;
        if (clip != 1.0)
            kernels::active().scale(it->second->data(), clip, it->second->data(),
                                    int64_t(it->second->size()));
        opt_.step(name, t, *it->second, lr_b, tcfg_.weight_decay);
    });
    if (tcfg_.stage == 2 && tcfg_.lambda > 0) {
        for_each_head_param(heads_, [&](const std::string& name, Tensor& t) {
            auto it = gmap.find(name);
            if (it == gmap.end()) return;
            if (clip != 1.0)
                kernels::active().scale(it->second->data(), clip, it->second->data(),
                                        int64_t(it->second->size()));
            opt_.step(name, t, *it->second, lr_h, tcfg_.weight_decay);
        });
    }
    ++step_idx_;
    return rep;
}

double Trainer::probe_mean_cosine() {
    if (tcfg_.stage != 2) fail("trainer: alignment probe is a stage-2 notion");
    if (features_.stores.empty()) fail("trainer: probe needs feature stores");
    const int n = std::min<int>(tcfg_.probe_size, int(plans_.size()));
    Tape tape;  // stays constant-only: no leaves attached
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i < n; ++i) {
        Stage2Forward fwd =
            stage2_sample_forward(tape, mcfg_, params_, plans_[size_t(i)], images_[size_t(i)],
                                  true);
        if (fwd.segment_spans.empty()) continue;
        auto segments = segment_targets(i, fwd.segment_spans);
        Tensor repa = batch_alignment_loss(tape, segments, heads_, nullptr);
        sum += -repa.item();
        ++count;
    }
    if (count == 0) fail("trainer: probe batch has no alignable segments");
    return sum / count;
}

std::vector<StepReport> Trainer::run() {
    std::vector<StepReport> reports;
    const int steps = total_steps();
    for (int s = 0; s < steps; ++s) {
        StepReport rep = run_step();
        if (tcfg_.probe_every > 0 && (s % tcfg_.probe_every == 0 || s + 1 == steps)) {
            rep.probe_cosine = probe_mean_cosine();
            rep.has_probe = true;
        }
        if (tcfg_.log_every > 0 && (s % tcfg_.log_every == 0 || s + 1 == steps))
            std::cerr << "[train] " << rep.to_json() << "\n";
        reports.push_back(rep);
    }
    return reports;
}

Checkpoint Trainer::make_checkpoint(const std::string& extra_meta_json) const {
    Checkpoint ck;
    ck.config = mcfg_;
    json meta = extra_meta_json.empty() ? json::object() : json::parse(extra_meta_json);
    meta["stage"] = tcfg_.stage;
    json hmeta = json::array();
    for (const auto& h : heads_)
        hmeta.push_back({{"encoder_name", h.encoder_name}, {"out_dim", h.out_dim}});
    meta["heads"] = hmeta;
    ck.meta_json = meta.dump();
    ck.put_model(params_);
    for_each_head_param(heads_, [&](const std::string& name, const Tensor& t) {
        ck.tensors[name] = t.detached();
    });
    opt_.save_into(ck);
    return ck;
}

Trainer Trainer::from_checkpoint(const Checkpoint& ck, TrainConfig tcfg, FeatureSet features) {
    ModelParams params = ck.take_model();
    std::vector<ProjectionHead> heads;
    json meta = json::parse(ck.meta_json);
    if (meta.contains("heads")) {
        for (const auto& h : meta.at("heads")) {
            ProjectionHead head = ProjectionHead::init(h.at("encoder_name").get<std::string>(),
                                                       ck.config.d_model,
                                                       h.at("out_dim").get<int>(), ck.config.seed);
            std::string k = "psi." + head.encoder_name + ".";
            if (ck.has(k + "w1")) {
                head.w1 = ck.at(k + "w1").detached();
                head.b1 = ck.at(k + "b1").detached();
                head.w2 = ck.at(k + "w2").detached();
                head.b2 = ck.at(k + "b2").detached();
            }
            heads.push_back(std::move(head));
        }
    }
    Trainer tr(ck.config, tcfg, std::move(params), std::move(heads), std::move(features));
    tr.opt_.load_from(ck);
    return tr;
}

}  // namespace valr
