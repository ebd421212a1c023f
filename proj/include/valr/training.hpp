#pragma once

#include <set>
#include <unordered_map>

#include "valr/alignment.hpp"
#include "valr/checkpoint.hpp"
#include "valr/data.hpp"
#include "valr/features.hpp"
#include "valr/model.hpp"

namespace valr {

struct TrainConfig {
    int stage = 1;
    double lr_backbone = 1e-5;  // stage-2 default 2e-6
    double lr_heads = 1e-5;
    double weight_decay = 0.01;
    double warmup_ratio = 0.03;
    int epochs = 1;
    int batch_size = 2;
    int grad_accum = 16;
    double lambda = 0.5;
    bool detach_feedback = false;
    uint64_t seed = 0;
    double grad_clip = 1.0;
    int n_threads = 2;
    int log_every = 25;
    int probe_every = 0;  // 0 disables the alignment probe
    int probe_size = 16;

    static TrainConfig defaults(int stage);
    void validate() const;
};

struct StepReport {
    int step = 0;
    double l_ce = 0.0;
    double l_repa = 0.0;
    double total = 0.0;
    std::vector<std::pair<std::string, double>> per_encoder;
    double grad_norm = 0.0;
    double lr = 0.0;
    double probe_cosine = 0.0;  // only when the probe ran this step
    bool has_probe = false;
    std::string to_json() const;
};

// Decoupled AdamW, beta = (0.9, 0.999), eps = 1e-8. Moments are keyed by
// parameter name and serialize into checkpoints under adam.m.* / adam.v.*.
class AdamW {
public:
    void step(const std::string& name, Tensor& param, const std::vector<double>& grad, double lr,
              double weight_decay);
    void advance() { ++t_; }
    int64_t step_count() const { return t_; }

    void save_into(Checkpoint& ck) const;
    void load_from(const Checkpoint& ck);

private:
    struct Slot {
        std::vector<double> m, v;
    };
    std::unordered_map<std::string, Slot> slots_;
    int64_t t_ = 0;
};

// linear warmup to a constant rate; lr(0) = 0 when warmup_steps > 0
double lr_at(double lr_max, int step, int warmup_steps);

// ---- per-sample losses -------------------------------------------------

// Teacher-forced input for a plan without latent interiors.
SequenceInput plan_to_input(const LatentPlan& plan);
// next-token targets: position t is supervised iff ce_mask[t+1]
void plan_labels(const LatentPlan& plan, std::vector<int>& targets, std::vector<uint8_t>& mask);

// Stage-1: one parallel forward, CE over masked-in labels.
Tensor stage1_sample_loss(Tape& t, const ModelConfig& cfg, const ModelParams& p,
                          const LatentPlan& plan, const std::vector<Image>& images);

// Stage-2 forward: parallel chunks between latent interiors, one incremental
// position per interior feeding the previous position's final hidden state
// (gradients flow through the feedback chain unless detached).
struct Stage2Forward {
    Tensor ce;
    std::vector<Tensor> segment_spans;  // tapped rows per latent segment, [K x d]
};
Stage2Forward stage2_sample_forward(Tape& t, const ModelConfig& cfg, const ModelParams& p,
                                    const LatentPlan& plan, const std::vector<Image>& images,
                                    bool detach_feedback);

// ---- trainer --------------------------------------------------------------

// Stage-2 feature lookup: one store per registry entry, registry order.
struct FeatureSet {
    std::vector<std::string> encoder_names;
    std::vector<FeatureStore> stores;
};

class Trainer {
public:
    Trainer(ModelConfig mcfg, TrainConfig tcfg, ModelParams params,
            std::vector<ProjectionHead> heads, FeatureSet features = {});

    // Builds plans (plain for stage 1, K-augmented for stage 2); for stage 2
    // with lambda > 0 verifies that every segment target has features in
    // every store before any training starts.
    void load_data(const std::vector<ReasoningSample>& samples);

    int steps_per_epoch() const;
    int total_steps() const { return steps_per_epoch() * tcfg_.epochs; }

    StepReport run_step();                  // one optimizer step
    std::vector<StepReport> run();          // all epochs
    double probe_mean_cosine();             // -L_REPA on the fixed probe batch

    const ModelParams& params() const { return params_; }
    const std::vector<ProjectionHead>& heads() const { return heads_; }
    AdamW& optimizer() { return opt_; }
    const std::set<std::string>& frozen() const { return frozen_; }
    const TrainConfig& config() const { return tcfg_; }

    Checkpoint make_checkpoint(const std::string& extra_meta_json = "") const;
    static Trainer from_checkpoint(const Checkpoint& ck, TrainConfig tcfg, FeatureSet features = {});

private:
    struct SampleGrads;
    SampleGrads compute_sample(int plan_idx) const;
    std::vector<SegmentAlignment> segment_targets(int plan_idx,
                                                  const std::vector<Tensor>& spans) const;

    ModelConfig mcfg_;
    TrainConfig tcfg_;
    ModelParams params_;
    std::vector<ProjectionHead> heads_;
    FeatureSet features_;
    AdamW opt_;
    std::set<std::string> frozen_;

    std::vector<LatentPlan> plans_;
    std::vector<std::vector<Image>> images_;
    std::vector<int> order_;
    size_t cursor_ = 0;
    int step_idx_ = 0;
    int epoch_ = 0;
};

}  // namespace valr
