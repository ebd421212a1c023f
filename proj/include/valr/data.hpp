#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "valr/image.hpp"
#include "valr/vocab.hpp"

namespace valr {

enum class Regime { SingleView, MultiView, Interleaved };
std::string regime_name(Regime r);
Regime regime_from_name(const std::string& s);

constexpr int kUnassignedTarget = -1;

struct ReasoningStep {
    std::string text;
    int target_image = kUnassignedTarget;
};

struct ReasoningSample {
    std::string sample_id;
    Regime regime = Regime::MultiView;
    std::vector<Image> images;
    std::string question;
    std::vector<ReasoningStep> steps;
    std::string answer;
    std::map<int, int> interleaved_before_step;  // step index -> image id

    void validate() const;
};

// ---- synthetic grid-world scenes ----------------------------------------

enum class ObjColor { Red, Green, Blue, Yellow };
enum class ObjShape { Square, Disk, Triangle };
const char* color_word(ObjColor c);
const char* shape_word(ObjShape s);

struct SceneObject {
    int cx = 0, cy = 0;  // global grid cell
    ObjColor color = ObjColor::Red;
    ObjShape shape = ObjShape::Square;
};

struct ViewWindow {
    int x0 = 0, y0 = 0, w = 4, h = 4;  // cells; views tile the grid
    bool contains(int cx, int cy) const {
        return cx >= x0 && cx < x0 + w && cy >= y0 && cy < y0 + h;
    }
};

struct SceneSpec {
    int grid_w = 8, grid_h = 8;
    std::vector<SceneObject> objects;  // at most one per cell
    std::vector<ViewWindow> views;
    uint64_t seed = 0;
};

// 16x16 px view rendering: 4x4 px per cell, shape-specific pixel patterns,
// u8-exact palette so the JSONL round trip is lossless.
Image render_view(const SceneSpec& scene, int view_index, int image_id);

enum class TaskFamily { Count, RelativePosition, AppearanceOrder };
const char* family_name(TaskFamily f);
TaskFamily family_from_name(const std::string& s);

// Structured description of what a question asks, kept alongside the sample
// so tests can re-derive the answer by enumeration without parsing text.
struct QuerySpec {
    TaskFamily family = TaskFamily::Count;
    int color = -1, shape = -1;                      // count filter, -1 = any
    int color_a = -1, shape_a = -1;                  // descriptor A
    int color_b = -1, shape_b = -1;                  // descriptor B
    int relation = 0;  // 0 left, 1 right, 2 above, 3 below (relative_position)
};

struct GeneratedSample {
    ReasoningSample sample;  // multi-view samples carry UNASSIGNED step targets
    SceneSpec scene;
    QuerySpec query;
    std::vector<int> true_targets;  // per-step curation ground truth
    TaskFamily family;
};

// Deterministic given seed. Samples cycle through the requested families;
// regimes follow `regime_mix` weights over {multi, single, interleaved}
// (default multi-view only). sample_id prefixes carry the family name.
struct GeneratorOptions {
    std::vector<TaskFamily> families{TaskFamily::Count};
    double p_single = 0.0;
    double p_interleaved = 0.0;
    std::string id_prefix;  // prepended to sample ids (e.g. corpus split)
};

std::vector<GeneratedSample> generate_synthetic(int n, const GeneratorOptions& opt, uint64_t seed);

// ---- step-to-image curation ------------------------------------------------

class StepImageMatcher {
public:
    virtual ~StepImageMatcher() = default;
    virtual std::vector<int> match(const ReasoningSample& sample) const = 0;
    virtual std::string name() const = 0;
};

// Maps keyword phrases to image ids; by default "view <i>" selects image i
// and steps with no keyword fall back to image 0.
class RuleBasedMatcher final : public StepImageMatcher {
public:
    explicit RuleBasedMatcher(std::map<std::string, int> extra_keywords = {});
    std::vector<int> match(const ReasoningSample& sample) const override;
    std::string name() const override { return "rule"; }

private:
    std::map<std::string, int> extra_;
};

// Fills step targets per regime: single-view samples target their sole
// image, multi-view samples go through the matcher, interleaved samples
// target the most recent interleaved image (image 0 before the first one).
ReasoningSample assign_targets(const ReasoningSample& sample, const StepImageMatcher& matcher);

// ---- latent-augmented plans ------------------------------------------------

enum class TokenRole : uint8_t {
    Bos,
    ImageSlot,
    QuestionText,
    LatentOpen,
    LatentInterior,
    LatentClose,
    StepText,
    AnswerMarker,
    AnswerText,
    Eos,
};

struct PlanTarget {
    int segment = 0;
    int span_start = 0;  // position of <latent>
    int span_len = 0;    // == K
    int target_image = 0;
};

// Token-level layout of a (possibly latent-augmented) sequence. Image-slot
// positions carry the <image> id; their (image, patch) assignment is implied
// by slot order. The ce_mask marks positions supervised as labels.
struct LatentPlan {
    std::string sample_id;
    int K = 0;  // 0 for plain (stage-1) plans
    int n_images = 0;
    int patches_per_image = 0;
    std::vector<int> tokens;
    std::vector<TokenRole> roles;
    std::vector<uint8_t> ce_mask;
    std::vector<PlanTarget> targets;

    int length() const { return int(tokens.size()); }
    void validate(const Vocabulary& vocab) const;
};

LatentPlan plain_plan(const ReasoningSample& sample, const Vocabulary& vocab,
                      int patches_per_image, int max_seq_len);
LatentPlan augment_latent(const ReasoningSample& sample, int K, const Vocabulary& vocab,
                          int patches_per_image, int max_seq_len);

// ---- corpus files ----------------------------------------------------------

void save_jsonl(const std::vector<ReasoningSample>& samples, const std::string& path);
std::vector<ReasoningSample> load_jsonl(const std::string& path);
std::string sample_to_json(const ReasoningSample& s);
ReasoningSample sample_from_json(const std::string& line);

}  // namespace valr
