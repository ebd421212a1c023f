#include "valr/data.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace valr {

using nlohmann::json;

std::string regime_name(Regime r) {
    switch (r) {
        case Regime::SingleView: return "single";
        case Regime::MultiView: return "multi";
        case Regime::Interleaved: return "interleaved";
    }
    fail("bad regime");
}

Regime regime_from_name(const std::string& s) {
    if (s == "single") return Regime::SingleView;
    if (s == "multi") return Regime::MultiView;
    if (s == "interleaved") return Regime::Interleaved;
    fail("unknown regime: " + s);
}

void ReasoningSample::validate() const {
    if (sample_id.empty()) fail("sample: empty sample_id");
    if (images.empty()) fail("sample " + sample_id + ": needs at least one image");
    if (steps.empty()) fail("sample " + sample_id + ": needs at least one step");
    if (regime == Regime::SingleView && images.size() != 1)
        fail("sample " + sample_id + ": single-view regime requires exactly one image");
    for (const auto& st : steps)
        if (st.target_image != kUnassignedTarget &&
            (st.target_image < 0 || size_t(st.target_image) >= images.size()))
            fail("sample " + sample_id + ": target_image " + std::to_string(st.target_image) +
                 " out of range");
    for (const auto& [step, img] : interleaved_before_step) {
        if (step < 0 || size_t(step) >= steps.size())
            fail("sample " + sample_id + ": interleaved step index out of range");
        if (img < 0 || size_t(img) >= images.size())
            fail("sample " + sample_id + ": interleaved image id out of range");
    }
    for (const auto& img : images) img.validate();
}

// ---- JSONL -------------------------------------------------------------------

namespace {

std::string encode_pixels(const Image& img) {
    std::vector<uint8_t> bytes(img.pixels.size());
    for (size_t i = 0; i < img.pixels.size(); ++i)
        bytes[i] = uint8_t(std::lround(img.pixels[i] * 255.0));
    return base64_encode(bytes.data(), bytes.size());
}

Image decode_pixels(const std::string& b64, int side, int image_id) {
    auto bytes = base64_decode(b64);
    if (bytes.size() != size_t(side) * side * 3)
        fail("image: pixel payload size mismatch for side " + std::to_string(side));
    Image img;
    img.side = side;
    img.image_id = image_id;
    img.pixels.resize(bytes.size());
    for (size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = bytes[i] / 255.0;
    return img;
}

}  // namespace

std::string sample_to_json(const ReasoningSample& s) {
    s.validate();
    json j;
    j["sample_id"] = s.sample_id;
    j["regime"] = regime_name(s.regime);
    json imgs = json::array();
    for (const auto& img : s.images)
        imgs.push_back({{"id", img.image_id}, {"pixels_b64", encode_pixels(img)}, {"side", img.side}});
    j["images"] = imgs;
    j["question"] = s.question;
    json steps = json::array();
    for (const auto& st : s.steps) {
        json e;
        e["text"] = st.text;
        if (st.target_image == kUnassignedTarget)
            e["target_image"] = nullptr;
        else
            e["target_image"] = st.target_image;
        steps.push_back(e);
    }
    j["steps"] = steps;
    j["answer"] = s.answer;
    if (!s.interleaved_before_step.empty()) {
        json m = json::object();
        for (const auto& [step, img] : s.interleaved_before_step) m[std::to_string(step)] = img;
        j["interleaved_before_step"] = m;
    }
    return j.dump();
}

ReasoningSample sample_from_json(const std::string& line) {
    json j = json::parse(line);
    ReasoningSample s;
    s.sample_id = j.at("sample_id").get<std::string>();
    s.regime = regime_from_name(j.at("regime").get<std::string>());
    for (const auto& e : j.at("images")) {
        int id = e.at("id").get<int>();
        int side = e.at("side").get<int>();
        s.images.push_back(decode_pixels(e.at("pixels_b64").get<std::string>(), side, id));
    }
    s.question = j.at("question").get<std::string>();
    for (const auto& e : j.at("steps")) {
        ReasoningStep st;
        st.text = e.at("text").get<std::string>();
        if (e.contains("target_image") && !e.at("target_image").is_null())
            st.target_image = e.at("target_image").get<int>();
        s.steps.push_back(st);
    }
    s.answer = j.at("answer").get<std::string>();
    if (j.contains("interleaved_before_step"))
        for (const auto& [k, v] : j.at("interleaved_before_step").items())
            s.interleaved_before_step[std::stoi(k)] = v.get<int>();
    s.validate();
    return s;
}

void save_jsonl(const std::vector<ReasoningSample>& samples, const std::string& path) {
    std::string out;
    for (const auto& s : samples) {
        out += sample_to_json(s);
        out += '\n';
    }
    write_file_atomic(path, out.data(), out.size());
}

std::vector<ReasoningSample> load_jsonl(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail("cannot open corpus file: " + path);
    std::vector<ReasoningSample> out;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(sample_from_json(line));
        } catch (const std::exception& e) {
            fail(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

// ---- target assignment --------------------------------------------------------

RuleBasedMatcher::RuleBasedMatcher(std::map<std::string, int> extra_keywords)
    : extra_(std::move(extra_keywords)) {}

std::vector<int> RuleBasedMatcher::match(const ReasoningSample& sample) const {
    std::vector<int> out;
    out.reserve(sample.steps.size());
    for (const auto& st : sample.steps) {
        int target = 0;  // no keyword: first image
        // explicit keyword map wins
        bool found = false;
        for (const auto& [phrase, img] : extra_) {
            if (st.text.find(phrase) != std::string::npos) {
                target = img;
                found = true;
                break;
            }
        }
        if (!found) {
            // default rule: "view <i>" names image i
            auto pos = st.text.find("view ");
            if (pos != std::string::npos) {
                std::istringstream in(st.text.substr(pos + 5));
                int v;
                if (in >> v && v >= 0 && size_t(v) < sample.images.size()) target = v;
            }
        }
        out.push_back(target);
    }
    return out;
}

ReasoningSample assign_targets(const ReasoningSample& sample, const StepImageMatcher& matcher) {
    ReasoningSample out = sample;
    switch (sample.regime) {
        case Regime::SingleView:
            for (auto& st : out.steps) st.target_image = 0;
            break;
        case Regime::MultiView: {
            std::vector<int> targets = matcher.match(sample);
            if (targets.size() != sample.steps.size())
                fail("curation error: matcher returned " + std::to_string(targets.size()) +
                     " targets for " + std::to_string(sample.steps.size()) + " steps in " +
                     sample.sample_id);
            for (size_t i = 0; i < out.steps.size(); ++i) {
                if (targets[i] < 0 || size_t(targets[i]) >= sample.images.size())
                    fail("curation error: matcher target out of range in " + sample.sample_id);
                out.steps[i].target_image = targets[i];
            }
            break;
        }
        case Regime::Interleaved: {
            for (size_t i = 0; i < out.steps.size(); ++i) {
                int cur = 0;  // before the first interleaved image, the first input image
                for (const auto& [step, img] : sample.interleaved_before_step)
                    if (step <= int(i)) cur = img;
                out.steps[i].target_image = cur;
            }
            break;
        }
    }
    out.validate();
    return out;
}

// ---- plans ----------------------------------------------------------------------

void LatentPlan::validate(const Vocabulary& vocab) const {
    if (tokens.size() != roles.size() || tokens.size() != ce_mask.size())
        fail("plan: parallel arrays disagree");
    for (size_t i = 0; i < tokens.size(); ++i) {
        TokenRole r = roles[i];
        bool maskable = r == TokenRole::StepText || r == TokenRole::AnswerText ||
                        r == TokenRole::AnswerMarker || r == TokenRole::Eos ||
                        r == TokenRole::LatentOpen || r == TokenRole::LatentClose;
        if (bool(ce_mask[i]) != maskable) fail("plan: ce_mask disagrees with roles");
        if (r == TokenRole::LatentInterior && tokens[i] != Vocabulary::kLatentInterior)
            fail("plan: interior positions must carry the placeholder id");
    }
    for (const auto& t : targets) {
        if (t.span_start < 0 || t.span_start + t.span_len > int(tokens.size()))
            fail("plan: segment span out of range");
        if (tokens[size_t(t.span_start)] != Vocabulary::kLatentOpen)
            fail("plan: segment must start at <latent>");
        if (t.span_len >= 2 &&
            tokens[size_t(t.span_start + t.span_len - 1)] != Vocabulary::kLatentClose)
            fail("plan: segment must end at </latent>");
    }
    (void)vocab;
}

namespace {

LatentPlan build_plan(const ReasoningSample& sample, int K, const Vocabulary& vocab,
                      int patches_per_image, int max_seq_len) {
    if (K > 0)
        for (const auto& st : sample.steps)
            if (st.target_image == kUnassignedTarget)
                fail("plan: sample " + sample.sample_id + " still has unassigned targets");

    LatentPlan plan;
    plan.sample_id = sample.sample_id;
    plan.K = K;
    plan.n_images = int(sample.images.size());
    plan.patches_per_image = patches_per_image;

    auto put = [&](int tok, TokenRole role) {
        bool label = role == TokenRole::StepText || role == TokenRole::AnswerText ||
                     role == TokenRole::AnswerMarker || role == TokenRole::Eos ||
                     role == TokenRole::LatentOpen || role == TokenRole::LatentClose;
        plan.tokens.push_back(tok);
        plan.roles.push_back(role);
        plan.ce_mask.push_back(label ? 1 : 0);
    };

    put(Vocabulary::kBos, TokenRole::Bos);
    for (size_t i = 0; i < sample.images.size(); ++i)
        for (int s = 0; s < patches_per_image; ++s) put(Vocabulary::kImage, TokenRole::ImageSlot);
    for (int id : vocab.encode(sample.question)) put(id, TokenRole::QuestionText);

    int segment = 0;
    for (const auto& st : sample.steps) {
        if (K > 0) {
            PlanTarget t;
            t.segment = segment++;
            t.span_start = plan.length();
            t.span_len = K;
            t.target_image = st.target_image;
            put(Vocabulary::kLatentOpen, TokenRole::LatentOpen);
            for (int k = 0; k < K - 2; ++k)
                put(Vocabulary::kLatentInterior, TokenRole::LatentInterior);
            if (K >= 2) put(Vocabulary::kLatentClose, TokenRole::LatentClose);
            plan.targets.push_back(t);
        }
        for (int id : vocab.encode(st.text)) put(id, TokenRole::StepText);
    }
    put(Vocabulary::kAnswerMarker, TokenRole::AnswerMarker);
    for (int id : vocab.encode(sample.answer)) put(id, TokenRole::AnswerText);
    put(Vocabulary::kEos, TokenRole::Eos);

    if (plan.length() > max_seq_len)
        fail("plan: sample " + sample.sample_id + " needs " + std::to_string(plan.length()) +
             " positions, max_seq_len is " + std::to_string(max_seq_len));
    return plan;
}

}  // namespace

LatentPlan plain_plan(const ReasoningSample& sample, const Vocabulary& vocab,
                      int patches_per_image, int max_seq_len) {
    return build_plan(sample, 0, vocab, patches_per_image, max_seq_len);
}

LatentPlan augment_latent(const ReasoningSample& sample, int K, const Vocabulary& vocab,
                          int patches_per_image, int max_seq_len) {
    if (K < 1) fail("augment_latent: K must be >= 1");
    return build_plan(sample, K, vocab, patches_per_image, max_seq_len);
}

}  // namespace valr
