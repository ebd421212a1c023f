#pragma once

#include "valr/data.hpp"

namespace valr {

// Chat-completion-style step-to-image curation against an external service.
// POSTs {model, messages:[{role,content}]} to `url`; the response content must
// be a strict numbered list, one "<step>. <image id>" line per step. Retries
// up to `retries` extra times, then falls back to the rule-based matcher when
// enabled; otherwise the sample fails curation.
struct ExternalMatcherConfig {
    std::string url;  // http://host:port/path
    std::string model = "gpt-4o";
    std::string prompt_template;  // empty -> default curation prompt
    int retries = 2;
    int timeout_ms = 10000;
    bool fallback_to_rules = true;
    std::string api_key_env = "VALR_MATCHER_KEY";
    int max_in_flight = 4;
};

const std::string& default_curation_prompt();

class ExternalLlmMatcher final : public StepImageMatcher {
public:
    explicit ExternalLlmMatcher(ExternalMatcherConfig cfg);
    ~ExternalLlmMatcher() override;
    std::vector<int> match(const ReasoningSample& sample) const override;
    std::string name() const override { return "external"; }

    // exposed for tests
    static std::string render_prompt(const std::string& tmpl, const ReasoningSample& sample);
    static std::vector<int> parse_numbered_list(const std::string& text, size_t n_steps);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace valr
