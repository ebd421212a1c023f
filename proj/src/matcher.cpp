#include "valr/matcher.hpp"

#include <cstdlib>
#include <iostream>
#include <semaphore>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

namespace valr {

using nlohmann::json;

const std::string& default_curation_prompt() {
    static const std::string prompt =
        "This is a Chain-of-Thought (CoT) VQA data including multiple input images and "
        "corresponding CoT. Please divide the CoT step-by-step. Then find a useful and proper "
        "target image for each step. Lastly, place the target image in front of each reasoning "
        "step.";
    return prompt;
}

std::string ExternalLlmMatcher::render_prompt(const std::string& tmpl,
                                              const ReasoningSample& sample) {
    std::ostringstream out;
    out << (tmpl.empty() ? default_curation_prompt() : tmpl) << "\n\n";
    out << "Images: " << sample.images.size() << " (indices 0.."
        << sample.images.size() - 1 << ")\n";
    out << "Question: " << sample.question << "\n";
    for (size_t i = 0; i < sample.steps.size(); ++i)
        out << "Step " << i + 1 << ": " << sample.steps[i].text << "\n";
    // wire-format contract, independent of the template
    out << "\nReply with one line per step, formatted as \"<step number>. <image index>\".\n";
    return out.str();
}

std::vector<int> ExternalLlmMatcher::parse_numbered_list(const std::string& text, size_t n_steps) {
    std::vector<int> out(n_steps, -1);
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        size_t i = 0;
        while (i < line.size() && std::isspace(uint8_t(line[i]))) ++i;
        size_t start = i;
        while (i < line.size() && std::isdigit(uint8_t(line[i]))) ++i;
        if (i == start || i >= line.size() || line[i] != '.') continue;
        int step = std::stoi(line.substr(start, i - start));
        ++i;
        while (i < line.size() && std::isspace(uint8_t(line[i]))) ++i;
        size_t vstart = i;
        while (i < line.size() && std::isdigit(uint8_t(line[i]))) ++i;
        if (i == vstart) continue;
        int img = std::stoi(line.substr(vstart, i - vstart));
        if (step >= 1 && size_t(step) <= n_steps) out[size_t(step - 1)] = img;
    }
    for (int v : out)
        if (v < 0) fail("matcher: response is not a complete numbered list");
    return out;
}

struct ExternalLlmMatcher::Impl {
    ExternalMatcherConfig cfg;
    RuleBasedMatcher rules;
    mutable std::counting_semaphore<64> in_flight;

    explicit Impl(ExternalMatcherConfig c)
        : cfg(std::move(c)), rules(), in_flight(std::max(1, std::min(64, cfg.max_in_flight))) {}

    std::string call_once(const std::string& prompt) const {
        // split url into host:port and path
        std::string url = cfg.url;
        const std::string scheme = "http://";
        if (url.rfind(scheme, 0) != 0) fail("matcher: only http:// endpoints are supported");
        url = url.substr(scheme.size());
        auto slash = url.find('/');
        std::string hostport = slash == std::string::npos ? url : url.substr(0, slash);
        std::string path = slash == std::string::npos ? "/" : url.substr(slash);
        std::string host = hostport;
        int port = 80;
        if (auto colon = hostport.find(':'); colon != std::string::npos) {
            host = hostport.substr(0, colon);
            port = std::stoi(hostport.substr(colon + 1));
        }

        httplib::Client client(host, port);
        client.set_connection_timeout(0, cfg.timeout_ms * 1000);
        client.set_read_timeout(cfg.timeout_ms / 1000, (cfg.timeout_ms % 1000) * 1000);
        httplib::Headers headers;
        if (const char* key = std::getenv(cfg.api_key_env.c_str()))
            headers.emplace("Authorization", std::string("Bearer ") + key);

        json body{{"model", cfg.model},
                  {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})}};
        auto res = client.Post(path, headers, body.dump(), "application/json");
        if (!res) fail("matcher: request failed: " + httplib::to_string(res.error()));
        if (res->status != 200)
            fail("matcher: endpoint returned status " + std::to_string(res->status));
        json reply = json::parse(res->body);
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    }
};

ExternalLlmMatcher::ExternalLlmMatcher(ExternalMatcherConfig cfg)
    : impl_(std::make_unique<Impl>(std::move(cfg))) {}

ExternalLlmMatcher::~ExternalLlmMatcher() = default;

std::vector<int> ExternalLlmMatcher::match(const ReasoningSample& sample) const {
    const std::string prompt = render_prompt(impl_->cfg.prompt_template, sample);
    impl_->in_flight.acquire();
    struct Release {
        std::counting_semaphore<64>& s;
        ~Release() { s.release(); }
    } release{impl_->in_flight};

    std::string last_error;
    for (int attempt = 0; attempt <= impl_->cfg.retries; ++attempt) {
        try {
            std::string content = impl_->call_once(prompt);
            auto targets = parse_numbered_list(content, sample.steps.size());
            for (int v : targets)
                if (v < 0 || size_t(v) >= sample.images.size())
                    fail("matcher: image index out of range in response");
            return targets;
        } catch (const std::exception& e) {
            last_error = e.what();
        }
    }
    if (impl_->cfg.fallback_to_rules) {
        std::cerr << "[matcher] sample " << sample.sample_id << ": external matcher failed after "
                  << impl_->cfg.retries + 1 << " attempts (" << last_error
                  << "), falling back to rules\n";
        return impl_->rules.match(sample);
    }
    fail("curation error for sample " + sample.sample_id + ": " + last_error);
}

}  // namespace valr
