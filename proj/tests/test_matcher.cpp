#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "valr/matcher.hpp"

using namespace valr;
using nlohmann::json;

namespace {

// In-process chat-completion endpoint with a scriptable reply.
class MockServer {
public:
    explicit MockServer(std::function<std::string(const json&)> reply) : reply_(std::move(reply)) {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                    httplib::Response& res) {
            ++hits;
            last_body = req.body;
            if (req.has_header("Authorization")) last_auth = req.get_header_value("Authorization");
            json body = json::parse(req.body);
            json out{{"choices",
                      json::array({json{{"message", json{{"role", "assistant"},
                                                         {"content", reply_(body)}}}}})}};
            res.set_content(out.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockServer() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }
    std::atomic<int> hits{0};
    std::string last_body;
    std::string last_auth;

private:
    httplib::Server server_;
    std::function<std::string(const json&)> reply_;
    int port_ = 0;
    std::thread thread_;
};

ReasoningSample three_step_sample() {
    auto gen = generate_synthetic(1, GeneratorOptions{}, 11);
    ReasoningSample s = gen[0].sample;
    while (s.images.size() < 3) {
        Image extra = s.images[0];
        extra.image_id = int(s.images.size());
        s.images.push_back(extra);
    }
    s.steps.resize(3);
    return s;
}

}  // namespace

TEST_CASE("numbered-list parsing is strict") {
    CHECK(ExternalLlmMatcher::parse_numbered_list("1. 2\n2. 0\n3. 1\n", 3) ==
          std::vector<int>{2, 0, 1});
    CHECK(ExternalLlmMatcher::parse_numbered_list("  1.  2 \nnoise\n2. 0\n3. 1", 3) ==
          std::vector<int>{2, 0, 1});
    CHECK_THROWS_WITH_AS(ExternalLlmMatcher::parse_numbered_list("1. 2\n3. 1\n", 3),
                         doctest::Contains("numbered list"), Error);
    CHECK_THROWS_AS(ExternalLlmMatcher::parse_numbered_list("free text", 2), Error);
}

TEST_CASE("external matcher returns the endpoint's mapping") {
    MockServer server([](const json&) { return "1. 2\n2. 0\n3. 1\n"; });
    ExternalMatcherConfig cfg;
    cfg.url = server.url();
    cfg.retries = 0;
    setenv("VALR_MATCHER_KEY", "test-key-123", 1);
    ExternalLlmMatcher matcher(cfg);
    auto s = three_step_sample();
    auto targets = matcher.match(s);
    CHECK(targets == std::vector<int>{2, 0, 1});
    CHECK(server.hits == 1);
    CHECK(server.last_auth == "Bearer test-key-123");
    // request body is a chat-completion shape carrying the curation prompt
    json body = json::parse(server.last_body);
    CHECK(body.at("model") == "gpt-4o");
    std::string content = body.at("messages").at(0).at("content").get<std::string>();
    CHECK(content.find(default_curation_prompt()) == 0);
    CHECK(content.find(s.steps[1].text) != std::string::npos);
    unsetenv("VALR_MATCHER_KEY");
}

TEST_CASE("malformed responses exhaust retries then fall back to rules") {
    MockServer server([](const json&) { return "i refuse to follow instructions"; });
    ExternalMatcherConfig cfg;
    cfg.url = server.url();
    cfg.retries = 2;
    cfg.fallback_to_rules = true;
    ExternalLlmMatcher matcher(cfg);
    auto s = three_step_sample();
    auto targets = matcher.match(s);  // rule-based result
    CHECK(server.hits == 3);          // 1 + R retries
    RuleBasedMatcher rules;
    CHECK(targets == rules.match(s));
}

TEST_CASE("without fallback a malformed response is a curation error") {
    MockServer server([](const json&) { return "nope"; });
    ExternalMatcherConfig cfg;
    cfg.url = server.url();
    cfg.retries = 1;
    cfg.fallback_to_rules = false;
    ExternalLlmMatcher matcher(cfg);
    auto s = three_step_sample();
    CHECK_THROWS_WITH_AS(matcher.match(s), doctest::Contains("curation error"), Error);
    CHECK(server.hits == 2);
}

TEST_CASE("assign_targets goes through the external matcher for multi-view") {
    MockServer server([](const json& body) {
        // echo a fixed valid mapping regardless of the request
        std::string content = body.at("messages").at(0).at("content").get<std::string>();
        return "1. 1\n2. 1\n3. 0\n";
    });
    ExternalMatcherConfig cfg;
    cfg.url = server.url();
    ExternalLlmMatcher matcher(cfg);
    auto s = three_step_sample();
    auto assigned = assign_targets(s, matcher);
    CHECK(assigned.steps[0].target_image == 1);
    CHECK(assigned.steps[1].target_image == 1);
    CHECK(assigned.steps[2].target_image == 0);
}
