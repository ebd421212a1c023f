#include "valr/manifest.hpp"

#include <chrono>
#include <filesystem>

#include <json.hpp>

namespace valr {

using nlohmann::json;

namespace {
int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}
}  // namespace

std::string RunManifest::path_in(const std::string& out_dir) {
    return (std::filesystem::path(out_dir) / "manifest.json").string();
}

RunManifest RunManifest::begin(const std::string& command, const std::string& config_json,
                               uint64_t seed, const std::vector<std::string>& input_paths,
                               const std::vector<std::string>& declared_outputs,
                               const std::string& out_dir) {
    RunManifest m;
    m.command = command;
    m.config_json = config_json.empty() ? "{}" : config_json;
    m.seed = seed;
    m.started_at_ms = now_ms();
    for (const auto& p : input_paths) m.inputs.emplace_back(p, hex64(hash_file(p)));
    for (const auto& p : declared_outputs) m.outputs.emplace_back(p, "");
    std::filesystem::create_directories(out_dir);
    std::string text = m.to_json();
    write_file_atomic(path_in(out_dir), text.data(), text.size());
    return m;
}

void RunManifest::finish(const std::string& out_dir) {
    finished_at_ms = now_ms();
    for (auto& [path, hash] : outputs) hash = hex64(hash_file(path));
    std::string text = to_json();
    write_file_atomic(path_in(out_dir), text.data(), text.size());
}

std::string RunManifest::to_json() const {
    json j;
    j["command"] = command;
    j["config"] = json::parse(config_json);
    j["version"] = version;
    j["seed"] = seed;
    j["started_at_ms"] = started_at_ms;
    j["finished_at_ms"] = finished_at_ms;
    json in = json::array();
    for (const auto& [p, h] : inputs) in.push_back({{"path", p}, {"hash", h}});
    j["inputs"] = in;
    json out = json::array();
    for (const auto& [p, h] : outputs) out.push_back({{"path", p}, {"hash", h}});
    j["outputs"] = out;
    return j.dump(2);
}

RunManifest RunManifest::from_json(const std::string& text) {
    json j = json::parse(text);
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.config_json = j.at("config").dump();
    m.version = j.at("version").get<std::string>();
    m.seed = j.at("seed").get<uint64_t>();
    m.started_at_ms = j.at("started_at_ms").get<int64_t>();
    m.finished_at_ms = j.at("finished_at_ms").get<int64_t>();
    for (const auto& e : j.at("inputs"))
        m.inputs.emplace_back(e.at("path").get<std::string>(), e.at("hash").get<std::string>());
    for (const auto& e : j.at("outputs"))
        m.outputs.emplace_back(e.at("path").get<std::string>(), e.at("hash").get<std::string>());
    return m;
}

}  // namespace valr
