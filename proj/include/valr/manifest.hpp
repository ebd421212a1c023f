#pragma once

#include <string>
#include <vector>

#include "valr/util.hpp"

namespace valr {

inline constexpr const char* kValrVersion = "valr-0.1.0";

// Per-run provenance record. Written atomically into the output directory
// before work starts (inputs hashed, outputs listed); rewritten atomically
// with output hashes on success, so the directory always holds exactly one
// manifest.
struct RunManifest {
    std::string command;
    std::string config_json = "{}";
    std::string version = kValrVersion;
    uint64_t seed = 0;
    int64_t started_at_ms = 0;
    int64_t finished_at_ms = 0;
    std::vector<std::pair<std::string, std::string>> inputs;   // path, fnv1a64 hex
    std::vector<std::pair<std::string, std::string>> outputs;  // path, hex or "" while running

    static RunManifest begin(const std::string& command, const std::string& config_json,
                             uint64_t seed, const std::vector<std::string>& input_paths,
                             const std::vector<std::string>& declared_outputs,
                             const std::string& out_dir);
    void finish(const std::string& out_dir);  // hashes declared outputs, rewrites

    std::string to_json() const;
    static RunManifest from_json(const std::string& text);
    static std::string path_in(const std::string& out_dir);
};

}  // namespace valr
