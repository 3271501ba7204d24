#pragma once

// Run manifests: what a subcommand read, wrote, and with which seed/config.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace icdn::manifest {

inline constexpr const char* kToolVersion = "0.1.0";

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::string& path);

struct RunManifest {
    std::string command;
    std::map<std::string, std::string> flags;
    std::string config_path;
    std::string config_hash;                      // of the config file bytes, empty when none
    std::map<std::string, std::string> inputs;    // path -> sha256
    std::map<std::string, std::string> outputs;   // path -> sha256
    std::uint64_t seed = 0;
    std::string tool_version = kToolVersion;
    std::string started_utc;
    std::string finished_utc;

    void add_input(const std::string& path);
    void add_output(const std::string& path);
};

std::string utc_now();
std::string to_json(const RunManifest& m);
void write_manifest(const RunManifest& m, const std::string& path);

}  // namespace icdn::manifest
