#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace tppt {

// Every command writes one manifest next to its outputs; the stored argv is
// sufficient to rerun the command exactly.
struct RunManifest {
    std::string command;
    int workers = 1;
    std::uint64_t seed = 0;
    std::vector<std::string> argv;               // resolved invocation, command first
    std::map<std::string, std::string> config;   // resolved option values
    std::map<std::string, std::string> inputs;   // input path -> content hash
    std::vector<std::string> outputs;            // produced files, relative to the manifest dir
    std::string created;                         // ISO-8601, informational only

    void write(const std::string& path) const;
    static RunManifest read(const std::string& path);
};

// FNV-1a 64-bit content hash, "fnv1a64:<hex>".
std::string file_hash(const std::string& path);

std::string iso_timestamp();

} // namespace tppt
