#include "tppt/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>

#include <nlohmann/json.hpp>

#include "tppt/error.hpp"

namespace tppt {

std::string file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw runtime_error("cannot hash missing file: " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[8192];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize n = in.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (!in) break;
    }
    char hex[32];
    std::snprintf(hex, sizeof(hex), "fnv1a64:%016llx", static_cast<unsigned long long>(h));
    return hex;
}

std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%FT%TZ", &tm);
    return buf;
}

void RunManifest::write(const std::string& path) const {
    nlohmann::json doc;
    doc["command"] = command;
    doc["workers"] = workers;
    doc["seed"] = seed;
    doc["argv"] = argv;
    doc["config"] = config;
    doc["inputs"] = inputs;
    doc["outputs"] = outputs;
    doc["created"] = created;
    std::ofstream out(path);
    if (!out) throw runtime_error("cannot write manifest: " + path);
    out << doc.dump(2) << "\n";
}

RunManifest RunManifest::read(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open manifest: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        throw parse_error("malformed manifest " + path + ": " + e.what());
    }
    RunManifest m;
    m.command = doc.value("command", "");
    m.workers = doc.value("workers", 1);
    m.seed = doc.value("seed", std::uint64_t{0});
    if (doc.contains("argv")) m.argv = doc["argv"].get<std::vector<std::string>>();
    if (doc.contains("config")) m.config = doc["config"].get<std::map<std::string, std::string>>();
    if (doc.contains("inputs")) m.inputs = doc["inputs"].get<std::map<std::string, std::string>>();
    if (doc.contains("outputs")) m.outputs = doc["outputs"].get<std::vector<std::string>>();
    m.created = doc.value("created", "");
    return m;
}

} // namespace tppt
