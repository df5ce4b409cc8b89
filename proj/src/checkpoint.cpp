#include "tppt/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <unordered_map>

#include "tppt/error.hpp"

namespace tppt {

namespace {

constexpr char kMagic[] = "TPPT1";
constexpr std::size_t kMagicLen = 5;

void put_i64(std::ofstream& out, std::int64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::int64_t get_i64(std::ifstream& in, const std::string& path) {
    std::int64_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
        throw parse_error("truncated checkpoint: " + path);
    }
    return v;
}

} // namespace

void save_checkpoint(const std::vector<const Parameter*>& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw runtime_error("cannot write checkpoint: " + path);
    out.write(kMagic, kMagicLen);
    for (const Parameter* p : params) {
        put_i64(out, static_cast<std::int64_t>(p->name.size()));
        out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        put_i64(out, p->value.rank());
        for (int d = 0; d < p->value.rank(); ++d) put_i64(out, p->value.dim(d));
        out.write(reinterpret_cast<const char*>(p->value.data()),
                  static_cast<std::streamsize>(p->value.numel() * sizeof(double)));
    }
    if (!out) throw runtime_error("checkpoint write failed: " + path);
}

void load_checkpoint(std::vector<Parameter*>& params, const std::string& path,
                     const std::string& prefix) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw parse_error("cannot open checkpoint: " + path);
    char magic[kMagicLen];
    if (!in.read(magic, kMagicLen) || std::memcmp(magic, kMagic, kMagicLen) != 0) {
        throw parse_error("bad checkpoint magic: " + path);
    }

    std::unordered_map<std::string, Parameter*> by_name;
    for (Parameter* p : params) by_name.emplace(p->name, p);

    std::vector<std::string> loaded;
    while (in.peek() != std::ifstream::traits_type::eof()) {
        const std::int64_t name_len = get_i64(in, path);
        if (name_len < 0 || name_len > 4096) throw parse_error("corrupt checkpoint entry: " + path);
        std::string name(static_cast<std::size_t>(name_len), '\0');
        if (!in.read(name.data(), name_len)) throw parse_error("truncated checkpoint: " + path);
        const std::int64_t rank = get_i64(in, path);
        if (rank < 0 || rank > 8) throw parse_error("corrupt checkpoint rank: " + path);
        std::vector<std::int64_t> dims(static_cast<std::size_t>(rank));
        std::int64_t numel = 1;
        for (auto& d : dims) {
            d = get_i64(in, path);
            numel *= d;
        }
        std::vector<double> data(static_cast<std::size_t>(numel));
        if (!in.read(reinterpret_cast<char*>(data.data()),
                     static_cast<std::streamsize>(data.size() * sizeof(double)))) {
            throw parse_error("truncated checkpoint: " + path);
        }

        const bool selected = prefix.empty() || name.rfind(prefix, 0) == 0;
        if (!selected) continue;

        const auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw validation_error("checkpoint parameter '" + name + "' not present in model");
        }
        Parameter* p = it->second;
        if (p->value.shape() != dims) {
            throw validation_error("checkpoint parameter '" + name + "' shape mismatch: file " +
                                   Tensor(dims).shape_string() + " vs model " + p->value.shape_string());
        }
        p->value = Tensor(dims, std::move(data));
        loaded.push_back(name);
    }

    // Every selected model parameter must be covered.
    for (Parameter* p : params) {
        if (!prefix.empty() && p->name.rfind(prefix, 0) != 0) continue;
        bool found = false;
        for (const auto& n : loaded) {
            if (n == p->name) {
                found = true;
                break;
            }
        }
        if (!found) {
            throw validation_error("checkpoint is missing parameter '" + p->name + "'");
        }
    }
}

} // namespace tppt
