#pragma once

// Plain-text key-value configuration with dotted sections. Either style works:
//
//   [submap]
//   length_m = 2.0
//
//   submap.length_m = 2.0
//
// Lines starting with '#' are comments. Values are strings until queried.

#include <gprloc/app/dataset.hpp>

#include <istream>

namespace gprloc::app {

class Config {
public:
    Config() = default;

    static Config parse(std::istream& in) {
        Config cfg;
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            const std::string t = trim(line);
            if (t.empty() || t[0] == '#') continue;
            if (t.front() == '[') {
                if (t.back() != ']')
                    throw DataError("config line " + std::to_string(lineno) + ": bad section");
                section = trim(t.substr(1, t.size() - 2));
                continue;
            }
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw DataError("config line " + std::to_string(lineno) + ": expected key = value");
            std::string key = trim(t.substr(0, eq));
            if (key.empty())
                throw DataError("config line " + std::to_string(lineno) + ": empty key");
            if (!section.empty()) key = section + "." + key;
            cfg.values_[key] = trim(t.substr(eq + 1));
        }
        return cfg;
    }

    static Config parse_file(const std::filesystem::path& p) {
        auto f = detail::open_or_throw(p);
        return parse(f);
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback = "") const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        return detail::parse_double(it->second, "config key " + key);
    }

    int get_int(const std::string& key, int fallback) const {
        const double v = get_double(key, fallback);
        if (v != std::floor(v)) throw DataError("config key " + key + ": expected integer");
        return static_cast<int>(v);
    }

    uint64_t get_u64(const std::string& key, uint64_t fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            return std::stoull(it->second);
        } catch (const std::exception&) {
            throw DataError("config key " + key + ": expected unsigned integer");
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw DataError("config key " + key + ": expected true/false");
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    const std::map<std::string, std::string>& values() const { return values_; }

    // FNV-1a over the normalized "key=value\n" list; recorded in every output
    // so downstream tools can detect config mismatches.
    uint64_t hash() const {
        uint64_t h = 1469598103934665603ull;
        auto feed = [&](const std::string& s) {
            for (unsigned char ch : s) {
                h ^= ch;
                h *= 1099511628211ull;
            }
        };
        for (const auto& [k, v] : values_) {
            feed(k);
            feed("=");
            feed(v);
            feed("\n");
        }
        return h;
    }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> values_;
};

} // namespace gprloc::app
