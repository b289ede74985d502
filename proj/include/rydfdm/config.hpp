#pragma once

// Human-readable key-value configuration files.
//
// Format: one `key = value` pair per line, `#` starts a comment, blank lines
// ignored.  Values keep their literal text; typed access converts on demand.
// Merge precedence across sources is handled by the caller (flags > file >
// defaults).

#include <cstdlib>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "rydfdm/util.hpp"

namespace rydfdm {

class Config {
  public:
    Config() = default;

    static Config parse(const std::string& text) {
        Config cfg;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const std::string stripped = trim(line);
            if (stripped.empty()) continue;
            const auto eq = stripped.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("config line " + std::to_string(lineno) +
                                         ": expected `key = value`");
            const std::string key = trim(stripped.substr(0, eq));
            const std::string value = trim(stripped.substr(eq + 1));
            if (key.empty())
                throw std::runtime_error("config line " + std::to_string(lineno) +
                                         ": empty key");
            cfg.values_[key] = value;
        }
        return cfg;
    }

    static Config load(const std::string& path) {
        return parse(read_file(path));
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    const std::string& get(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end())
            throw std::runtime_error("config: missing key `" + key + "`");
        return it->second;
    }

    std::string get_or(const std::string& key, const std::string& fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key) const {
        const std::string& s = get(key);
        char* end = nullptr;
        const double v = std::strtod(s.c_str(), &end);
        if (end == s.c_str() || *end != '\0')
            throw std::runtime_error("config: key `" + key + "` is not a number: " + s);
        return v;
    }

    double get_double_or(const std::string& key, double fallback) const {
        return has(key) ? get_double(key) : fallback;
    }

    long long get_int(const std::string& key) const {
        const std::string& s = get(key);
        char* end = nullptr;
        const long long v = std::strtoll(s.c_str(), &end, 10);
        if (end == s.c_str() || *end != '\0')
            throw std::runtime_error("config: key `" + key + "` is not an integer: " + s);
        return v;
    }

    long long get_int_or(const std::string& key, long long fallback) const {
        return has(key) ? get_int(key) : fallback;
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    /// Apply every entry of `overrides` on top of this config.
    void merge_from(const Config& overrides) {
        for (const auto& [k, v] : overrides.values_) values_[k] = v;
    }

    /// Canonical text form (sorted keys), suitable for hashing and snapshots.
    std::string to_text() const {
        std::string out;
        for (const auto& [k, v] : values_) {
            out += k;
            out += " = ";
            out += v;
            out += '\n';
        }
        return out;
    }

    const std::map<std::string, std::string>& entries() const { return values_; }

  private:
    static std::string trim(const std::string& s) {
        const auto first = s.find_first_not_of(" \t\r");
        if (first == std::string::npos) return "";
        const auto last = s.find_last_not_of(" \t\r");
        return s.substr(first, last - first + 1);
    }

    std::map<std::string, std::string> values_;
};

}  // namespace rydfdm
