#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "jex/common.hpp"

namespace jex {

// Flat "key = value" configuration with '#' comments. Typed getters throw
// ConfigError on unparsable values; lookups fall back to the given default.
class KvConfig {
public:
    KvConfig() = default;

    static KvConfig from_file(const std::string& path);
    static KvConfig from_string(const std::string& text);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

    std::string get_str(const std::string& key, const std::string& fallback) const;
    int64_t get_int(const std::string& key, int64_t fallback) const;
    uint64_t get_u64(const std::string& key, uint64_t fallback) const;
    double get_real(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    // merges `other` on top of this config
    void overlay(const KvConfig& other);

    std::string serialize() const;  // sorted "key = value" lines
    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

// Every CLI run writes exactly one manifest; rerunning from it reproduces
// the run's outputs bit for bit (timestamps aside).
struct RunManifest {
    std::string command;
    std::map<std::string, std::string> config;
    uint64_t seed = 0;
    std::string code_version;
    std::string started;
    std::string finished;
    std::vector<std::string> outputs;

    std::string to_json() const;
    static RunManifest from_json(const std::string& text);
    void write(const std::string& path) const;
    static RunManifest read(const std::string& path);
};

}  // namespace jex
