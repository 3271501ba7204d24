#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace icdn {

// Flat `key = value` text configuration. `#` starts a comment; blank lines are
// ignored; string values may be quoted. Keys are case-sensitive.
class KeyValueConfig {
public:
    static KeyValueConfig parse(const std::string& text);
    static KeyValueConfig load(const std::string& path);

    [[nodiscard]] bool has(const std::string& key) const { return values_.count(key) != 0; }
    [[nodiscard]] std::optional<std::string> get(const std::string& key) const;

    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    [[nodiscard]] const std::map<std::string, std::string>& values() const noexcept { return values_; }

    // Keys not in `known` are rejected so typos surface early.
    void require_known(const std::vector<std::string>& known) const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace icdn
