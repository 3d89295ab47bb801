#pragma once

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

#include "fusion/tensor.hpp"

namespace fusion {

// Raised for malformed command lines, unknown config keys and bad values;
// the CLI maps it to exit code 1.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Plain-text key-value configuration with dotted sections. Every key the
// artifact understands has a built-in default; files and overrides may only
// assign to known keys.
class Config {
public:
    static Config defaults();

    // defaults, then the file (when non-empty), applied in order
    static Config load(const std::string& path);

    void apply_file(const std::string& path);
    void apply_override(const std::string& key_equals_value);
    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;

    const std::string& get(const std::string& key) const;
    double number(const std::string& key) const;
    Index integer(const std::string& key) const;
    bool flag(const std::string& key) const;
    std::vector<Index> integer_list(const std::string& key) const;  // comma-separated
    std::vector<std::string> list(const std::string& key) const;

    std::string dump() const;  // stable key order
    nlohmann::json to_json() const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace fusion
