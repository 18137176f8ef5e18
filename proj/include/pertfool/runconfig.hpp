#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>

#include "pertfool/errors.hpp"

namespace pertfool {

/// Line-oriented `key = value` run configuration: '#' starts a comment,
/// blank lines are ignored, keys are unique. Command-line flags override
/// file values; the fully resolved set is written next to every artifact.
class RunConfig {
public:
    RunConfig() = default;

    static RunConfig from_file(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get(const std::string& key, const std::string& fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    double get_real(const std::string& key, double fallback) const;

    /// Throws ConfigError naming the first key not in `known`.
    void require_known(const std::set<std::string>& known) const;

    /// Canonical `key = value` rendering, keys sorted.
    std::string render() const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace pertfool
