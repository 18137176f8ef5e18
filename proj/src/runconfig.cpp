#include "pertfool/runconfig.hpp"

#include <fstream>
#include <sstream>

namespace pertfool {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path.string());
    RunConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string stripped = line;
        std::size_t hash = stripped.find('#');
        if (hash != std::string::npos) stripped.erase(hash);
        stripped = trim(stripped);
        if (stripped.empty()) continue;
        std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": expected 'key = value'");
        std::string key = trim(stripped.substr(0, eq));
        std::string value = trim(stripped.substr(eq + 1));
        if (key.empty())
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": empty key");
        if (cfg.values_.count(key))
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": duplicate key '" + key + "'");
        cfg.values_[key] = value;
    }
    return cfg;
}

std::string RunConfig::get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

long long RunConfig::get_int(const std::string& key, long long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t pos = 0;
        long long v = std::stoll(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' is not an integer: " + it->second);
    }
}

double RunConfig::get_real(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t pos = 0;
        double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' is not a number: " + it->second);
    }
}

void RunConfig::require_known(const std::set<std::string>& known) const {
    for (const auto& [key, value] : values_)
        if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
}

std::string RunConfig::render() const {
    std::ostringstream os;
    for (const auto& [key, value] : values_) os << key << " = " << value << "\n";
    return os.str();
}

}  // namespace pertfool
