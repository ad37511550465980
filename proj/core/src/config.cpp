#include "tsgen/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "tsgen/errors.hpp"

namespace tsgen {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

}  // namespace

KvConfig KvConfig::parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    KvConfig cfg = parse_text(buf.str(), path);
    cfg.source_bytes_ = buf.str();
    return cfg;
}

KvConfig KvConfig::parse_text(const std::string& text, const std::string& origin) {
    KvConfig cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": expected `key = value`, got: " + line);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        cfg.set(key, value);
    }
    return cfg;
}

void KvConfig::set(const std::string& key, const std::string& value) {
    auto it = index_.find(key);
    if (it != index_.end()) {
        entries_[it->second].second = value;
    } else {
        index_[key] = entries_.size();
        entries_.emplace_back(key, value);
    }
}

void KvConfig::merge_from(const KvConfig& overrides) {
    for (const auto& [k, v] : overrides.entries_) set(k, v);
}

const std::string& KvConfig::raw(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end())
        throw ConfigError("missing config key: " + key + " (" + origin_ + ")");
    return entries_[it->second].second;
}

std::string KvConfig::get_str(const std::string& key) const { return raw(key); }

std::string KvConfig::get_str(const std::string& key, const std::string& fallback) const {
    return has(key) ? raw(key) : fallback;
}

std::int64_t KvConfig::get_int(const std::string& key) const {
    const std::string& v = raw(key);
    char* end = nullptr;
    const long long r = std::strtoll(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0')
        throw ConfigError("config key " + key + ": not an integer: " + v);
    return r;
}

std::int64_t KvConfig::get_int(const std::string& key, std::int64_t fallback) const {
    return has(key) ? get_int(key) : fallback;
}

double KvConfig::get_double(const std::string& key) const {
    const std::string& v = raw(key);
    char* end = nullptr;
    const double r = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0')
        throw ConfigError("config key " + key + ": not a number: " + v);
    return r;
}

double KvConfig::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

bool KvConfig::get_bool(const std::string& key) const {
    const std::string& v = raw(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config key " + key + ": not a bool: " + v);
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
    return has(key) ? get_bool(key) : fallback;
}

std::vector<std::int64_t> KvConfig::get_int_list(const std::string& key) const {
    const std::string& v = raw(key);
    std::vector<std::int64_t> out;
    std::istringstream in(v);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        char* end = nullptr;
        const long long r = std::strtoll(item.c_str(), &end, 10);
        if (end == item.c_str() || *end != '\0')
            throw ConfigError("config key " + key + ": bad list element: " + item);
        out.push_back(r);
    }
    if (out.empty()) throw ConfigError("config key " + key + ": empty list");
    return out;
}

std::vector<std::int64_t> KvConfig::get_int_list(
    const std::string& key, const std::vector<std::int64_t>& fallback) const {
    return has(key) ? get_int_list(key) : fallback;
}

std::vector<std::string> KvConfig::keys_in_section(const std::string& section) const {
    const std::string prefix = section + ".";
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_)
        if (k.rfind(prefix, 0) == 0) out.push_back(k);
    return out;
}

std::string KvConfig::serialize() const {
    std::ostringstream out;
    for (const auto& [k, v] : entries_) out << k << " = " << v << "\n";
    return out.str();
}

void KvConfig::check_known_keys(const std::string& section,
                                const std::vector<std::string>& allowed) const {
    const std::string prefix = section + ".";
    for (const auto& [k, v] : entries_) {
        if (k.rfind(prefix, 0) != 0) continue;
        const std::string name = k.substr(prefix.size());
        bool known = false;
        for (const auto& a : allowed)
            if (a == name) { known = true; break; }
        if (!known) throw ConfigError("unknown config key: " + k);
    }
}

}  // namespace tsgen
