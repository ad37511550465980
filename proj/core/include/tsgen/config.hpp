#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace tsgen {

/// Flat typed key-value configuration. Keys carry a section prefix
/// ("missing.rate", "unet.base_channels", ...). Files hold one
/// `key = value` pair per line; '#' starts a comment. Lists are
/// comma-separated ("1,2,2,2").
class KvConfig {
public:
    KvConfig() = default;

    static KvConfig parse_file(const std::string& path);
    static KvConfig parse_text(const std::string& text, const std::string& origin = "<text>");

    bool has(const std::string& key) const { return index_.count(key) > 0; }

    void set(const std::string& key, const std::string& value);

    /// Later entries win; used for merging CLI flags over a file.
    void merge_from(const KvConfig& overrides);

    std::string get_str(const std::string& key) const;
    std::string get_str(const std::string& key, const std::string& fallback) const;
    std::int64_t get_int(const std::string& key) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::int64_t> get_int_list(const std::string& key) const;
    std::vector<std::int64_t> get_int_list(const std::string& key,
                                           const std::vector<std::int64_t>& fallback) const;

    /// Keys under "section." in insertion order.
    std::vector<std::string> keys_in_section(const std::string& section) const;

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

    /// Canonical text form: insertion order, `key = value` lines.
    std::string serialize() const;

    /// Raw file bytes when parsed from a file, empty otherwise. Kept so a
    /// run can snapshot its input byte-identically.
    const std::string& source_bytes() const { return source_bytes_; }

    /// Throws ConfigError if any key under `section.` is not in `allowed`.
    void check_known_keys(const std::string& section,
                          const std::vector<std::string>& allowed) const;

private:
    std::vector<std::pair<std::string, std::string>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
    std::string source_bytes_;
    std::string origin_ = "<empty>";

    const std::string& raw(const std::string& key) const;
};

}  // namespace tsgen
