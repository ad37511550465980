#pragma once

#include <optional>
#include <string>
#include <vector>

namespace tsgen {

/// Parsed CSV payload: header plus a dense cell grid. Empty cells come back
/// as nullopt (used to mark unobserved entries in irregular files).
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::optional<double>>> rows;
};

/// Reads a comma-separated file with one header row and numeric columns.
/// Rejects non-numeric and non-finite cells with their location unless
/// `allow_blank`, in which case empty cells become nullopt.
CsvTable read_csv(const std::string& path, bool allow_blank = false);

/// Serializes one value with 17 significant digits, enough for an exact
/// double roundtrip, so repeated seeded runs produce identical bytes.
std::string format_full(double v);

/// Writes rows-of-columns with a header line. nullopt cells print empty.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::optional<double>>>& rows);

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

/// Lists the regular files in a directory with the given extension, sorted
/// by name so iteration order is stable.
std::vector<std::string> list_files(const std::string& dir, const std::string& ext);

void ensure_dir(const std::string& path);

/// True when the directory exists and contains at least one entry.
bool dir_nonempty(const std::string& path);

}  // namespace tsgen
