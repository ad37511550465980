#include "tsgen/csvio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tsgen/errors.hpp"

namespace fs = std::filesystem;

namespace tsgen {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    cells.push_back(cur);
    return cells;
}

std::string trim_ws(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t')) --e;
    return s.substr(b, e - b);
}

}  // namespace

CsvTable read_csv(const std::string& path, bool allow_blank) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open CSV file: " + path);

    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    for (auto& cell : split_line(line)) table.header.push_back(trim_ws(cell));

    const std::size_t ncols = table.header.size();
    std::size_t data_row = 0;
    while (std::getline(in, line)) {
        if (line.empty() && in.eof()) break;
        ++data_row;
        auto cells = split_line(line);
        if (cells.size() != ncols)
            throw DataError(path + ": row " + std::to_string(data_row) + " has " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(ncols));
        std::vector<std::optional<double>> parsed;
        parsed.reserve(ncols);
        for (std::size_t c = 0; c < ncols; ++c) {
            const std::string cell = trim_ws(cells[c]);
            if (cell.empty()) {
                if (!allow_blank)
                    throw DataError(path + ": empty cell at row " + std::to_string(data_row) +
                                    ", column " + std::to_string(c + 1));
                parsed.push_back(std::nullopt);
                continue;
            }
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0')
                throw DataError(path + ": non-numeric cell \"" + cell + "\" at row " +
                                std::to_string(data_row) + ", column " + std::to_string(c + 1));
            if (!std::isfinite(v))
                throw DataError(path + ": non-finite entry at row " + std::to_string(data_row) +
                                ", column " + std::to_string(c + 1));
            parsed.push_back(v);
        }
        table.rows.push_back(std::move(parsed));
    }
    if (table.rows.empty()) throw DataError(path + ": empty data (header only)");
    return table;
}

std::string format_full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::optional<double>>>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write CSV file: " + path);
    for (std::size_t c = 0; c < header.size(); ++c)
        out << (c ? "," : "") << header[c];
    out << "\n";
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) out << ",";
            if (row[c]) out << format_full(*row[c]);
        }
        out << "\n";
    }
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
    std::vector<std::vector<std::optional<double>>> opt_rows;
    opt_rows.reserve(rows.size());
    for (const auto& row : rows) {
        std::vector<std::optional<double>> r(row.begin(), row.end());
        opt_rows.push_back(std::move(r));
    }
    write_csv(path, header, opt_rows);
}

std::vector<std::string> list_files(const std::string& dir, const std::string& ext) {
    if (!fs::is_directory(dir)) throw InputError("not a directory: " + dir);
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ext)
            files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    return files;
}

void ensure_dir(const std::string& path) { fs::create_directories(path); }

bool dir_nonempty(const std::string& path) {
    if (!fs::exists(path)) return false;
    if (!fs::is_directory(path)) return true;
    return fs::directory_iterator(path) != fs::directory_iterator();
}

}  // namespace tsgen
