#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace rns {

// 17 significant digits so values round-trip exactly.
inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string fmt_short(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

class CsvTable {
  public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    void add_row(const std::vector<double>& row) {
        std::vector<std::string> cells;
        cells.reserve(row.size());
        for (double v : row) cells.push_back(fmt(v));
        rows_.push_back(std::move(cells));
    }
    void add_row_text(std::vector<std::string> row) { rows_.push_back(std::move(row)); }

    size_t size() const { return rows_.size(); }

    std::string str() const {
        std::string s;
        append_line(s, header_);
        for (const auto& r : rows_) append_line(s, r);
        return s;
    }

    void write(const std::filesystem::path& path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write " + path.string());
        os << str();
        if (!os) throw std::runtime_error("write failed for " + path.string());
    }

  private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;

    static void append_line(std::string& s, const std::vector<std::string>& cells) {
        for (size_t i = 0; i < cells.size(); ++i) {
            if (i) s += ',';
            s += cells[i];
        }
        s += '\n';
    }
};

}  // namespace rns
