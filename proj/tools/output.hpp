#ifndef GAUSSCALC_TOOLS_OUTPUT_HPP
#define GAUSSCALC_TOOLS_OUTPUT_HPP

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "gausscalc/covariance.hpp"
#include "gausscalc/error.hpp"

namespace gausscalc::cli {

using Json = nlohmann::ordered_json;

/// Shortest text that round-trips through 17 significant digits.
inline std::string format_number(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os << std::setprecision(17) << v;
    return os.str();
}

using Cell = std::variant<double, std::string>;

class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    void add(std::vector<Cell> row) {
        if (row.size() != header_.size()) {
            throw ShapeError("CSV row width does not match the header");
        }
        rows_.push_back(std::move(row));
    }

    std::size_t rows() const { return rows_.size(); }

    std::string str() const {
        std::ostringstream os;
        write_line(os, header_);
        for (const auto& r : rows_) {
            std::vector<std::string> cells;
            for (const auto& c : r) {
                cells.push_back(std::holds_alternative<double>(c) ? format_number(std::get<double>(c))
                                                                  : std::get<std::string>(c));
            }
            write_line(os, cells);
        }
        return os.str();
    }

private:
    static void write_line(std::ostream& os, const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            os << (i ? "," : "") << cells[i];
        }
        os << '\n';
    }

    std::vector<std::string> header_;
    std::vector<std::vector<Cell>> rows_;
};

/// Non-finite numbers become strings so that the document stays valid JSON.
inline Json num(double v) {
    if (std::isfinite(v)) {
        return v;
    }
    return format_number(v);
}

inline Json vec(const Vector& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        a.push_back(num(v(i)));
    }
    return a;
}

inline Json vec(const std::vector<double>& v) {
    Json a = Json::array();
    for (double x : v) {
        a.push_back(num(x));
    }
    return a;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ConfigError("cannot write '" + path.string() + "'");
    }
    out << text;
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace gausscalc::cli

#endif  // GAUSSCALC_TOOLS_OUTPUT_HPP
