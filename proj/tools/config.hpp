#ifndef GAUSSCALC_TOOLS_CONFIG_HPP
#define GAUSSCALC_TOOLS_CONFIG_HPP

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gausscalc/covariance.hpp"
#include "gausscalc/error.hpp"

namespace gausscalc::cli {

/// Flat key = value configuration; '#' starts a comment.
class Config {
public:
    static Config parse(std::istream& in) {
        Config c;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (const auto hash = line.find('#'); hash != std::string::npos) {
                line.erase(hash);
            }
            line = trim(line);
            if (line.empty()) {
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
            }
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty()) {
                throw ConfigError("line " + std::to_string(lineno) + ": empty key");
            }
            if (c.values_.count(key) != 0) {
                throw ConfigError("duplicate key '" + key + "'");
            }
            c.values_[key] = value;
            c.order_.push_back(key);
        }
        return c;
    }

    static Config parse_string(const std::string& text) {
        std::istringstream in(text);
        return parse(in);
    }

    static Config load(const std::string& path) {
        std::ifstream in(path);
        if (!in) {
            throw ConfigError("cannot open config file '" + path + "'");
        }
        return parse(in);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    void set(const std::string& key, const std::string& value) {
        if (!has(key)) {
            order_.push_back(key);
        }
        values_[key] = value;
    }

    std::string str(const std::string& key, const std::string& fallback) const {
        return has(key) ? values_.at(key) : fallback;
    }

    double num(const std::string& key, double fallback) const {
        return has(key) ? to_double(key, values_.at(key)) : fallback;
    }

    std::size_t count(const std::string& key, std::size_t fallback) const {
        if (!has(key)) {
            return fallback;
        }
        const double v = num(key, 0.0);
        if (v < 0.0 || v != std::floor(v)) {
            throw ConfigError("'" + key + "' must be a nonnegative integer");
        }
        return static_cast<std::size_t>(v);
    }

    std::uint64_t seed(const std::string& key, std::uint64_t fallback) const {
        if (!has(key)) {
            return fallback;
        }
        const std::string& s = values_.at(key);
        std::uint64_t out = 0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
        if (ec != std::errc() || p != s.data() + s.size()) {
            throw ConfigError("'" + key + "' must be an unsigned 64-bit integer");
        }
        return out;
    }

    std::vector<double> list(const std::string& key, const std::vector<double>& fallback) const {
        if (!has(key)) {
            return fallback;
        }
        std::vector<double> out;
        std::stringstream ss(values_.at(key));
        std::string item;
        while (std::getline(ss, item, ',')) {
            out.push_back(to_double(key, trim(item)));
        }
        if (out.empty()) {
            throw ConfigError("'" + key + "' must be a nonempty list");
        }
        return out;
    }

    /// Keys in file order, for the manifest echo.
    const std::vector<std::string>& keys() const { return order_; }

private:
    static std::string trim(const std::string& s) {
        const auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) {
            return "";
        }
        const auto b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    }

    static double to_double(const std::string& key, const std::string& s) {
        try {
            std::size_t used = 0;
            const double v = std::stod(s, &used);
            if (used != s.size()) {
                throw std::invalid_argument(s);
            }
            return v;
        } catch (const std::exception&) {
            throw ConfigError("'" + key + "' must be numeric, got '" + s + "'");
        }
    }

    std::map<std::string, std::string> values_;
    std::vector<std::string> order_;
};

namespace detail {

inline CovarianceModel simple_model(const Config& c, const std::string& kind, const std::string& hkey) {
    if (kind == "bm") {
        return CovarianceModel::bm();
    }
    if (kind == "fbm") {
        return CovarianceModel::fbm(c.num(hkey, 0.75));
    }
    if (kind == "weighted_fbm") {
        return CovarianceModel::weighted_fbm(c.num(hkey, 0.75), c.list("breaks", {0.0, c.num("T", 1.0)}),
                                             c.list("sigma", {1.0}));
    }
    throw ConfigError("unknown model '" + kind + "'");
}

}  // namespace detail

/// model = bm | fbm | weighted_fbm | sum; a sum combines model1 (H1) and gamma times model2 (H2).
inline CovarianceModel model_from_config(const Config& c) {
    const std::string kind = c.str("model", "fbm");
    if (kind == "sum") {
        return CovarianceModel::sum(detail::simple_model(c, c.str("model1", "bm"), "H1"),
                                    detail::simple_model(c, c.str("model2", "fbm"), "H2"), c.num("gamma", 1.0));
    }
    return detail::simple_model(c, kind, "H");
}

inline TimeGrid grid_from_config(const Config& c) {
    const std::size_t N = c.count("N", 16);
    const double T = c.num("T", 1.0);
    if (N == 0 || !(T > 0.0)) {
        throw ConfigError("need N >= 1 and T > 0");
    }
    return TimeGrid::uniform(N, T);
}

/// A configured time that must be a grid node.
inline double aligned_time(const Config& c, const TimeGrid& grid, const std::string& key, double fallback) {
    const double t = c.num(key, fallback);
    if (!grid.contains(t)) {
        throw ConfigError("'" + key + "' = " + std::to_string(t) + " is not a grid time");
    }
    return grid[grid.index_of(t)];
}

}  // namespace gausscalc::cli

#endif  // GAUSSCALC_TOOLS_CONFIG_HPP
