#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace forminv {

/// Piecewise-constant function: values[i] on [breaks[i], breaks[i+1]), the
/// last value extends to +infinity. breaks[0] must be 0.
class PiecewiseConstant {
public:
    PiecewiseConstant(std::vector<double> breaks, std::vector<double> values)
        : breaks_(std::move(breaks)), values_(std::move(values)) {
        if (breaks_.empty() || breaks_.size() != values_.size())
            throw std::invalid_argument("piecewise-constant table needs one value per breakpoint");
        if (breaks_.front() != 0.0) throw std::invalid_argument("piecewise-constant table must start at 0");
        for (std::size_t i = 1; i < breaks_.size(); ++i)
            if (!(breaks_[i] > breaks_[i - 1]))
                throw std::invalid_argument("piecewise-constant breakpoints must be increasing");
        for (double v : values_)
            if (!std::isfinite(v)) throw std::invalid_argument("piecewise-constant values must be finite");
    }

    static PiecewiseConstant constant(double value) { return PiecewiseConstant({0.0}, {value}); }

    /// "b0:v0,b1:v1,..." (the part after "table:").
    static PiecewiseConstant parse(std::string_view text) {
        std::vector<double> b, v;
        while (!text.empty()) {
            const auto comma = text.find(',');
            const std::string_view item = text.substr(0, comma);
            const auto colon = item.find(':');
            if (colon == std::string_view::npos)
                throw std::invalid_argument("table entry '" + std::string(item) + "' is not of the form break:value");
            b.push_back(parse_number(item.substr(0, colon)));
            v.push_back(parse_number(item.substr(colon + 1)));
            if (comma == std::string_view::npos) break;
            text.remove_prefix(comma + 1);
        }
        return PiecewiseConstant(std::move(b), std::move(v));
    }

    double operator()(double s) const {
        const auto it = std::upper_bound(breaks_.begin(), breaks_.end(), s);
        if (it == breaks_.begin()) return values_.front();
        return values_[static_cast<std::size_t>(it - breaks_.begin()) - 1];
    }

    const std::vector<double>& breaks() const noexcept { return breaks_; }
    const std::vector<double>& values() const noexcept { return values_; }
    double min_value() const { return *std::min_element(values_.begin(), values_.end()); }
    double max_value() const { return *std::max_element(values_.begin(), values_.end()); }

    std::string to_string() const {
        std::string out = "table:";
        for (std::size_t i = 0; i < breaks_.size(); ++i) {
            if (i) out += ',';
            out += format(breaks_[i]) + ':' + format(values_[i]);
        }
        return out;
    }

private:
    static double parse_number(std::string_view s) {
        while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
        while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
        double value = 0.0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
        if (ec != std::errc() || ptr != s.data() + s.size())
            throw std::invalid_argument("cannot parse number '" + std::string(s) + "'");
        return value;
    }

    static std::string format(double x) {
        char buf[32];
        const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
        return std::string(buf, ptr);
    }

    std::vector<double> breaks_;
    std::vector<double> values_;
};

/// Piecewise constant in (t, x): row i of values holds the x-table active on
/// [t_breaks[i], t_breaks[i+1]).
class PiecewiseConstant2D {
public:
    PiecewiseConstant2D(std::vector<double> t_breaks, std::vector<double> x_breaks,
                        std::vector<std::vector<double>> values)
        : t_index_(t_breaks, std::vector<double>(t_breaks.size(), 0.0)),
          x_index_(x_breaks, std::vector<double>(x_breaks.size(), 0.0)),
          values_(std::move(values)) {
        if (values_.size() != t_breaks.size())
            throw std::invalid_argument("2-D table needs one row per time breakpoint");
        for (const auto& row : values_)
            if (row.size() != x_breaks.size()) throw std::invalid_argument("2-D table row length mismatch");
    }

    double operator()(double t, double x) const { return values_[locate(t_index_, t)][locate(x_index_, x)]; }

    double min_value() const {
        double m = values_.front().front();
        for (const auto& r : values_) m = std::min(m, *std::min_element(r.begin(), r.end()));
        return m;
    }

private:
    static std::size_t locate(const PiecewiseConstant& table, double s) {
        const auto& b = table.breaks();
        const auto it = std::upper_bound(b.begin(), b.end(), s);
        return it == b.begin() ? 0 : static_cast<std::size_t>(it - b.begin()) - 1;
    }

    PiecewiseConstant t_index_;
    PiecewiseConstant x_index_;
    std::vector<std::vector<double>> values_;
};

}  // namespace forminv
