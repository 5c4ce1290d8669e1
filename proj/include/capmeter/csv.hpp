#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "capmeter/dataset.hpp"
#include "capmeter/error.hpp"

namespace capmeter {

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

inline std::optional<double> parse_number(std::string_view s) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
        return std::nullopt;
    return v;
}

/// Affine map of [lo, hi] onto [-6, 6]. An axis that already spans exactly
/// [-6, 6] is left untouched so canonical data survives a round trip bit for
/// bit; a degenerate axis maps to 0.
inline void rescale_axis(std::vector<RawPoint>& pts, double RawPoint::*axis) {
    auto [lo_it, hi_it] = std::minmax_element(pts.begin(), pts.end(), [&](const RawPoint& a, const RawPoint& b) {
        return a.*axis < b.*axis;
    });
    const double lo = (*lo_it).*axis, hi = (*hi_it).*axis;
    if (lo == -kDomainHalfWidth && hi == kDomainHalfWidth) return;
    for (RawPoint& p : pts) {
        if (hi == lo) {
            p.*axis = 0.0;
        } else if (p.*axis == hi) {
            p.*axis = kDomainHalfWidth;
        } else {
            p.*axis = -kDomainHalfWidth + 2.0 * kDomainHalfWidth * ((p.*axis - lo) / (hi - lo));
        }
    }
}

}  // namespace detail

inline constexpr std::size_t kMinUploadRows = 4;

/// Parses an uploaded dataset: UTF-8, comma separated, header naming the
/// columns x1, x2 and label (any order, no others). Labels are -1/+1 or 0/1
/// with 0 meaning -1. Coordinates are rescaled so the bounding box spans
/// [-6, 6] on each axis.
inline Dataset parse_csv(std::string_view text) {
    if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);

    std::vector<std::pair<std::size_t, std::string_view>> lines;
    std::size_t line_no = 0;
    for (std::size_t start = 0; start <= text.size();) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) nl = text.size();
        ++line_no;
        std::string_view line = detail::trim(text.substr(start, nl - start));
        if (!line.empty()) lines.emplace_back(line_no, line);
        start = nl + 1;
    }
    if (lines.empty()) throw ParseError(0, "empty file: a header row is required");

    const auto header = detail::split_fields(lines.front().second);
    int col_x1 = -1, col_x2 = -1, col_label = -1;
    for (std::size_t i = 0; i < header.size(); ++i) {
        int* slot = header[i] == "x1" ? &col_x1 : header[i] == "x2" ? &col_x2 : header[i] == "label" ? &col_label : nullptr;
        if (!slot)
            throw ParseError(lines.front().first,
                             "unexpected column '" + std::string(header[i]) +
                                 "': only x1, x2 and label are supported (two input dimensions)");
        if (*slot >= 0) throw ParseError(lines.front().first, "duplicate column '" + std::string(header[i]) + "'");
        *slot = static_cast<int>(i);
    }
    for (auto [col, name] : {std::pair{col_x1, "x1"}, std::pair{col_x2, "x2"}, std::pair{col_label, "label"}})
        if (col < 0) throw ParseError(lines.front().first, std::string("missing column '") + name + "'");

    Dataset ds;
    ds.source = DataSource::uploaded;
    for (std::size_t k = 1; k < lines.size(); ++k) {
        const auto [row, line] = lines[k];
        const auto fields = detail::split_fields(line);
        if (fields.size() != header.size())
            throw ParseError(row, "expected " + std::to_string(header.size()) + " fields, found " +
                                      std::to_string(fields.size()));
        RawPoint p;
        const auto x1 = detail::parse_number(fields[static_cast<std::size_t>(col_x1)]);
        const auto x2 = detail::parse_number(fields[static_cast<std::size_t>(col_x2)]);
        if (!x1) throw ParseError(row, "x1 value '" + std::string(fields[static_cast<std::size_t>(col_x1)]) + "' is not a finite number");
        if (!x2) throw ParseError(row, "x2 value '" + std::string(fields[static_cast<std::size_t>(col_x2)]) + "' is not a finite number");
        const std::string_view lab = fields[static_cast<std::size_t>(col_label)];
        const auto y = detail::parse_number(lab);
        if (!y || (*y != 1.0 && *y != -1.0 && *y != 0.0))
            throw ParseError(row, "label '" + std::string(lab) + "' must be one of -1, +1, 0, 1");
        p.x1 = *x1;
        p.x2 = *x2;
        p.label = *y > 0.0 ? 1 : -1;
        ds.points.push_back(p);
    }
    if (ds.points.size() < kMinUploadRows)
        throw ParseError(0, "need at least " + std::to_string(kMinUploadRows) + " data rows, found " +
                                std::to_string(ds.points.size()));
    const bool has_pos = std::any_of(ds.points.begin(), ds.points.end(), [](const RawPoint& p) { return p.label > 0; });
    const bool has_neg = std::any_of(ds.points.begin(), ds.points.end(), [](const RawPoint& p) { return p.label < 0; });
    if (!has_pos || !has_neg) throw ParseError(0, "dataset contains a single class; both labels are required");

    detail::rescale_axis(ds.points, &RawPoint::x1);
    detail::rescale_axis(ds.points, &RawPoint::x2);
    return ds;
}

/// Canonical CSV: header "x1,x2,label", shortest round-trip numbers, +-1 labels.
inline std::string serialize_csv(const Dataset& ds) {
    std::string out = "x1,x2,label\n";
    char buf[64];
    for (const RawPoint& p : ds.points) {
        for (double v : {p.x1, p.x2}) {
            auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
            out.append(buf, end);
            out.push_back(',');
        }
        out += p.label > 0 ? "1\n" : "-1\n";
    }
    return out;
}

}  // namespace capmeter
