#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "capmeter/error.hpp"
#include "capmeter/features.hpp"

namespace capmeter {

/// Half-width of the canonical input square [-6, 6]^2.
inline constexpr double kDomainHalfWidth = 6.0;

struct RawPoint {
    double x1 = 0.0;
    double x2 = 0.0;
    int label = 1;

    bool operator==(const RawPoint&) const = default;
};

enum class DataSource { circle, xor_quadrants, gauss, spiral, uploaded };

inline std::string_view data_source_name(DataSource s) {
    switch (s) {
        case DataSource::circle: return "circle";
        case DataSource::xor_quadrants: return "xor";
        case DataSource::gauss: return "gauss";
        case DataSource::spiral: return "spiral";
        case DataSource::uploaded: return "uploaded";
    }
    return "?";
}

inline DataSource data_source_from_name(std::string_view name) {
    for (DataSource s : {DataSource::circle, DataSource::xor_quadrants, DataSource::gauss,
                         DataSource::spiral, DataSource::uploaded})
        if (data_source_name(s) == name) return s;
    throw ValidationError("unknown dataset kind '" + std::string(name) + "'");
}

struct Dataset {
    std::vector<RawPoint> points;
    DataSource source = DataSource::circle;
    std::uint64_t seed = 0;
    double noise = 0.0;

    std::size_t size() const { return points.size(); }
    std::vector<int> labels() const {
        std::vector<int> out;
        out.reserve(points.size());
        for (const RawPoint& p : points) out.push_back(p.label);
        return out;
    }

    bool operator==(const Dataset&) const = default;
};

namespace detail {

inline double clamp_domain(double v) { return std::clamp(v, -kDomainHalfWidth, kDomainHalfWidth); }

}  // namespace detail

/// Playground-style synthetic data, a pure function of its arguments.
///
/// circle: n/2 points at radius < 2.5 labelled +1, the rest in the annulus
/// [3.5, 5] labelled -1. xor: points cycle through the four quadrants, at
/// least 0.3 from each axis, labelled sign(x1*x2). gauss: two blobs around
/// (2,2) (+1) and (-2,-2) (-1). spiral: two interleaved arms. Noise jitters
/// coordinates by a zero-mean uniform offset scaled by `noise`; labels are
/// those of the generating construction.
inline Dataset generate(DataSource kind, std::size_t n, double noise, std::uint64_t seed) {
    if (kind == DataSource::uploaded) throw ValidationError("'uploaded' is not a generator kind");
    if (n < 4) throw ValidationError("a generated dataset needs at least 4 points");
    if (!(noise >= 0.0 && noise <= 0.5)) throw ValidationError("noise must be in [0, 0.5]");

    Dataset ds;
    ds.source = kind;
    ds.seed = seed;
    ds.noise = noise;
    ds.points.reserve(n);
    std::mt19937_64 rng(seed);
    auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    const std::size_t positives = n / 2;

    switch (kind) {
        case DataSource::circle: {
            constexpr double radius = 5.0;
            for (std::size_t i = 0; i < n; ++i) {
                const bool inner = i < positives;
                const double r = inner ? uniform(0.0, radius * 0.5) : uniform(radius * 0.7, radius);
                const double angle = uniform(0.0, 2.0 * std::numbers::pi);
                const double jx = uniform(-radius, radius) * noise;
                const double jy = uniform(-radius, radius) * noise;
                ds.points.push_back({detail::clamp_domain(r * std::sin(angle) + jx),
                                     detail::clamp_domain(r * std::cos(angle) + jy), inner ? 1 : -1});
            }
            break;
        }
        case DataSource::xor_quadrants: {
            constexpr double padding = 0.3;
            constexpr double extent = 5.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double sx = (i % 4 == 0 || i % 4 == 3) ? 1.0 : -1.0;
                const double sy = (i % 4 < 2) ? 1.0 : -1.0;
                const double x = sx * uniform(padding, extent);
                const double y = sy * uniform(padding, extent);
                const double jx = uniform(-extent, extent) * noise;
                const double jy = uniform(-extent, extent) * noise;
                ds.points.push_back({detail::clamp_domain(x + jx), detail::clamp_domain(y + jy),
                                     x * y >= 0.0 ? 1 : -1});
            }
            break;
        }
        case DataSource::gauss: {
            const double variance = 0.5 + (4.0 - 0.5) * (noise / 0.5);
            std::normal_distribution<double> spread(0.0, std::sqrt(variance));
            for (std::size_t i = 0; i < n; ++i) {
                const bool pos = i < positives;
                const double c = pos ? 2.0 : -2.0;
                const double x = c + spread(rng);
                const double y = c + spread(rng);
                ds.points.push_back({detail::clamp_domain(x), detail::clamp_domain(y), pos ? 1 : -1});
            }
            break;
        }
        case DataSource::spiral: {
            const std::size_t per_arm[2] = {positives, n - positives};
            for (int arm = 0; arm < 2; ++arm) {
                const double delta = arm == 0 ? 0.0 : std::numbers::pi;
                const std::size_t m = per_arm[arm];
                for (std::size_t i = 0; i < m; ++i) {
                    const double frac = static_cast<double>(i) / static_cast<double>(m);
                    const double r = frac * 5.0;
                    const double t = 1.75 * frac * 2.0 * std::numbers::pi + delta;
                    const double jx = uniform(-1.0, 1.0) * noise;
                    const double jy = uniform(-1.0, 1.0) * noise;
                    ds.points.push_back({detail::clamp_domain(r * std::sin(t) + jx),
                                         detail::clamp_domain(r * std::cos(t) + jy), arm == 0 ? 1 : -1});
                }
            }
            break;
        }
        case DataSource::uploaded: break;
    }
    return ds;
}

/// Maps every point through the selected features, columns in canonical order.
inline FeatureView apply_features(const std::vector<RawPoint>& points, const FeatureSelection& sel) {
    if (sel.empty()) throw ValidationError("at least one input feature must be selected");
    const std::vector<Feature> cols = sel.list();
    std::vector<double> values;
    values.reserve(points.size() * cols.size());
    std::vector<int> labels;
    labels.reserve(points.size());
    for (const RawPoint& p : points) {
        for (Feature f : cols) values.push_back(feature_value(f, p.x1, p.x2));
        labels.push_back(p.label);
    }
    return FeatureView(cols.size(), std::move(values), std::move(labels));
}

inline FeatureView apply_features(const Dataset& ds, const FeatureSelection& sel) {
    return apply_features(ds.points, sel);
}

inline constexpr double kDefaultTrainFraction = 0.5;

/// Seeded shuffle, then the first floor(train_fraction * n) points train.
/// A 1e-9 slack absorbs representation error, so 0.7 of 10 yields 7.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction >= 0.1 && train_fraction <= 0.9))
        throw ValidationError("train_fraction must be in [0.1, 0.9]");
    const std::size_t n = ds.points.size();
    const auto n_train =
        static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n) + 1e-9));
    if (n_train == 0 || n_train >= n)
        throw ValidationError("split of " + std::to_string(n) + " points at fraction " +
                              std::to_string(train_fraction) + " leaves one side empty");
    std::vector<RawPoint> pts = ds.points;
    std::mt19937_64 rng(seed);
    std::shuffle(pts.begin(), pts.end(), rng);

    Dataset train = ds, test = ds;
    train.points.assign(pts.begin(), pts.begin() + static_cast<std::ptrdiff_t>(n_train));
    test.points.assign(pts.begin() + static_cast<std::ptrdiff_t>(n_train), pts.end());
    return {std::move(train), std::move(test)};
}

}  // namespace capmeter
