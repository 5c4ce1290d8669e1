#pragma once

#include <array>
#include <bitset>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "capmeter/error.hpp"

namespace capmeter {

/// The seven input transforms offered for a 2-D point. The enumerator order
/// is the canonical column order of a FeatureView.
enum class Feature : int { x1 = 0, x2, x1_squared, x2_squared, x1_times_x2, sin_x1, sin_x2 };

inline constexpr int kFeatureCount = 7;

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "x1", "x2", "x1^2", "x2^2", "x1*x2", "sin(x1)", "sin(x2)"};

inline std::string_view feature_name(Feature f) { return kFeatureNames[static_cast<int>(f)]; }

inline std::optional<Feature> feature_from_name(std::string_view name) {
    for (int i = 0; i < kFeatureCount; ++i)
        if (kFeatureNames[i] == name) return static_cast<Feature>(i);
    return std::nullopt;
}

inline double feature_value(Feature f, double x1, double x2) {
    switch (f) {
        case Feature::x1: return x1;
        case Feature::x2: return x2;
        case Feature::x1_squared: return x1 * x1;
        case Feature::x2_squared: return x2 * x2;
        case Feature::x1_times_x2: return x1 * x2;
        case Feature::sin_x1: return std::sin(x1);
        case Feature::sin_x2: return std::sin(x2);
    }
    return 0.0;
}

/// Set of enabled feature flags. May be empty as a value; Topology and
/// apply_features reject an empty selection.
class FeatureSelection {
public:
    FeatureSelection() = default;
    FeatureSelection(std::initializer_list<Feature> features) {
        for (Feature f : features) set(f);
    }

    static FeatureSelection all() {
        FeatureSelection s;
        s.bits_.set();
        return s;
    }

    FeatureSelection& set(Feature f, bool on = true) {
        bits_.set(static_cast<std::size_t>(f), on);
        return *this;
    }
    bool has(Feature f) const { return bits_.test(static_cast<std::size_t>(f)); }
    bool empty() const { return bits_.none(); }
    int count() const { return static_cast<int>(bits_.count()); }

    /// Selected features in canonical column order.
    std::vector<Feature> list() const {
        std::vector<Feature> out;
        for (int i = 0; i < kFeatureCount; ++i)
            if (bits_.test(static_cast<std::size_t>(i))) out.push_back(static_cast<Feature>(i));
        return out;
    }

    /// Column of `f` in a FeatureView built from this selection, if selected.
    std::optional<int> column_of(Feature f) const {
        if (!has(f)) return std::nullopt;
        int col = 0;
        for (int i = 0; i < static_cast<int>(f); ++i)
            if (bits_.test(static_cast<std::size_t>(i))) ++col;
        return col;
    }

    bool operator==(const FeatureSelection&) const = default;

private:
    std::bitset<kFeatureCount> bits_;
};

/// Row-major n x d feature matrix with one +-1 label per row.
class FeatureView {
public:
    FeatureView() = default;

    FeatureView(std::size_t cols, std::vector<double> values, std::vector<int> labels)
        : cols_(cols), values_(std::move(values)), labels_(std::move(labels)) {
        if (cols_ == 0) throw ValidationError("feature view needs at least one column");
        if (values_.size() != cols_ * labels_.size())
            throw ShapeError("feature matrix has " + std::to_string(values_.size()) +
                             " values, expected " + std::to_string(cols_ * labels_.size()));
        for (int y : labels_)
            if (y != 1 && y != -1) throw ValidationError("labels must be -1 or +1");
    }

    std::size_t rows() const { return labels_.size(); }
    std::size_t cols() const { return cols_; }
    bool empty() const { return labels_.empty(); }

    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(values_).subspan(i * cols_, cols_);
    }
    int label(std::size_t i) const { return labels_[i]; }
    std::span<const int> labels() const { return labels_; }
    std::span<const double> values() const { return values_; }

private:
    std::size_t cols_ = 0;
    std::vector<double> values_;
    std::vector<int> labels_;
};

}  // namespace capmeter
