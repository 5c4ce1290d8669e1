#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "capmeter/error.hpp"
#include "capmeter/features.hpp"
#include "capmeter/network.hpp"
#include "capmeter/topology.hpp"

namespace capmeter {

// ---------------------------------------------------------------------------
// Memory Equivalent Capacity

/// Bookkeeping for one neuron layer of the capacity recurrence.
struct LayerCapacity {
    int layer = 0;
    /// Enabled weights whose source is an input feature.
    std::int64_t input_params = 0;
    /// Enabled weights from neurons plus one bias per neuron of the layer.
    std::int64_t neuron_params = 0;
    /// Bits that can reach the layer from earlier neurons (1 bit per
    /// distinct feeding neuron, and never more than its layer's capacity).
    std::int64_t incoming_bits = 0;
    /// Capacity contribution of the layer.
    std::int64_t bits = 0;
};

struct MecResult {
    std::int64_t bits = 0;
    std::vector<std::int64_t> per_layer;
    std::vector<LayerCapacity> layers;
};

/// Memory Equivalent Capacity of a topology, in bits.
///
/// Layers are the neuron layers 1..L, the output neuron being layer L.
/// Layer 1 stores all of its parameters: C1 = R1. A later layer can store
/// no more than the information handed to it by earlier neurons, so
///
///     C_l = min(R_l^neuron, B_l) + R_l^input
///
/// where B_l sums, over every earlier neuron layer k feeding l, the number of
/// distinct neurons of k with an enabled edge into l (each output carries at
/// most one bit), capped at C_k (a layer cannot emit more than it holds).
/// Parameters on edges from the continuous inputs are never capped.
/// Disabled edges count nowhere.
inline MecResult mec(const Topology& topo) {
    const int layers = topo.neuron_layers();
    // feeders[l][k] = distinct neurons of layer k with an enabled edge into l.
    std::vector<std::vector<std::set<int>>> feeders(
        static_cast<std::size_t>(layers + 1), std::vector<std::set<int>>(static_cast<std::size_t>(layers + 1)));
    std::vector<LayerCapacity> caps(static_cast<std::size_t>(layers + 1));
    for (int l = 1; l <= layers; ++l) {
        caps[static_cast<std::size_t>(l)].layer = l;
        caps[static_cast<std::size_t>(l)].neuron_params = topo.width(l);
    }
    for (const Edge& e : topo.edges()) {
        if (!e.enabled) continue;
        LayerCapacity& c = caps[static_cast<std::size_t>(e.target.layer)];
        if (e.source.is_input()) {
            ++c.input_params;
        } else {
            ++c.neuron_params;
            feeders[static_cast<std::size_t>(e.target.layer)][static_cast<std::size_t>(e.source.layer)]
                .insert(e.source.index);
        }
    }

    MecResult out;
    for (int l = 1; l <= layers; ++l) {
        LayerCapacity& c = caps[static_cast<std::size_t>(l)];
        if (l == 1) {
            c.bits = c.input_params + c.neuron_params;
        } else {
            for (int k = 1; k < l; ++k) {
                const auto n = static_cast<std::int64_t>(feeders[static_cast<std::size_t>(l)][static_cast<std::size_t>(k)].size());
                c.incoming_bits += std::min(n, caps[static_cast<std::size_t>(k)].bits);
            }
            c.bits = std::min(c.neuron_params, c.incoming_bits) + c.input_params;
        }
        out.bits += c.bits;
        out.per_layer.push_back(c.bits);
        out.layers.push_back(c);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Expected capacity demand

inline constexpr std::size_t kDemandSampleLimit = 100000;
inline constexpr std::uint64_t kDemandSampleSeed = 0x5eed;

struct DemandTrace {
    std::size_t dimension_d = 0;
    std::vector<double> row_sums;
    std::vector<int> sorted_labels;
    std::size_t transition_count_t = 0;
    /// True when computed on a subsample of kDemandSampleLimit rows.
    bool estimated = false;
};

struct DemandResult {
    std::int64_t demand_bits = 0;
    DemandTrace trace;
};

/// Capacity a dataset-plus-labelling is expected to need.
///
/// Rows are ordered by the sum of their feature values (equal sums: -1
/// labels first), every label change along that order needs one threshold
/// unit of d weights plus a bias, so demand = t * (d + 1). Views larger than
/// kDemandSampleLimit rows are subsampled uniformly with a fixed seed.
inline DemandResult capacity_demand(const FeatureView& view,
                                    std::uint64_t sample_seed = kDemandSampleSeed) {
    if (view.empty()) throw EmptyDatasetError("capacity demand of an empty dataset is undefined");

    std::vector<std::size_t> rows(view.rows());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    DemandResult res;
    if (rows.size() > kDemandSampleLimit) {
        std::mt19937_64 rng(sample_seed);
        std::vector<std::size_t> picked;
        picked.reserve(kDemandSampleLimit);
        std::sample(rows.begin(), rows.end(), std::back_inserter(picked), kDemandSampleLimit, rng);
        rows = std::move(picked);
        res.trace.estimated = true;
    }

    DemandTrace& tr = res.trace;
    tr.dimension_d = view.cols();
    tr.row_sums.reserve(rows.size());
    for (std::size_t r : rows) {
        double s = 0.0;
        for (double v : view.row(r)) s += v;
        tr.row_sums.push_back(s);
    }
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (tr.row_sums[a] != tr.row_sums[b]) return tr.row_sums[a] < tr.row_sums[b];
        return view.label(rows[a]) < view.label(rows[b]);
    });
    tr.sorted_labels.reserve(order.size());
    for (std::size_t i : order) tr.sorted_labels.push_back(view.label(rows[i]));
    for (std::size_t i = 1; i < tr.sorted_labels.size(); ++i)
        tr.transition_count_t += tr.sorted_labels[i] != tr.sorted_labels[i - 1];

    res.demand_bits = static_cast<std::int64_t>(tr.transition_count_t) *
                      static_cast<std::int64_t>(tr.dimension_d + 1);
    return res;
}

// ---------------------------------------------------------------------------
// Generalization, balance, bias

struct Generalization {
    double value = 0.0;

    /// Rounded to two decimals for display.
    double display() const { return std::round(value * 100.0) / 100.0; }
    /// G > 1: the learner compresses beyond memorisation.
    bool generalizes() const { return value > 1.0; }
};

/// G = correctly predicted instances / MEC. Throws UndefinedCapacityError
/// when the capacity is zero.
inline Generalization generalization_ratio(std::int64_t correct_count, std::int64_t mec_bits) {
    if (correct_count < 0) throw ValidationError("correct_count must be non-negative");
    if (mec_bits <= 0)
        throw UndefinedCapacityError("generalization ratio is undefined for a network with 0 bits of capacity");
    return {static_cast<double>(correct_count) / static_cast<double>(mec_bits)};
}

/// Fraction of +1 labels.
inline double class_balance(std::span<const int> labels) {
    if (labels.empty()) throw EmptyDatasetError("class balance of an empty label list is undefined");
    const auto pos = std::count(labels.begin(), labels.end(), 1);
    return static_cast<double>(pos) / static_cast<double>(labels.size());
}

inline constexpr double kDefaultBiasThreshold = 0.1;

struct BiasIndicator {
    bool flagged = false;
    double gap = 0.0;
    std::string detail;
};

/// Flags a per-class accuracy gap larger than `threshold`. The detail text
/// carries the gap and the class balance so imbalance can be weighed against it.
inline BiasIndicator bias_indicator(const EvalReport& report, double balance,
                                    double threshold = kDefaultBiasThreshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw ValidationError("bias threshold must be in (0, 1)");
    BiasIndicator b;
    b.gap = std::abs(report.acc_positive - report.acc_negative);
    b.flagged = b.gap > threshold;
    std::ostringstream os;
    os.precision(3);
    os << "accuracy +1: " << report.acc_positive << (report.acc_positive_undefined ? " (no samples)" : "")
       << ", -1: " << report.acc_negative << (report.acc_negative_undefined ? " (no samples)" : "")
       << "; gap " << b.gap << (b.flagged ? " exceeds " : " within ") << "threshold " << threshold
       << "; class balance " << balance << " positive";
    b.detail = os.str();
    return b;
}

struct MeasurementReport {
    std::int64_t mec_bits = 0;
    std::int64_t demand_bits = 0;
    bool demand_estimated = false;
    /// Empty when mec_bits is 0.
    std::optional<Generalization> generalization;
    double balance = 0.0;
    bool bias_flagged = false;
    std::string bias_detail;
    double acc_positive = 1.0;
    double acc_negative = 1.0;
};

/// Assembles every measurement. `evaluation` supplies the correct count for
/// G and the per-class accuracies; `demand_view` and `labels` are the data
/// the demand and the balance are measured on.
inline MeasurementReport measure(const Topology& topo, const EvalReport& evaluation,
                                 const FeatureView& demand_view, std::span<const int> labels,
                                 double bias_threshold = kDefaultBiasThreshold) {
    MeasurementReport m;
    m.mec_bits = mec(topo).bits;
    const DemandResult d = capacity_demand(demand_view);
    m.demand_bits = d.demand_bits;
    m.demand_estimated = d.trace.estimated;
    if (m.mec_bits > 0)
        m.generalization = generalization_ratio(static_cast<std::int64_t>(evaluation.correct_count), m.mec_bits);
    m.balance = class_balance(labels);
    const BiasIndicator b = bias_indicator(evaluation, m.balance, bias_threshold);
    m.bias_flagged = b.flagged;
    m.bias_detail = b.detail;
    m.acc_positive = evaluation.acc_positive;
    m.acc_negative = evaluation.acc_negative;
    return m;
}

}  // namespace capmeter
