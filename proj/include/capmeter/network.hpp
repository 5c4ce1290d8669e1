#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "capmeter/error.hpp"
#include "capmeter/features.hpp"
#include "capmeter/topology.hpp"

namespace capmeter {

inline constexpr double kInitialBias = 0.1;
inline constexpr double kInitWeightRange = 0.5;

/// Trainable parameters. Weights are aligned with the topology's enabled
/// edges in EdgeKey order; biases with Topology::neurons().
struct Params {
    std::vector<EdgeKey> edge_keys;
    std::vector<double> weights;
    std::vector<NodeId> neuron_ids;
    std::vector<double> biases;

    std::optional<double> weight(NodeId source, NodeId target) const {
        const EdgeKey key{source, target};
        auto it = std::lower_bound(edge_keys.begin(), edge_keys.end(), key);
        if (it == edge_keys.end() || *it != key) return std::nullopt;
        return weights[static_cast<std::size_t>(it - edge_keys.begin())];
    }
    double* weight_ptr(NodeId source, NodeId target) {
        const EdgeKey key{source, target};
        auto it = std::lower_bound(edge_keys.begin(), edge_keys.end(), key);
        if (it == edge_keys.end() || *it != key) return nullptr;
        return &weights[static_cast<std::size_t>(it - edge_keys.begin())];
    }
    std::optional<double> bias(NodeId neuron) const {
        auto it = std::lower_bound(neuron_ids.begin(), neuron_ids.end(), neuron);
        if (it == neuron_ids.end() || *it != neuron) return std::nullopt;
        return biases[static_cast<std::size_t>(it - neuron_ids.begin())];
    }
    double* bias_ptr(NodeId neuron) {
        auto it = std::lower_bound(neuron_ids.begin(), neuron_ids.end(), neuron);
        if (it == neuron_ids.end() || *it != neuron) return nullptr;
        return &biases[static_cast<std::size_t>(it - neuron_ids.begin())];
    }

    bool operator==(const Params&) const = default;
};

/// Keys a Params for `topo` must carry, with zeroed values.
inline Params params_layout(const Topology& topo) {
    Params p;
    for (const Edge& e : topo.edges())
        if (e.enabled) p.edge_keys.push_back(e.key());
    p.weights.assign(p.edge_keys.size(), 0.0);
    p.neuron_ids = topo.neurons();
    p.biases.assign(p.neuron_ids.size(), 0.0);
    return p;
}

/// Weights uniform in [-0.5, 0.5) drawn in EdgeKey order from a 64-bit
/// Mersenne Twister seeded with `seed`; every bias 0.1.
inline Params init_params(const Topology& topo, std::uint64_t seed) {
    Params p = params_layout(topo);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-kInitWeightRange, kInitWeightRange);
    for (double& w : p.weights) w = dist(rng);
    std::fill(p.biases.begin(), p.biases.end(), kInitialBias);
    return p;
}

enum class Regularization { none, l1, l2 };

inline std::string_view regularization_name(Regularization r) {
    switch (r) {
        case Regularization::none: return "none";
        case Regularization::l1: return "L1";
        case Regularization::l2: return "L2";
    }
    return "?";
}

inline Regularization regularization_from_name(std::string_view name) {
    if (name == "none") return Regularization::none;
    if (name == "L1" || name == "l1") return Regularization::l1;
    if (name == "L2" || name == "l2") return Regularization::l2;
    throw ValidationError("unknown regularization '" + std::string(name) + "'");
}

struct TrainingConfig {
    double learning_rate = 0.03;
    int batch_size = 10;
    Regularization regularization = Regularization::none;
    double regularization_rate = 0.0;
    std::uint64_t seed = 1;
    int epochs_per_tick = 10;

    /// Checks field ranges. A batch larger than the training set is allowed
    /// and then covers the whole set.
    void validate() const {
        if (!(learning_rate > 0.0 && learning_rate <= 10.0))
            throw ValidationError("learning_rate must be in (0, 10], got " +
                                  std::to_string(learning_rate));
        if (batch_size < 1) throw ValidationError("batch_size must be at least 1");
        if (!(regularization_rate >= 0.0) || !std::isfinite(regularization_rate))
            throw ValidationError("regularization_rate must be a finite value >= 0");
        if (epochs_per_tick < 1) throw ValidationError("epochs_per_tick must be at least 1");
    }

    bool operator==(const TrainingConfig&) const = default;
};

namespace detail {

inline double activate(Activation a, double z) {
    switch (a) {
        case Activation::tanh: return std::tanh(z);
        case Activation::relu: return z > 0.0 ? z : 0.0;
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-z));
        case Activation::linear: return z;
    }
    return z;
}

inline double activation_derivative(Activation a, double z, double out) {
    switch (a) {
        case Activation::tanh: return 1.0 - out * out;
        case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::sigmoid: return out * (1.0 - out);
        case Activation::linear: return 1.0;
    }
    return 1.0;
}

/// Flattened evaluation order. Slots 0..inputs-1 hold feature values, slot
/// inputs+u holds unit u's activation.
struct Plan {
    struct Incoming {
        std::size_t source_slot;
        std::size_t weight;
    };
    struct Unit {
        Activation activation;
        std::size_t bias;
        std::size_t in_begin;
        std::size_t in_end;
    };

    std::size_t inputs = 0;
    std::vector<Unit> units;
    std::vector<Incoming> incoming;

    std::size_t slots() const { return inputs + units.size(); }

    explicit Plan(const Topology& topo) {
        const FeatureSelection& sel = topo.features();
        inputs = static_cast<std::size_t>(sel.count());
        const std::vector<NodeId> neurons = topo.neurons();
        auto slot_of = [&](NodeId n) -> std::size_t {
            if (n.is_input()) return static_cast<std::size_t>(*sel.column_of(static_cast<Feature>(n.index)));
            auto it = std::lower_bound(neurons.begin(), neurons.end(), n);
            return inputs + static_cast<std::size_t>(it - neurons.begin());
        };
        // Edges are sorted by target, and targets in layer-major order, which
        // is exactly the unit order.
        std::size_t weight = 0;
        std::size_t e = 0;
        const auto& edges = topo.edges();
        for (std::size_t u = 0; u < neurons.size(); ++u) {
            Unit unit{neurons[u].layer == topo.output_layer() ? topo.output_activation()
                                                              : topo.activation(),
                      u, incoming.size(), 0};
            for (; e < edges.size() && edges[e].target == neurons[u]; ++e) {
                if (!edges[e].enabled) continue;
                incoming.push_back({slot_of(edges[e].source), weight++});
            }
            unit.in_end = incoming.size();
            units.push_back(unit);
        }
    }
};

}  // namespace detail

/// Topology, matching Params and the count of applied train steps. The
/// compiled plan is shared between copies and never mutated.
class NetworkState {
public:
    NetworkState(Topology topology, Params params, std::uint64_t step = 0)
        : topology_(std::move(topology)), params_(std::move(params)), step_(step) {
        const Params layout = params_layout(topology_);
        if (layout.edge_keys != params_.edge_keys || layout.neuron_ids != params_.neuron_ids ||
            params_.weights.size() != params_.edge_keys.size() ||
            params_.biases.size() != params_.neuron_ids.size())
            throw ValidationError("params do not match the topology's enabled edges and neurons");
        for (double v : params_.weights)
            if (!std::isfinite(v)) throw ValidationError("non-finite weight");
        for (double v : params_.biases)
            if (!std::isfinite(v)) throw ValidationError("non-finite bias");
        plan_ = std::make_shared<const detail::Plan>(topology_);
    }

    static NetworkState initialized(Topology topology, std::uint64_t seed) {
        Params p = init_params(topology, seed);
        return NetworkState(std::move(topology), std::move(p));
    }

    const Topology& topology() const { return topology_; }
    const Params& params() const { return params_; }
    std::uint64_t step() const { return step_; }
    const detail::Plan& plan() const { return *plan_; }

    /// Mutable access for tooling and tests; the key layout must not change.
    Params& mutable_params() { return params_; }
    void set_step(std::uint64_t step) { step_ = step; }

private:
    Topology topology_;
    Params params_;
    std::uint64_t step_ = 0;
    std::shared_ptr<const detail::Plan> plan_;
};

struct ForwardResult {
    double prediction = 0.0;
    /// Per-neuron outputs in Topology::neurons() order.
    std::vector<double> activations;
};

namespace detail {

inline void check_input(const Plan& plan, std::span<const double> x) {
    if (x.size() != plan.inputs)
        throw ShapeError("input has " + std::to_string(x.size()) + " features, network expects " +
                         std::to_string(plan.inputs));
}

/// Fills `pre` and `out` (size plan.slots()); returns the prediction.
inline double forward_into(const Plan& plan, const Params& params, std::span<const double> x,
                           std::vector<double>& pre, std::vector<double>& out) {
    std::copy(x.begin(), x.end(), out.begin());
    for (std::size_t u = 0; u < plan.units.size(); ++u) {
        const Plan::Unit& unit = plan.units[u];
        double sum = 0.0;
        for (std::size_t k = unit.in_begin; k < unit.in_end; ++k) {
            const Plan::Incoming& in = plan.incoming[k];
            sum += params.weights[in.weight] * out[in.source_slot];
        }
        sum += params.biases[unit.bias];
        pre[plan.inputs + u] = sum;
        out[plan.inputs + u] = activate(unit.activation, sum);
    }
    return out.back();
}

}  // namespace detail

/// Evaluates the network on one feature vector (selected features in
/// canonical order). Throws ShapeError on a dimension mismatch.
inline ForwardResult forward(const NetworkState& state, std::span<const double> x) {
    const detail::Plan& plan = state.plan();
    detail::check_input(plan, x);
    std::vector<double> pre(plan.slots()), out(plan.slots());
    ForwardResult r;
    r.prediction = detail::forward_into(plan, state.params(), x, pre, out);
    r.activations.assign(out.begin() + static_cast<std::ptrdiff_t>(plan.inputs), out.end());
    return r;
}

inline double sample_loss(double prediction, int label) {
    const double d = prediction - static_cast<double>(label);
    return 0.5 * d * d;
}

/// Mean-over-batch gradient of the squared-error loss; same layout as Params.
struct Gradient {
    std::vector<double> weights;
    std::vector<double> biases;
    double loss = 0.0;
};

/// Reverse-mode gradient of the mean batch loss over the rows in `rows`.
/// Only enabled edges exist in the plan, so masked edges get no gradient.
inline Gradient compute_gradient(const NetworkState& state, const FeatureView& data,
                                 std::span<const std::size_t> rows) {
    const detail::Plan& plan = state.plan();
    const Params& params = state.params();
    if (rows.empty()) throw ValidationError("training batch must not be empty");
    if (data.cols() != plan.inputs)
        throw ShapeError("data has " + std::to_string(data.cols()) + " features, network expects " +
                         std::to_string(plan.inputs));

    Gradient g;
    g.weights.assign(params.weights.size(), 0.0);
    g.biases.assign(params.biases.size(), 0.0);
    std::vector<double> pre(plan.slots()), out(plan.slots()), d_out(plan.slots());

    for (std::size_t r : rows) {
        const int y = data.label(r);
        const double prediction = detail::forward_into(plan, params, data.row(r), pre, out);
        g.loss += sample_loss(prediction, y);

        std::fill(d_out.begin(), d_out.end(), 0.0);
        d_out.back() = prediction - static_cast<double>(y);
        for (std::size_t u = plan.units.size(); u-- > 0;) {
            const detail::Plan::Unit& unit = plan.units[u];
            const std::size_t slot = plan.inputs + u;
            const double delta =
                d_out[slot] * detail::activation_derivative(unit.activation, pre[slot], out[slot]);
            g.biases[unit.bias] += delta;
            for (std::size_t k = unit.in_begin; k < unit.in_end; ++k) {
                const detail::Plan::Incoming& in = plan.incoming[k];
                g.weights[in.weight] += delta * out[in.source_slot];
                d_out[in.source_slot] += params.weights[in.weight] * delta;
            }
        }
    }

    const double n = static_cast<double>(rows.size());
    for (double& v : g.weights) v /= n;
    for (double& v : g.biases) v /= n;
    g.loss /= n;
    return g;
}

namespace detail {

inline double regularization_term(Regularization r, double rate, double w) {
    switch (r) {
        case Regularization::none: return 0.0;
        case Regularization::l1: return rate * static_cast<double>((w > 0.0) - (w < 0.0));
        case Regularization::l2: return rate * w;
    }
    return 0.0;
}

/// One SGD update applied to `state` in place. On divergence throws before
/// the state is modified.
inline double step_in_place(NetworkState& state, const FeatureView& data,
                            std::span<const std::size_t> rows, const TrainingConfig& config) {
    const Gradient g = compute_gradient(state, data, rows);
    const std::uint64_t next = state.step() + 1;
    if (!std::isfinite(g.loss))
        throw DivergenceError(next, "non-finite loss at step " + std::to_string(next));

    const Params& old = state.params();
    std::vector<double> weights(old.weights.size()), biases(old.biases.size());
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double w = old.weights[i];
        weights[i] = w - config.learning_rate *
                             (g.weights[i] + regularization_term(config.regularization,
                                                                 config.regularization_rate, w));
        if (!std::isfinite(weights[i]))
            throw DivergenceError(next, "non-finite weight at step " + std::to_string(next));
    }
    for (std::size_t i = 0; i < biases.size(); ++i) {
        biases[i] = old.biases[i] - config.learning_rate * g.biases[i];
        if (!std::isfinite(biases[i]))
            throw DivergenceError(next, "non-finite bias at step " + std::to_string(next));
    }
    Params& p = state.mutable_params();
    p.weights = std::move(weights);
    p.biases = std::move(biases);
    state.set_step(next);
    return g.loss;
}

}  // namespace detail

struct StepResult {
    NetworkState state;
    double batch_loss;
};

/// One gradient step on the rows `rows` of `data`. The batch loss is the mean
/// of 0.5 * (prediction - y)^2 over the batch, measured before the update.
inline StepResult train_step(const NetworkState& state, const FeatureView& data,
                             std::span<const std::size_t> rows, const TrainingConfig& config) {
    NetworkState next = state;
    const double loss = detail::step_in_place(next, data, rows, config);
    return {std::move(next), loss};
}

/// Whole view as one batch.
inline StepResult train_step(const NetworkState& state, const FeatureView& batch,
                             const TrainingConfig& config) {
    std::vector<std::size_t> rows(batch.rows());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    return train_step(state, batch, rows, config);
}

/// One pass over `data` in row order, in consecutive batches of
/// config.batch_size (the last one may be short). Returns the mean batch loss.
inline double train_epoch(NetworkState& state, const FeatureView& data, const TrainingConfig& config) {
    if (data.empty()) throw EmptyDatasetError("cannot train on an empty dataset");
    std::vector<std::size_t> rows(data.rows());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    const std::size_t batch = static_cast<std::size_t>(config.batch_size);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < rows.size(); begin += batch) {
        const std::size_t len = std::min(batch, rows.size() - begin);
        total += detail::step_in_place(state, data, std::span(rows).subspan(begin, len), config);
        ++batches;
    }
    return total / static_cast<double>(batches);
}

struct EvalReport {
    std::size_t total = 0;
    std::size_t correct_count = 0;
    std::size_t positives = 0;
    std::size_t negatives = 0;
    double accuracy = 0.0;
    double acc_positive = 1.0;
    double acc_negative = 1.0;
    /// Set when the class is absent; its accuracy is then reported as 1.0.
    bool acc_positive_undefined = false;
    bool acc_negative_undefined = false;
    double mean_loss = 0.0;
};

inline int predicted_class(double prediction) { return prediction >= 0.0 ? 1 : -1; }

inline EvalReport evaluate(const NetworkState& state, const FeatureView& data) {
    if (data.empty()) throw EmptyDatasetError("cannot evaluate on an empty dataset");
    const detail::Plan& plan = state.plan();
    if (data.cols() != plan.inputs)
        throw ShapeError("data has " + std::to_string(data.cols()) + " features, network expects " +
                         std::to_string(plan.inputs));
    std::vector<double> pre(plan.slots()), out(plan.slots());
    EvalReport rep;
    std::size_t correct_pos = 0, correct_neg = 0;
    double loss = 0.0;
    for (std::size_t r = 0; r < data.rows(); ++r) {
        const int y = data.label(r);
        const double p = detail::forward_into(plan, state.params(), data.row(r), pre, out);
        loss += sample_loss(p, y);
        const bool ok = predicted_class(p) == y;
        if (y > 0) {
            ++rep.positives;
            correct_pos += ok;
        } else {
            ++rep.negatives;
            correct_neg += ok;
        }
    }
    rep.total = data.rows();
    rep.correct_count = correct_pos + correct_neg;
    rep.accuracy = static_cast<double>(rep.correct_count) / static_cast<double>(rep.total);
    rep.acc_positive_undefined = rep.positives == 0;
    rep.acc_negative_undefined = rep.negatives == 0;
    if (rep.positives) rep.acc_positive = static_cast<double>(correct_pos) / static_cast<double>(rep.positives);
    if (rep.negatives) rep.acc_negative = static_cast<double>(correct_neg) / static_cast<double>(rep.negatives);
    rep.mean_loss = loss / static_cast<double>(rep.total);
    return rep;
}

/// Params for `next` after an edit of `prev`: entries present in both keep
/// their trained value, new entries take their value from init_params(next, seed).
inline Params carry_over_params(const Topology& next, const Params& prev, std::uint64_t seed) {
    Params p = init_params(next, seed);
    for (std::size_t i = 0; i < p.edge_keys.size(); ++i)
        if (auto w = prev.weight(p.edge_keys[i].source, p.edge_keys[i].target)) p.weights[i] = *w;
    for (std::size_t i = 0; i < p.neuron_ids.size(); ++i)
        if (auto b = prev.bias(p.neuron_ids[i])) p.biases[i] = *b;
    return p;
}

}  // namespace capmeter
