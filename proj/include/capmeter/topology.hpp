#pragma once

#include <algorithm>
#include <compare>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "capmeter/error.hpp"
#include "capmeter/features.hpp"

#ifndef CAPMETER_MAX_HIDDEN_LAYERS
#define CAPMETER_MAX_HIDDEN_LAYERS 6
#endif
#ifndef CAPMETER_MAX_LAYER_WIDTH
#define CAPMETER_MAX_LAYER_WIDTH 8
#endif

namespace capmeter {

inline constexpr int kMaxHiddenLayers = CAPMETER_MAX_HIDDEN_LAYERS;
inline constexpr int kMaxLayerWidth = CAPMETER_MAX_LAYER_WIDTH;

enum class Activation { tanh, relu, sigmoid, linear };

inline std::string_view activation_name(Activation a) {
    switch (a) {
        case Activation::tanh: return "tanh";
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
        case Activation::linear: return "linear";
    }
    return "?";
}

inline Activation activation_from_name(std::string_view name) {
    for (Activation a : {Activation::tanh, Activation::relu, Activation::sigmoid, Activation::linear})
        if (activation_name(a) == name) return a;
    throw ValidationError("unknown activation '" + std::string(name) + "'");
}

/// A node of the layered graph. Layer 0 holds the input features and
/// `index` is then the Feature ordinal; layers 1..H are hidden, layer H+1 is
/// the single output neuron.
struct NodeId {
    int layer = 0;
    int index = 0;

    static NodeId input(Feature f) { return {0, static_cast<int>(f)}; }
    static NodeId neuron(int layer, int index) { return {layer, index}; }

    bool is_input() const { return layer == 0; }
    auto operator<=>(const NodeId&) const = default;
};

inline std::string to_string(NodeId n) {
    if (n.is_input()) return std::string(feature_name(static_cast<Feature>(n.index)));
    return "n(" + std::to_string(n.layer) + "," + std::to_string(n.index) + ")";
}

struct EdgeKey {
    NodeId source;
    NodeId target;

    // Ordered by target first so that a neuron's incoming edges are contiguous.
    auto operator<=>(const EdgeKey& o) const {
        if (auto c = target <=> o.target; c != 0) return c;
        return source <=> o.source;
    }
    bool operator==(const EdgeKey&) const = default;
};

struct Edge {
    NodeId source;
    NodeId target;
    bool enabled = true;

    EdgeKey key() const { return {source, target}; }
    bool operator==(const Edge&) const = default;
};

/// Layered DAG of neurons with per-edge enable flags and skip edges.
///
/// Every instance is valid: construction and every edit validate, so code
/// holding a Topology never re-checks structure. Edges are kept sorted by
/// EdgeKey.
class Topology {
public:
    Topology(FeatureSelection features, std::vector<int> hidden_layers, Activation activation,
             Activation output_activation, std::vector<Edge> edges)
        : features_(features),
          hidden_(std::move(hidden_layers)),
          activation_(activation),
          output_activation_(output_activation),
          edges_(std::move(edges)) {
        std::sort(edges_.begin(), edges_.end(),
                  [](const Edge& a, const Edge& b) { return a.key() < b.key(); });
        validate();
    }

    /// Fully connected adjacent layers, every edge enabled.
    static Topology dense(FeatureSelection features, std::vector<int> hidden_layers,
                          Activation activation = Activation::tanh,
                          Activation output_activation = Activation::tanh) {
        check_shape(features, hidden_layers);
        std::vector<Edge> edges;
        const int layers = static_cast<int>(hidden_layers.size()) + 1;
        for (int l = 1; l <= layers; ++l) {
            const int width = l <= static_cast<int>(hidden_layers.size()) ? hidden_layers[l - 1] : 1;
            for (int j = 0; j < width; ++j) {
                for (NodeId src : nodes_of_layer(features, hidden_layers, l - 1))
                    edges.push_back({src, NodeId::neuron(l, j), true});
            }
        }
        return Topology(features, std::move(hidden_layers), activation, output_activation,
                        std::move(edges));
    }

    /// The playground's starting network: x1, x2 -> 4 -> 2 -> output, tanh.
    static Topology default_network() {
        return dense({Feature::x1, Feature::x2}, {4, 2});
    }

    const FeatureSelection& features() const { return features_; }
    const std::vector<int>& hidden_layers() const { return hidden_; }
    Activation activation() const { return activation_; }
    Activation output_activation() const { return output_activation_; }
    const std::vector<Edge>& edges() const { return edges_; }

    /// Number of neuron layers, output included.
    int neuron_layers() const { return static_cast<int>(hidden_.size()) + 1; }
    int output_layer() const { return neuron_layers(); }

    /// Width of layer `l`: selected feature count for 0, 1 for the output.
    int width(int l) const {
        if (l == 0) return features_.count();
        if (l == output_layer()) return 1;
        return hidden_.at(static_cast<std::size_t>(l - 1));
    }

    std::vector<NodeId> layer_nodes(int l) const { return nodes_of_layer(features_, hidden_, l); }

    /// All neurons in layer-major order (the canonical bias order).
    std::vector<NodeId> neurons() const {
        std::vector<NodeId> out;
        for (int l = 1; l <= neuron_layers(); ++l)
            for (int j = 0; j < width(l); ++j) out.push_back(NodeId::neuron(l, j));
        return out;
    }

    bool has_node(NodeId n) const {
        if (n.layer == 0) {
            return n.index >= 0 && n.index < kFeatureCount &&
                   features_.has(static_cast<Feature>(n.index));
        }
        return n.layer >= 1 && n.layer <= neuron_layers() && n.index >= 0 && n.index < width(n.layer);
    }

    const Edge* find_edge(NodeId source, NodeId target) const {
        const EdgeKey key{source, target};
        auto it = std::lower_bound(edges_.begin(), edges_.end(), key,
                                   [](const Edge& e, const EdgeKey& k) { return e.key() < k; });
        if (it == edges_.end() || it->key() != key) return nullptr;
        return &*it;
    }

    std::size_t enabled_edge_count() const {
        return static_cast<std::size_t>(
            std::count_if(edges_.begin(), edges_.end(), [](const Edge& e) { return e.enabled; }));
    }

    /// Trainable parameter count: enabled-edge weights plus one bias per neuron.
    std::size_t parameter_count() const { return enabled_edge_count() + neurons().size(); }

    bool operator==(const Topology&) const = default;

private:
    static void check_shape(const FeatureSelection& features, const std::vector<int>& hidden) {
        if (features.empty()) throw ValidationError("at least one input feature must be selected");
        if (static_cast<int>(hidden.size()) > kMaxHiddenLayers)
            throw ValidationError("at most " + std::to_string(kMaxHiddenLayers) +
                                  " hidden layers are supported");
        for (std::size_t i = 0; i < hidden.size(); ++i) {
            if (hidden[i] < 1 || hidden[i] > kMaxLayerWidth)
                throw ValidationError("hidden layer " + std::to_string(i + 1) + " width " +
                                      std::to_string(hidden[i]) + " outside [1, " +
                                      std::to_string(kMaxLayerWidth) + "]");
        }
    }

    static std::vector<NodeId> nodes_of_layer(const FeatureSelection& features,
                                              const std::vector<int>& hidden, int l) {
        std::vector<NodeId> out;
        if (l == 0) {
            for (Feature f : features.list()) out.push_back(NodeId::input(f));
        } else if (l == static_cast<int>(hidden.size()) + 1) {
            out.push_back(NodeId::neuron(l, 0));
        } else {
            for (int j = 0; j < hidden.at(static_cast<std::size_t>(l - 1)); ++j)
                out.push_back(NodeId::neuron(l, j));
        }
        return out;
    }

    void validate() const {
        check_shape(features_, hidden_);
        for (std::size_t i = 0; i < edges_.size(); ++i) {
            const Edge& e = edges_[i];
            if (!has_node(e.source))
                throw ValidationError("edge source " + to_string(e.source) + " does not exist");
            if (e.target.layer == 0 || !has_node(e.target))
                throw ValidationError("edge target " + to_string(e.target) + " does not exist");
            if (e.target.layer <= e.source.layer)
                throw ValidationError("edge " + to_string(e.source) + " -> " + to_string(e.target) +
                                      " would create a cycle: target must be in a later layer");
            if (i > 0 && edges_[i - 1].key() == e.key())
                throw ValidationError("duplicate edge " + to_string(e.source) + " -> " +
                                      to_string(e.target));
        }
    }

    FeatureSelection features_;
    std::vector<int> hidden_;
    Activation activation_;
    Activation output_activation_;
    std::vector<Edge> edges_;
};

// ---------------------------------------------------------------------------
// Edits

namespace edit {

/// Insert a hidden layer so that it becomes layer `position` (1-based,
/// default: just before the output). Connections between the two layers it
/// separates are replaced by dense connections through the new layer.
struct AddLayer {
    std::optional<int> position;
    int width = 1;
    bool operator==(const AddLayer&) const = default;
};
struct RemoveLayer {
    int layer = 1;
    bool operator==(const RemoveLayer&) const = default;
};
struct SetWidth {
    int layer = 1;
    int width = 1;
    bool operator==(const SetWidth&) const = default;
};
struct ToggleEdge {
    NodeId source;
    NodeId target;
    bool operator==(const ToggleEdge&) const = default;
};
/// Adds an enabled edge to any strictly later layer (a residual/direct
/// connection when it spans more than one layer).
struct AddSkipEdge {
    NodeId source;
    NodeId target;
    bool operator==(const AddSkipEdge&) const = default;
};
struct RemoveEdge {
    NodeId source;
    NodeId target;
    bool operator==(const RemoveEdge&) const = default;
};
struct SetActivation {
    Activation activation = Activation::tanh;
    bool operator==(const SetActivation&) const = default;
};
struct SetFeatures {
    FeatureSelection features;
    bool operator==(const SetFeatures&) const = default;
};

}  // namespace edit

using TopologyEdit = std::variant<edit::AddLayer, edit::RemoveLayer, edit::SetWidth, edit::ToggleEdge,
                                  edit::AddSkipEdge, edit::RemoveEdge, edit::SetActivation,
                                  edit::SetFeatures>;

namespace detail {

inline NodeId shift_layer(NodeId n, int from, int delta) {
    if (n.layer >= from) n.layer += delta;
    return n;
}

inline void add_dense(std::vector<Edge>& edges, const std::vector<NodeId>& sources,
                      const std::vector<NodeId>& targets) {
    std::set<EdgeKey> present;
    for (const Edge& e : edges) present.insert(e.key());
    for (NodeId t : targets)
        for (NodeId s : sources)
            if (!present.contains({s, t})) edges.push_back({s, t, true});
}

inline std::vector<NodeId> layer_nodes_for(const FeatureSelection& f, const std::vector<int>& hidden,
                                           int l) {
    std::vector<NodeId> out;
    if (l == 0) {
        for (Feature x : f.list()) out.push_back(NodeId::input(x));
    } else {
        const int width = l == static_cast<int>(hidden.size()) + 1 ? 1 : hidden.at(l - 1);
        for (int j = 0; j < width; ++j) out.push_back(NodeId::neuron(l, j));
    }
    return out;
}

inline std::vector<Edge>::iterator find_mut(std::vector<Edge>& edges, NodeId s, NodeId t) {
    return std::find_if(edges.begin(), edges.end(),
                        [&](const Edge& e) { return e.source == s && e.target == t; });
}

}  // namespace detail

/// Returns the edited topology; the input is untouched. Throws
/// ValidationError for edits that reference missing nodes or would produce a
/// cycle, a duplicate edge, an empty feature set or an out-of-range shape.
inline Topology apply_edit(const Topology& topo, const TopologyEdit& change) {
    FeatureSelection features = topo.features();
    std::vector<int> hidden = topo.hidden_layers();
    Activation activation = topo.activation();
    std::vector<Edge> edges = topo.edges();
    const int hidden_count = static_cast<int>(hidden.size());

    auto require_hidden_layer = [&](int l) {
        if (l < 1 || l > hidden_count)
            throw ValidationError("layer " + std::to_string(l) + " is not a hidden layer (1.." +
                                  std::to_string(hidden_count) + ")");
    };
    auto require_edge = [&](NodeId s, NodeId t) {
        if (!topo.find_edge(s, t))
            throw ValidationError("no edge " + to_string(s) + " -> " + to_string(t));
    };

    std::visit(
        [&](const auto& e) {
            using E = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<E, edit::AddLayer>) {
                if (hidden_count >= kMaxHiddenLayers)
                    throw ValidationError("at most " + std::to_string(kMaxHiddenLayers) +
                                          " hidden layers are supported");
                const int p = e.position.value_or(hidden_count + 1);
                if (p < 1 || p > hidden_count + 1)
                    throw ValidationError("layer position " + std::to_string(p) + " out of range");
                if (e.width < 1 || e.width > kMaxLayerWidth)
                    throw ValidationError("layer width " + std::to_string(e.width) + " out of range");
                for (Edge& x : edges) {
                    x.source = detail::shift_layer(x.source, p, 1);
                    x.target = detail::shift_layer(x.target, p, 1);
                }
                std::erase_if(edges, [&](const Edge& x) {
                    return x.source.layer == p - 1 && x.target.layer == p + 1;
                });
                hidden.insert(hidden.begin() + (p - 1), e.width);
                detail::add_dense(edges, detail::layer_nodes_for(features, hidden, p - 1),
                                  detail::layer_nodes_for(features, hidden, p));
                detail::add_dense(edges, detail::layer_nodes_for(features, hidden, p),
                                  detail::layer_nodes_for(features, hidden, p + 1));
            } else if constexpr (std::is_same_v<E, edit::RemoveLayer>) {
                require_hidden_layer(e.layer);
                const int p = e.layer;
                std::erase_if(edges, [&](const Edge& x) {
                    return x.source.layer == p || x.target.layer == p;
                });
                for (Edge& x : edges) {
                    x.source = detail::shift_layer(x.source, p + 1, -1);
                    x.target = detail::shift_layer(x.target, p + 1, -1);
                }
                hidden.erase(hidden.begin() + (p - 1));
                detail::add_dense(edges, detail::layer_nodes_for(features, hidden, p - 1),
                                  detail::layer_nodes_for(features, hidden, p));
            } else if constexpr (std::is_same_v<E, edit::SetWidth>) {
                require_hidden_layer(e.layer);
                if (e.width < 1 || e.width > kMaxLayerWidth)
                    throw ValidationError("layer width " + std::to_string(e.width) + " outside [1, " +
                                          std::to_string(kMaxLayerWidth) + "]");
                const int l = e.layer;
                const int old_width = hidden[l - 1];
                std::erase_if(edges, [&](const Edge& x) {
                    return (x.source.layer == l && x.source.index >= e.width) ||
                           (x.target.layer == l && x.target.index >= e.width);
                });
                hidden[l - 1] = e.width;
                std::vector<NodeId> added;
                for (int j = old_width; j < e.width; ++j) added.push_back(NodeId::neuron(l, j));
                detail::add_dense(edges, detail::layer_nodes_for(features, hidden, l - 1), added);
                detail::add_dense(edges, added, detail::layer_nodes_for(features, hidden, l + 1));
            } else if constexpr (std::is_same_v<E, edit::ToggleEdge>) {
                require_edge(e.source, e.target);
                auto it = detail::find_mut(edges, e.source, e.target);
                it->enabled = !it->enabled;
            } else if constexpr (std::is_same_v<E, edit::AddSkipEdge>) {
                if (!topo.has_node(e.source))
                    throw ValidationError("edge source " + to_string(e.source) + " does not exist");
                if (e.target.layer == 0 || !topo.has_node(e.target))
                    throw ValidationError("edge target " + to_string(e.target) + " does not exist");
                if (e.target.layer <= e.source.layer)
                    throw ValidationError("edge " + to_string(e.source) + " -> " + to_string(e.target) +
                                          " would create a cycle: target must be in a later layer");
                if (topo.find_edge(e.source, e.target))
                    throw ValidationError("duplicate edge " + to_string(e.source) + " -> " +
                                          to_string(e.target));
                edges.push_back({e.source, e.target, true});
            } else if constexpr (std::is_same_v<E, edit::RemoveEdge>) {
                require_edge(e.source, e.target);
                edges.erase(detail::find_mut(edges, e.source, e.target));
            } else if constexpr (std::is_same_v<E, edit::SetActivation>) {
                activation = e.activation;
            } else if constexpr (std::is_same_v<E, edit::SetFeatures>) {
                if (e.features.empty())
                    throw ValidationError("at least one input feature must be selected");
                std::erase_if(edges, [&](const Edge& x) {
                    return x.source.is_input() &&
                           !e.features.has(static_cast<Feature>(x.source.index));
                });
                std::vector<NodeId> added;
                for (Feature f : e.features.list())
                    if (!features.has(f)) added.push_back(NodeId::input(f));
                features = e.features;
                detail::add_dense(edges, added, detail::layer_nodes_for(features, hidden, 1));
            }
        },
        change);

    return Topology(features, std::move(hidden), activation, topo.output_activation(),
                    std::move(edges));
}

}  // namespace capmeter
