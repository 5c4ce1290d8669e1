#pragma once

// JSON wire format shared by the HTTP service, experiment records and the CLI.
// Readers accept partial objects where a default exists and report missing or
// malformed fields with their dotted path.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "capmeter/dataset.hpp"
#include "capmeter/error.hpp"
#include "capmeter/features.hpp"
#include "capmeter/measurements.hpp"
#include "capmeter/network.hpp"
#include "capmeter/topology.hpp"

namespace capmeter {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

namespace jsonio {

inline const json& require(const json& j, const char* key, const std::string& path) {
    if (!j.is_object()) throw ValidationError(path + " must be an object");
    auto it = j.find(key);
    if (it == j.end()) throw ValidationError("missing field '" + path + "." + key + "'");
    return *it;
}

template <typename T>
T get_as(const json& v, const std::string& path) {
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw ValidationError("field '" + path + "' has the wrong type");
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& path) {
    if (!j.is_object()) throw ValidationError(path + " must be an object");
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return fallback;
    return get_as<T>(*it, path + "." + key);
}

inline void check_schema_version(const json& j) {
    if (!j.is_object()) throw ValidationError("request body must be a JSON object");
    auto it = j.find("schema_version");
    if (it == j.end()) throw SchemaError("missing mandatory field 'schema_version'");
    if (!it->is_number_integer() || it->get<long long>() != kSchemaVersion)
        throw SchemaError("incompatible schema_version " + it->dump() + ", this build reads version " +
                          std::to_string(kSchemaVersion));
}

// --- nodes, features -------------------------------------------------------

inline json node_to_json(NodeId n) {
    if (n.is_input()) return {{"input", std::string(feature_name(static_cast<Feature>(n.index)))}};
    return {{"layer", n.layer}, {"index", n.index}};
}

inline NodeId node_from_json(const json& j, const std::string& path) {
    if (!j.is_object()) throw ValidationError(path + " must be an object");
    if (auto it = j.find("input"); it != j.end()) {
        const auto name = get_as<std::string>(*it, path + ".input");
        auto f = feature_from_name(name);
        if (!f) throw ValidationError("unknown feature '" + name + "' in " + path);
        return NodeId::input(*f);
    }
    const int layer = get_as<int>(require(j, "layer", path), path + ".layer");
    const int index = get_as<int>(require(j, "index", path), path + ".index");
    if (layer < 1) throw ValidationError(path + ".layer must be >= 1 (inputs use {\"input\": name})");
    return NodeId::neuron(layer, index);
}

inline json features_to_json(const FeatureSelection& sel) {
    json arr = json::array();
    for (Feature f : sel.list()) arr.push_back(std::string(feature_name(f)));
    return arr;
}

inline FeatureSelection features_from_json(const json& j, const std::string& path) {
    if (!j.is_array()) throw ValidationError(path + " must be an array of feature names");
    FeatureSelection sel;
    for (const json& v : j) {
        const auto name = get_as<std::string>(v, path + "[]");
        auto f = feature_from_name(name);
        if (!f) throw ValidationError("unknown feature '" + name + "' in " + path);
        sel.set(*f);
    }
    if (sel.empty()) throw ValidationError(path + ": at least one input feature must be selected");
    return sel;
}

// --- topology ----------------------------------------------------------------

inline json topology_to_json(const Topology& t) {
    json edges = json::array();
    for (const Edge& e : t.edges())
        edges.push_back({{"source", node_to_json(e.source)}, {"target", node_to_json(e.target)}, {"enabled", e.enabled}});
    return {{"features", features_to_json(t.features())},
            {"hidden_layers", t.hidden_layers()},
            {"activation", std::string(activation_name(t.activation()))},
            {"output_activation", std::string(activation_name(t.output_activation()))},
            {"edges", edges}};
}

/// Missing fields fall back to the default network; without "edges" the
/// layers are densely connected.
inline Topology topology_from_json(const json& j, const std::string& path = "topology") {
    if (!j.is_object()) throw ValidationError(path + " must be an object");
    const FeatureSelection features =
        j.contains("features") ? features_from_json(j.at("features"), path + ".features")
                               : FeatureSelection{Feature::x1, Feature::x2};
    const auto hidden = get_or<std::vector<int>>(j, "hidden_layers", {4, 2}, path);
    const Activation act = activation_from_name(get_or<std::string>(j, "activation", "tanh", path));
    const Activation out = activation_from_name(get_or<std::string>(j, "output_activation", "tanh", path));
    if (!j.contains("edges")) return Topology::dense(features, hidden, act, out);
    const json& arr = j.at("edges");
    if (!arr.is_array()) throw ValidationError(path + ".edges must be an array");
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string p = path + ".edges[" + std::to_string(i) + "]";
        edges.push_back({node_from_json(require(arr[i], "source", p), p + ".source"),
                         node_from_json(require(arr[i], "target", p), p + ".target"),
                         get_or<bool>(arr[i], "enabled", true, p)});
    }
    return Topology(features, hidden, act, out, std::move(edges));
}

inline TopologyEdit edit_from_json(const json& j, const std::string& path = "edit") {
    const auto op = get_as<std::string>(require(j, "op", path), path + ".op");
    auto src = [&] { return node_from_json(require(j, "source", path), path + ".source"); };
    auto dst = [&] { return node_from_json(require(j, "target", path), path + ".target"); };
    if (op == "add_layer") {
        edit::AddLayer e;
        if (j.contains("position")) e.position = get_as<int>(j.at("position"), path + ".position");
        e.width = get_or<int>(j, "width", 1, path);
        return e;
    }
    if (op == "remove_layer") return edit::RemoveLayer{get_as<int>(require(j, "layer", path), path + ".layer")};
    if (op == "set_width")
        return edit::SetWidth{get_as<int>(require(j, "layer", path), path + ".layer"),
                              get_as<int>(require(j, "width", path), path + ".width")};
    if (op == "toggle_edge") return edit::ToggleEdge{src(), dst()};
    if (op == "add_skip_edge") return edit::AddSkipEdge{src(), dst()};
    if (op == "remove_edge") return edit::RemoveEdge{src(), dst()};
    if (op == "set_activation")
        return edit::SetActivation{activation_from_name(get_as<std::string>(require(j, "activation", path), path + ".activation"))};
    if (op == "set_features") return edit::SetFeatures{features_from_json(require(j, "features", path), path + ".features")};
    throw ValidationError("unknown edit op '" + op + "'");
}

inline json edit_to_json(const TopologyEdit& change) {
    return std::visit(
        [](const auto& e) -> json {
            using E = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<E, edit::AddLayer>) {
                json j = {{"op", "add_layer"}, {"width", e.width}};
                if (e.position) j["position"] = *e.position;
                return j;
            } else if constexpr (std::is_same_v<E, edit::RemoveLayer>) {
                return {{"op", "remove_layer"}, {"layer", e.layer}};
            } else if constexpr (std::is_same_v<E, edit::SetWidth>) {
                return {{"op", "set_width"}, {"layer", e.layer}, {"width", e.width}};
            } else if constexpr (std::is_same_v<E, edit::ToggleEdge>) {
                return {{"op", "toggle_edge"}, {"source", node_to_json(e.source)}, {"target", node_to_json(e.target)}};
            } else if constexpr (std::is_same_v<E, edit::AddSkipEdge>) {
                return {{"op", "add_skip_edge"}, {"source", node_to_json(e.source)}, {"target", node_to_json(e.target)}};
            } else if constexpr (std::is_same_v<E, edit::RemoveEdge>) {
                return {{"op", "remove_edge"}, {"source", node_to_json(e.source)}, {"target", node_to_json(e.target)}};
            } else if constexpr (std::is_same_v<E, edit::SetActivation>) {
                return {{"op", "set_activation"}, {"activation", std::string(activation_name(e.activation))}};
            } else {
                return {{"op", "set_features"}, {"features", features_to_json(e.features)}};
            }
        },
        change);
}

// --- config, params ----------------------------------------------------------

inline json config_to_json(const TrainingConfig& c) {
    return {{"learning_rate", c.learning_rate},
            {"batch_size", c.batch_size},
            {"regularization", std::string(regularization_name(c.regularization))},
            {"regularization_rate", c.regularization_rate},
            {"seed", c.seed},
            {"epochs_per_tick", c.epochs_per_tick}};
}

inline TrainingConfig config_from_json(const json& j, TrainingConfig base = {},
                                       const std::string& path = "config") {
    TrainingConfig c = base;
    c.learning_rate = get_or<double>(j, "learning_rate", c.learning_rate, path);
    c.batch_size = get_or<int>(j, "batch_size", c.batch_size, path);
    c.regularization = regularization_from_name(
        get_or<std::string>(j, "regularization", std::string(regularization_name(c.regularization)), path));
    c.regularization_rate = get_or<double>(j, "regularization_rate", c.regularization_rate, path);
    c.seed = get_or<std::uint64_t>(j, "seed", c.seed, path);
    c.epochs_per_tick = get_or<int>(j, "epochs_per_tick", c.epochs_per_tick, path);
    c.validate();
    return c;
}

inline json params_to_json(const Params& p) {
    json weights = json::array(), biases = json::array();
    for (std::size_t i = 0; i < p.edge_keys.size(); ++i)
        weights.push_back({{"source", node_to_json(p.edge_keys[i].source)},
                           {"target", node_to_json(p.edge_keys[i].target)},
                           {"value", p.weights[i]}});
    for (std::size_t i = 0; i < p.neuron_ids.size(); ++i)
        biases.push_back({{"neuron", node_to_json(p.neuron_ids[i])}, {"value", p.biases[i]}});
    return {{"weights", weights}, {"biases", biases}};
}

/// Values for exactly the keys of `topo`; anything missing or extra is an error.
inline Params params_from_json(const json& j, const Topology& topo, const std::string& path = "params") {
    Params p = params_layout(topo);
    const json& weights = require(j, "weights", path);
    const json& biases = require(j, "biases", path);
    if (!weights.is_array() || weights.size() != p.weights.size())
        throw ValidationError(path + ".weights must list one value per enabled edge (" +
                              std::to_string(p.weights.size()) + ")");
    if (!biases.is_array() || biases.size() != p.biases.size())
        throw ValidationError(path + ".biases must list one value per neuron (" + std::to_string(p.biases.size()) + ")");
    std::vector<bool> seen_w(p.weights.size()), seen_b(p.biases.size());
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const std::string wp = path + ".weights[" + std::to_string(i) + "]";
        const NodeId s = node_from_json(require(weights[i], "source", wp), wp + ".source");
        const NodeId t = node_from_json(require(weights[i], "target", wp), wp + ".target");
        double* w = p.weight_ptr(s, t);
        if (!w) throw ValidationError(wp + " is not an enabled edge of the topology");
        *w = get_as<double>(require(weights[i], "value", wp), wp + ".value");
        seen_w[static_cast<std::size_t>(w - p.weights.data())] = true;
    }
    for (std::size_t i = 0; i < biases.size(); ++i) {
        const std::string bp = path + ".biases[" + std::to_string(i) + "]";
        double* b = p.bias_ptr(node_from_json(require(biases[i], "neuron", bp), bp + ".neuron"));
        if (!b) throw ValidationError(bp + " is not a neuron of the topology");
        *b = get_as<double>(require(biases[i], "value", bp), bp + ".value");
        seen_b[static_cast<std::size_t>(b - p.biases.data())] = true;
    }
    if (std::find(seen_w.begin(), seen_w.end(), false) != seen_w.end() ||
        std::find(seen_b.begin(), seen_b.end(), false) != seen_b.end())
        throw ValidationError(path + " lists a parameter twice");
    return p;
}

// --- reports -----------------------------------------------------------------

inline json eval_to_json(const EvalReport& r) {
    return {{"total", r.total},
            {"correct_count", r.correct_count},
            {"accuracy", r.accuracy},
            {"acc_positive", r.acc_positive},
            {"acc_negative", r.acc_negative},
            {"acc_positive_undefined", r.acc_positive_undefined},
            {"acc_negative_undefined", r.acc_negative_undefined},
            {"mean_loss", r.mean_loss}};
}

inline json measurements_to_json(const MeasurementReport& m) {
    json j = {{"mec_bits", m.mec_bits},
              {"demand_bits", m.demand_bits},
              {"demand_estimated", m.demand_estimated},
              {"generalization", nullptr},
              {"generalization_display", nullptr},
              {"balance", m.balance},
              {"bias_flagged", m.bias_flagged},
              {"bias_detail", m.bias_detail},
              {"per_class_acc", {{"positive", m.acc_positive}, {"negative", m.acc_negative}}}};
    if (m.generalization) {
        j["generalization"] = m.generalization->value;
        j["generalization_display"] = m.generalization->display();
    }
    return j;
}

inline json mec_to_json(const MecResult& r) {
    json layers = json::array();
    for (const LayerCapacity& c : r.layers)
        layers.push_back({{"layer", c.layer},
                          {"input_params", c.input_params},
                          {"neuron_params", c.neuron_params},
                          {"incoming_bits", c.incoming_bits},
                          {"bits", c.bits}});
    return {{"mec_bits", r.bits}, {"per_layer", r.per_layer}, {"layers", layers}};
}

}  // namespace jsonio
}  // namespace capmeter
