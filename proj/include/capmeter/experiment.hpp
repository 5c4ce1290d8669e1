#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <optional>
#include <string>
#include <vector>

#include "capmeter/csv.hpp"
#include "capmeter/dataset.hpp"
#include "capmeter/json_io.hpp"
#include "capmeter/measurements.hpp"
#include "capmeter/network.hpp"
#include "capmeter/topology.hpp"

namespace capmeter {

/// How to obtain the data: a generator recipe, or inline uploaded points.
/// The split uses `seed` as well.
struct DatasetSpec {
    DataSource kind = DataSource::circle;
    std::size_t n = 500;
    double noise = 0.0;
    std::uint64_t seed = 1;
    double train_fraction = kDefaultTrainFraction;
    /// Only for kind == uploaded; already rescaled.
    std::vector<RawPoint> points;

    Dataset materialize() const {
        if (kind != DataSource::uploaded) return generate(kind, n, noise, seed);
        Dataset ds;
        ds.source = DataSource::uploaded;
        ds.seed = seed;
        ds.points = points;
        if (ds.points.size() < kMinUploadRows)
            throw ValidationError("uploaded dataset needs at least " + std::to_string(kMinUploadRows) + " points");
        return ds;
    }

    bool operator==(const DatasetSpec&) const = default;
};

struct ExperimentSpec {
    Topology topology = Topology::default_network();
    TrainingConfig config;
    DatasetSpec dataset;
};

/// One snapshot of a training run.
struct MetricsFrame {
    std::uint64_t step = 0;  // epochs trained
    double train_loss = 0.0;
    double test_loss = 0.0;
    double accuracy = 0.0;
    double acc_positive = 0.0;
    double acc_negative = 0.0;
    std::int64_t mec_bits = 0;
    std::int64_t demand_bits = 0;
    std::optional<double> generalization;
    double balance = 0.0;
    bool bias_flagged = false;

    bool operator==(const MetricsFrame&) const = default;
};

inline constexpr std::size_t kExportedHistoryFrames = 200;
inline constexpr std::size_t kRetainedHistoryFrames = 10000;

namespace jsonio {

inline json dataset_spec_to_json(const DatasetSpec& d) {
    json j = {{"source", std::string(data_source_name(d.kind))},
              {"n", d.kind == DataSource::uploaded ? d.points.size() : d.n},
              {"noise", d.noise},
              {"seed", d.seed},
              {"train_fraction", d.train_fraction}};
    if (d.kind == DataSource::uploaded) {
        json pts = json::array();
        for (const RawPoint& p : d.points) pts.push_back(json::array({p.x1, p.x2, p.label}));
        j["points"] = pts;
    }
    return j;
}

inline DatasetSpec dataset_spec_from_json(const json& j, const std::string& path = "dataset") {
    DatasetSpec d;
    d.kind = data_source_from_name(get_or<std::string>(j, "source", "circle", path));
    d.n = get_or<std::size_t>(j, "n", d.n, path);
    d.noise = get_or<double>(j, "noise", d.noise, path);
    d.seed = get_or<std::uint64_t>(j, "seed", d.seed, path);
    d.train_fraction = get_or<double>(j, "train_fraction", d.train_fraction, path);
    if (d.kind == DataSource::uploaded) {
        const json& pts = require(j, "points", path);
        if (!pts.is_array()) throw ValidationError(path + ".points must be an array");
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const std::string p = path + ".points[" + std::to_string(i) + "]";
            if (!pts[i].is_array() || pts[i].size() != 3) throw ValidationError(p + " must be [x1, x2, label]");
            RawPoint rp{get_as<double>(pts[i][0], p), get_as<double>(pts[i][1], p), get_as<int>(pts[i][2], p)};
            if (rp.label != 1 && rp.label != -1) throw ValidationError(p + " label must be -1 or +1");
            d.points.push_back(rp);
        }
        d.n = d.points.size();
    }
    return d;
}

inline json frame_to_json(const MetricsFrame& f) {
    return {{"step", f.step},
            {"train_loss", f.train_loss},
            {"test_loss", f.test_loss},
            {"accuracy", f.accuracy},
            {"acc_positive", f.acc_positive},
            {"acc_negative", f.acc_negative},
            {"mec_bits", f.mec_bits},
            {"demand_bits", f.demand_bits},
            {"generalization", f.generalization ? json(*f.generalization) : json(nullptr)},
            {"balance", f.balance},
            {"bias_flagged", f.bias_flagged}};
}

inline MetricsFrame frame_from_json(const json& j, const std::string& path) {
    MetricsFrame f;
    f.step = get_as<std::uint64_t>(require(j, "step", path), path + ".step");
    f.train_loss = get_as<double>(require(j, "train_loss", path), path + ".train_loss");
    f.test_loss = get_as<double>(require(j, "test_loss", path), path + ".test_loss");
    f.accuracy = get_as<double>(require(j, "accuracy", path), path + ".accuracy");
    f.acc_positive = get_as<double>(require(j, "acc_positive", path), path + ".acc_positive");
    f.acc_negative = get_as<double>(require(j, "acc_negative", path), path + ".acc_negative");
    f.mec_bits = get_as<std::int64_t>(require(j, "mec_bits", path), path + ".mec_bits");
    f.demand_bits = get_as<std::int64_t>(require(j, "demand_bits", path), path + ".demand_bits");
    if (const json& g = require(j, "generalization", path); !g.is_null())
        f.generalization = get_as<double>(g, path + ".generalization");
    f.balance = get_as<double>(require(j, "balance", path), path + ".balance");
    f.bias_flagged = get_as<bool>(require(j, "bias_flagged", path), path + ".bias_flagged");
    return f;
}

/// Inline run description: {"schema_version", "topology", "config", "dataset"}.
inline ExperimentSpec spec_from_json(const json& j) {
    ExperimentSpec s;
    if (j.contains("topology")) s.topology = topology_from_json(j.at("topology"));
    if (j.contains("config")) s.config = config_from_json(j.at("config"));
    if (j.contains("dataset")) s.dataset = dataset_spec_from_json(j.at("dataset"));
    return s;
}

inline json spec_to_json(const ExperimentSpec& s) {
    return {{"schema_version", kSchemaVersion},
            {"kind", "spec"},
            {"topology", topology_to_json(s.topology)},
            {"config", config_to_json(s.config)},
            {"dataset", dataset_spec_to_json(s.dataset)}};
}

}  // namespace jsonio

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// A network, its data and its training history: the engine behind both
/// the HTTP sessions and the CLI. Not thread-safe; callers serialise access.
class Experiment {
public:
    explicit Experiment(ExperimentSpec spec)
        : spec_(std::move(spec)), state_(NetworkState::initialized(spec_.topology, spec_.config.seed)) {
        load_data(spec_.dataset.materialize());
        record_frame();
    }

    /// Restores an exported record. Throws SchemaError on a version mismatch.
    static Experiment from_record(const json& record) {
        jsonio::check_schema_version(record);
        if (jsonio::get_or<std::string>(record, "kind", "experiment", "record") != "experiment")
            throw SchemaError("record kind must be 'experiment'");
        ExperimentSpec spec;
        spec.topology = jsonio::topology_from_json(jsonio::require(record, "topology", "record"));
        spec.config = jsonio::config_from_json(jsonio::require(record, "config", "record"));
        spec.dataset = jsonio::dataset_spec_from_json(jsonio::require(record, "dataset", "record"));
        Experiment e(spec);
        Params params = jsonio::params_from_json(jsonio::require(record, "params", "record"), spec.topology);
        const auto steps = jsonio::get_or<std::uint64_t>(record, "train_steps", 0, "record");
        e.state_ = NetworkState(spec.topology, std::move(params), steps);
        e.epoch_ = jsonio::get_as<std::uint64_t>(jsonio::require(record, "epoch", "record"), "record.epoch");
        e.history_.clear();
        const json& hist = jsonio::require(record, "history", "record");
        if (!hist.is_array()) throw ValidationError("record.history must be an array");
        for (std::size_t i = 0; i < hist.size(); ++i)
            e.history_.push_back(jsonio::frame_from_json(hist[i], "record.history[" + std::to_string(i) + "]"));
        e.created_at_ = jsonio::get_or<std::string>(record, "created_at", e.created_at_, "record");
        return e;
    }

    /// Everything needed to rebuild this experiment; the history is
    /// downsampled to at most kExportedHistoryFrames frames, the last kept.
    json to_record() const {
        json hist = json::array();
        const std::size_t stride = history_.size() <= kExportedHistoryFrames
                                       ? 1
                                       : (history_.size() + kExportedHistoryFrames - 2) / (kExportedHistoryFrames - 1);
        for (std::size_t i = 0; i < history_.size(); ++i)
            if (i % stride == 0 || i + 1 == history_.size()) hist.push_back(jsonio::frame_to_json(history_[i]));
        return {{"schema_version", kSchemaVersion},
                {"kind", "experiment"},
                {"created_at", created_at_},
                {"topology", jsonio::topology_to_json(state_.topology())},
                {"config", jsonio::config_to_json(spec_.config)},
                {"dataset", jsonio::dataset_spec_to_json(spec_.dataset)},
                {"params", jsonio::params_to_json(state_.params())},
                {"epoch", epoch_},
                {"train_steps", state_.step()},
                {"history", hist}};
    }

    const ExperimentSpec& spec() const { return spec_; }
    const Topology& topology() const { return state_.topology(); }
    const NetworkState& state() const { return state_; }
    std::uint64_t epoch() const { return epoch_; }
    const Dataset& dataset() const { return data_; }
    const FeatureView& train_view() const { return train_view_; }
    const FeatureView& test_view() const { return test_view_; }
    const std::vector<MetricsFrame>& history() const { return history_; }
    const std::string& created_at() const { return created_at_; }

    /// Parameters from the seed, epoch 0, history restarted.
    void reset() {
        state_ = NetworkState::initialized(spec_.topology, spec_.config.seed);
        epoch_ = 0;
        history_.clear();
        record_frame();
    }

    /// Trains one epoch. On divergence the experiment is left as it was.
    /// Returns the frame recorded at a tick boundary, if any.
    std::optional<MetricsFrame> run_epoch() {
        NetworkState next = state_;
        train_epoch(next, train_view_, spec_.config);
        state_ = std::move(next);
        ++epoch_;
        if (epoch_ % static_cast<std::uint64_t>(spec_.config.epochs_per_tick) == 0) return record_frame();
        return std::nullopt;
    }

    /// Trains `k` epochs; the last one always records a frame.
    std::vector<MetricsFrame> run_epochs(std::uint64_t k) {
        std::vector<MetricsFrame> frames;
        for (std::uint64_t i = 0; i < k; ++i)
            if (auto f = run_epoch()) frames.push_back(*f);
        if (k > 0 && (history_.empty() || history_.back().step < epoch_)) frames.push_back(record_frame());
        return frames;
    }

    EvalReport evaluate_train() const { return evaluate(state_, train_view_); }
    EvalReport evaluate_test() const { return evaluate(state_, test_view_); }

    /// Measurements of the current state. G and the per-class accuracies
    /// come from the test split; demand and balance from the whole dataset.
    MeasurementReport measurements(double bias_threshold = kDefaultBiasThreshold) const {
        const EvalReport test = evaluate_test();
        MeasurementReport m;
        m.mec_bits = mec(state_.topology()).bits;
        m.demand_bits = demand_.demand_bits;
        m.demand_estimated = demand_.trace.estimated;
        if (m.mec_bits > 0)
            m.generalization = generalization_ratio(static_cast<std::int64_t>(test.correct_count), m.mec_bits);
        m.balance = balance_;
        const BiasIndicator b = bias_indicator(test, m.balance, bias_threshold);
        m.bias_flagged = b.flagged;
        m.bias_detail = b.detail;
        m.acc_positive = test.acc_positive;
        m.acc_negative = test.acc_negative;
        return m;
    }

    MetricsFrame snapshot() const {
        const EvalReport train = evaluate_train();
        const EvalReport test = evaluate_test();
        const MeasurementReport m = measurements();
        MetricsFrame f;
        f.step = epoch_;
        f.train_loss = train.mean_loss;
        f.test_loss = test.mean_loss;
        f.accuracy = test.accuracy;
        f.acc_positive = test.acc_positive;
        f.acc_negative = test.acc_negative;
        f.mec_bits = m.mec_bits;
        f.demand_bits = m.demand_bits;
        if (m.generalization) f.generalization = m.generalization->value;
        f.balance = m.balance;
        f.bias_flagged = m.bias_flagged;
        return f;
    }

    /// Applies a topology edit. Surviving parameters keep their values, new
    /// ones are initialised from the config seed. Invalid edits throw and
    /// leave the experiment unchanged.
    void apply_edit(const TopologyEdit& change) {
        Topology next = capmeter::apply_edit(state_.topology(), change);
        Params params = carry_over_params(next, state_.params(), spec_.config.seed);
        const bool features_changed = next.features() != state_.topology().features();
        NetworkState fresh(next, std::move(params), state_.step());
        spec_.topology = next;
        state_ = std::move(fresh);
        if (features_changed) rebuild_views();
    }

    /// Replaces the data (e.g. an upload) and resets training.
    void replace_dataset(const Dataset& ds) {
        DatasetSpec d = spec_.dataset;
        d.kind = ds.source;
        if (ds.source == DataSource::uploaded) {
            d.points = ds.points;
            d.n = ds.points.size();
        } else {
            d.points.clear();
            d.n = ds.points.size();
            d.noise = ds.noise;
            d.seed = ds.seed;
        }
        Experiment probe_split = *this;  // validate before committing
        probe_split.load_data(ds);
        probe_split.spec_.dataset = d;
        *this = std::move(probe_split);
        reset();
    }

private:
    void load_data(const Dataset& ds) {
        auto [train, test] = split(ds, spec_.dataset.train_fraction, spec_.dataset.seed);
        spec_.config.validate();
        data_ = ds;
        train_ = std::move(train);
        test_ = std::move(test);
        rebuild_views();
    }

    void rebuild_views() {
        const FeatureSelection& sel = state_.topology().features();
        train_view_ = apply_features(train_, sel);
        test_view_ = apply_features(test_, sel);
        demand_ = capacity_demand(apply_features(data_, sel));
        const std::vector<int> labels = data_.labels();
        balance_ = class_balance(labels);
    }

    MetricsFrame record_frame() {
        MetricsFrame f = snapshot();
        if (!history_.empty() && history_.back().step == f.step) history_.back() = f;
        else history_.push_back(f);
        if (history_.size() > kRetainedHistoryFrames) {
            // Keep every other frame, and always the newest.
            std::vector<MetricsFrame> thinned;
            for (std::size_t i = 0; i < history_.size(); i += 2) thinned.push_back(history_[i]);
            if (thinned.back().step != history_.back().step) thinned.push_back(history_.back());
            history_ = std::move(thinned);
        }
        return f;
    }

    ExperimentSpec spec_;
    NetworkState state_;
    std::uint64_t epoch_ = 0;
    Dataset data_, train_, test_;
    FeatureView train_view_, test_view_;
    DemandResult demand_;
    double balance_ = 0.0;
    std::vector<MetricsFrame> history_;
    std::string created_at_ = utc_timestamp();
};

}  // namespace capmeter
