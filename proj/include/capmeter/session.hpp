#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include "capmeter/csv.hpp"
#include "capmeter/error.hpp"
#include "capmeter/experiment.hpp"
#include "capmeter/json_io.hpp"

namespace capmeter {

enum class SessionState { idle, running, paused };

inline std::string_view session_state_name(SessionState s) {
    switch (s) {
        case SessionState::idle: return "idle";
        case SessionState::running: return "running";
        case SessionState::paused: return "paused";
    }
    return "?";
}

enum class ControlAction { start, pause, step, reset };

inline ControlAction control_action_from_name(std::string_view name) {
    if (name == "start") return ControlAction::start;
    if (name == "pause") return ControlAction::pause;
    if (name == "step") return ControlAction::step;
    if (name == "reset") return ControlAction::reset;
    throw ValidationError("unknown control action '" + std::string(name) + "'");
}

/// Broadcast log of frames. Subscribers keep a cursor (the next sequence
/// number they want); a subscriber that falls behind the retained window
/// resumes at the oldest retained frame. `generation` changes on reset so
/// followers can end their stream instead of seeing the step go backwards.
class FrameLog {
public:
    static constexpr std::size_t kRetained = 1024;

    struct Cursor {
        std::uint64_t next_seq = 0;
        std::uint64_t generation = 0;
    };

    void publish(const MetricsFrame& f) {
        {
            std::lock_guard lock(mu_);
            frames_.push_back(f);
            if (frames_.size() > kRetained) {
                frames_.pop_front();
                ++first_seq_;
            }
        }
        cv_.notify_all();
    }

    void new_generation() {
        {
            std::lock_guard lock(mu_);
            first_seq_ += frames_.size();
            frames_.clear();
            ++generation_;
        }
        cv_.notify_all();
    }

    /// Wakes every waiter (state changes, shutdown).
    void poke() { cv_.notify_all(); }

    Cursor tail() const {
        std::lock_guard lock(mu_);
        return {first_seq_ + frames_.size(), generation_};
    }

    /// Frames at or after the cursor, waiting up to `timeout` when there are
    /// none. Advances the cursor. Returns nullopt if the generation changed.
    std::optional<std::vector<MetricsFrame>> poll(Cursor& c, std::chrono::milliseconds timeout) {
        std::unique_lock lock(mu_);
        auto ready = [&] { return generation_ != c.generation || first_seq_ + frames_.size() > c.next_seq; };
        if (!ready()) cv_.wait_for(lock, timeout, ready);
        if (generation_ != c.generation) return std::nullopt;
        std::vector<MetricsFrame> out;
        if (c.next_seq < first_seq_) c.next_seq = first_seq_;
        for (std::uint64_t s = c.next_seq; s < first_seq_ + frames_.size(); ++s)
            out.push_back(frames_[static_cast<std::size_t>(s - first_seq_)]);
        c.next_seq = first_seq_ + frames_.size();
        return out;
    }

private:
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<MetricsFrame> frames_;
    std::uint64_t first_seq_ = 0;
    std::uint64_t generation_ = 0;
};

/// One interactive session: an Experiment plus its run state and at most one
/// training thread.
///
/// Locking: `control_mu_` serialises control operations (start, pause,
/// edits...). `data_mu_` guards the experiment and is held by the trainer
/// for one epoch at a time, so readers only ever see whole epochs. The
/// trainer never takes `control_mu_`, so joining it under `control_mu_` is safe.
class Session {
public:
    Session(std::string id, Experiment exp) : id_(std::move(id)), exp_(std::move(exp)) {}
    ~Session() { stop_trainer(); }

    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;

    const std::string& id() const { return id_; }

    SessionState state() const {
        std::lock_guard lock(data_mu_);
        return state_;
    }

    /// Descriptor JSON: id, state, step, topology, config, dataset summary,
    /// measurements, created_at, last error.
    json describe() const {
        std::lock_guard lock(data_mu_);
        return describe_locked();
    }

    MeasurementReport measurements() const {
        std::lock_guard lock(data_mu_);
        return exp_.measurements();
    }

    MetricsFrame snapshot() const {
        std::lock_guard lock(data_mu_);
        return exp_.snapshot();
    }

    /// Applies an edit; a running session pauses for it and then resumes.
    json patch_topology(const TopologyEdit& change) {
        std::lock_guard control(control_mu_);
        const bool was_running = state() == SessionState::running;
        if (was_running) stop_trainer();
        try {
            std::lock_guard lock(data_mu_);
            exp_.apply_edit(change);
        } catch (...) {
            if (was_running) start_trainer();
            throw;
        }
        if (was_running) start_trainer();
        std::lock_guard lock(data_mu_);
        return {{"session", describe_locked()}, {"measurements", jsonio::measurements_to_json(exp_.measurements())}};
    }

    json control(ControlAction action, std::uint64_t count = 1) {
        std::lock_guard control(control_mu_);
        const SessionState current = state();
        switch (action) {
            case ControlAction::start:
                if (current == SessionState::running) throw ConflictError("session is already running");
                set_state(SessionState::running);
                start_trainer();
                break;
            case ControlAction::pause:
                if (current != SessionState::running)
                    throw ConflictError("cannot pause a session that is " + std::string(session_state_name(current)));
                stop_trainer();
                set_state(SessionState::paused);
                break;
            case ControlAction::step: {
                if (current == SessionState::running) throw ConflictError("cannot step a running session; pause it first");
                if (count < 1) throw ValidationError("step count must be at least 1");
                std::lock_guard lock(data_mu_);
                try {
                    for (const MetricsFrame& f : exp_.run_epochs(count)) frames_.publish(f);
                } catch (const DivergenceError& e) {
                    last_error_ = e.what();
                    throw;
                }
                break;
            }
            case ControlAction::reset:
                stop_trainer();
                {
                    std::lock_guard lock(data_mu_);
                    exp_.reset();
                    state_ = SessionState::idle;
                    last_error_.clear();
                    frames_.new_generation();
                    frames_.publish(exp_.history().back());
                }
                break;
        }
        frames_.poke();
        return describe();
    }

    /// Parses and installs an uploaded CSV; training is reset.
    json upload_dataset(std::string_view csv) {
        Dataset ds = parse_csv(csv);
        std::lock_guard control(control_mu_);
        const bool was_running = state() == SessionState::running;
        if (was_running) stop_trainer();
        try {
            std::lock_guard lock(data_mu_);
            exp_.replace_dataset(ds);
            state_ = SessionState::idle;
            frames_.new_generation();
            frames_.publish(exp_.history().back());
            const MeasurementReport m = exp_.measurements();
            return {{"n", exp_.dataset().size()},
                    {"train_size", exp_.train_view().rows()},
                    {"test_size", exp_.test_view().rows()},
                    {"balance", m.balance},
                    {"demand_bits", m.demand_bits},
                    {"demand_estimated", m.demand_estimated},
                    {"session", describe_locked()}};
        } catch (...) {
            if (was_running) start_trainer();
            throw;
        }
    }

    json export_record() const {
        std::lock_guard lock(data_mu_);
        return exp_.to_record();
    }

    FrameLog& frames() { return frames_; }

    void shutdown() {
        std::lock_guard control(control_mu_);
        stop_trainer();
        {
            std::lock_guard lock(data_mu_);
            closed_ = true;
        }
        frames_.poke();
    }

    bool closed() const {
        std::lock_guard lock(data_mu_);
        return closed_;
    }

    std::size_t subscribers() const { return subscribers_.load(); }
    void add_subscriber() { ++subscribers_; }
    void remove_subscriber() { --subscribers_; }

private:
    void set_state(SessionState s) {
        std::lock_guard lock(data_mu_);
        state_ = s;
    }

    void start_trainer() {
        trainer_ = std::jthread([this](std::stop_token stop) { train_loop(stop); });
    }

    void stop_trainer() {
        if (trainer_.joinable()) {
            trainer_.request_stop();
            trainer_.join();
        }
    }

    void train_loop(std::stop_token stop) {
        while (!stop.stop_requested()) {
            {
                std::lock_guard lock(data_mu_);
                try {
                    if (auto f = exp_.run_epoch()) frames_.publish(*f);
                } catch (const Error& e) {
                    last_error_ = e.what();
                    state_ = SessionState::paused;
                    frames_.poke();
                    return;
                }
            }
            // std::mutex is not fair; let waiting readers in between epochs.
            std::this_thread::yield();
        }
    }

    json describe_locked() const {
        const MeasurementReport m = exp_.measurements();
        const Dataset& ds = exp_.dataset();
        return {{"schema_version", kSchemaVersion},
                {"session_id", id_},
                {"state", std::string(session_state_name(state_))},
                {"step", exp_.epoch()},
                {"train_steps", exp_.state().step()},
                {"created_at", exp_.created_at()},
                {"topology", jsonio::topology_to_json(exp_.topology())},
                {"config", jsonio::config_to_json(exp_.spec().config)},
                {"dataset",
                 {{"source", std::string(data_source_name(ds.source))},
                  {"n", ds.size()},
                  {"seed", exp_.spec().dataset.seed},
                  {"noise", exp_.spec().dataset.noise},
                  {"train_fraction", exp_.spec().dataset.train_fraction}}},
                {"measurements", jsonio::measurements_to_json(m)},
                {"mec", jsonio::mec_to_json(mec(exp_.topology()))},
                {"subscribers", subscribers_.load()},
                {"last_error", last_error_.empty() ? json(nullptr) : json(last_error_)}};
    }

    const std::string id_;
    mutable std::mutex control_mu_;
    mutable std::mutex data_mu_;
    Experiment exp_;
    SessionState state_ = SessionState::idle;
    std::string last_error_;
    bool closed_ = false;
    FrameLog frames_;
    std::atomic<std::size_t> subscribers_{0};
    std::jthread trainer_;
};

struct ServiceConfig {
    std::size_t max_sessions = 64;
    /// Default epochs_per_tick for sessions whose request leaves it unset.
    int metric_cadence = 10;
};

/// Registry of live sessions. State lives only in memory; exported records
/// are the sole persistence.
class SessionManager {
public:
    explicit SessionManager(ServiceConfig config = {}) : config_(config) {}
    ~SessionManager() { shutdown(); }

    const ServiceConfig& config() const { return config_; }

    /// Creates a session from a request body (see README for the schema).
    std::shared_ptr<Session> create(const json& body) {
        jsonio::check_schema_version(body);
        ExperimentSpec spec;
        if (body.contains("topology")) spec.topology = jsonio::topology_from_json(body.at("topology"));
        TrainingConfig base;
        base.epochs_per_tick = config_.metric_cadence;
        spec.config = body.contains("config") ? jsonio::config_from_json(body.at("config"), base) : base;
        if (body.contains("dataset")) spec.dataset = jsonio::dataset_spec_from_json(body.at("dataset"));
        return add(Experiment(std::move(spec)));
    }

    std::shared_ptr<Session> import_record(const json& record) { return add(Experiment::from_record(record)); }

    std::shared_ptr<Session> get(const std::string& id) const {
        std::shared_lock lock(mu_);
        auto it = sessions_.find(id);
        if (it == sessions_.end()) throw NotFoundError("no session '" + id + "'");
        return it->second;
    }

    void remove(const std::string& id) {
        std::shared_ptr<Session> s;
        {
            std::unique_lock lock(mu_);
            auto it = sessions_.find(id);
            if (it == sessions_.end()) throw NotFoundError("no session '" + id + "'");
            s = std::move(it->second);
            sessions_.erase(it);
        }
        s->shutdown();
    }

    std::size_t size() const {
        std::shared_lock lock(mu_);
        return sessions_.size();
    }

    void shutdown() {
        std::map<std::string, std::shared_ptr<Session>> all;
        {
            std::unique_lock lock(mu_);
            all.swap(sessions_);
        }
        for (auto& [id, s] : all) s->shutdown();
    }

private:
    std::shared_ptr<Session> add(Experiment exp) {
        std::unique_lock lock(mu_);
        if (sessions_.size() >= config_.max_sessions)
            throw CapacityExceededError("session limit of " + std::to_string(config_.max_sessions) + " reached");
        std::string id;
        do {
            id = new_id();
        } while (sessions_.contains(id));
        auto s = std::make_shared<Session>(id, std::move(exp));
        sessions_.emplace(id, s);
        return s;
    }

    std::string new_id() {
        static constexpr char hex[] = "0123456789abcdef";
        std::string id(32, '0');
        std::uniform_int_distribution<int> digit(0, 15);
        for (char& c : id) c = hex[digit(id_rng_)];
        return id;
    }

    ServiceConfig config_;
    mutable std::shared_mutex mu_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::mt19937_64 id_rng_{std::random_device{}()};
};

}  // namespace capmeter
