#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "capmeter/error.hpp"
#include "capmeter/experiment.hpp"
#include "capmeter/json_io.hpp"
#include "capmeter/measurements.hpp"

namespace capmeter {

inline constexpr std::size_t kMaxSweepCombinations = 200;

struct RunReport {
    std::string architecture;
    std::vector<int> hidden_layers;
    std::uint64_t epochs = 0;
    EvalReport train;
    EvalReport test;
    MeasurementReport measurements;
    /// Set when training diverged; the other fields then describe the last good state.
    std::optional<std::string> error;
};

/// "d-h1-...-1": input width, hidden widths, the output neuron.
inline std::string architecture_label(const Topology& t) {
    std::string s = std::to_string(t.width(0));
    for (int w : t.hidden_layers()) s += "-" + std::to_string(w);
    return s + "-1";
}

inline RunReport report_of(const Experiment& exp) {
    RunReport r;
    r.architecture = architecture_label(exp.topology());
    r.hidden_layers = exp.topology().hidden_layers();
    r.epochs = exp.epoch();
    r.train = exp.evaluate_train();
    r.test = exp.evaluate_test();
    r.measurements = exp.measurements();
    return r;
}

/// Trains `exp` for `epochs` more epochs and reports. Divergence propagates.
inline RunReport run_experiment(Experiment& exp, std::uint64_t epochs) {
    exp.run_epochs(epochs);
    return report_of(exp);
}

inline RunReport run(const ExperimentSpec& spec, std::uint64_t epochs) {
    Experiment exp(spec);
    return run_experiment(exp, epochs);
}

// ---------------------------------------------------------------------------
// Sweeps

/// Widths to try for one hidden layer (1-based).
struct SweepAxis {
    int layer = 1;
    std::vector<int> widths;
};

/// Parses "layerK=a..b" or "layerK=a,b,c".
inline SweepAxis parse_sweep_axis(std::string_view text) {
    auto fail = [&](const std::string& why) {
        return ValidationError("bad sweep '" + std::string(text) + "': " + why +
                               " (expected layerK=a..b or layerK=a,b,c)");
    };
    auto to_int = [&](std::string_view s) {
        int v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (s.empty() || ec != std::errc() || p != s.data() + s.size()) throw fail("'" + std::string(s) + "' is not an integer");
        return v;
    };
    const auto eq = text.find('=');
    if (eq == std::string_view::npos || text.substr(0, 5) != "layer") throw fail("missing 'layerK='");
    SweepAxis axis;
    axis.layer = to_int(text.substr(5, eq - 5));
    std::string_view values = text.substr(eq + 1);
    if (auto dots = values.find(".."); dots != std::string_view::npos) {
        const int lo = to_int(values.substr(0, dots)), hi = to_int(values.substr(dots + 2));
        if (lo > hi) throw fail("empty range");
        if (hi - lo >= static_cast<int>(kMaxSweepCombinations)) throw fail("range too large");
        for (int w = lo; w <= hi; ++w) axis.widths.push_back(w);
    } else {
        std::size_t start = 0;
        while (start <= values.size()) {
            const auto comma = values.find(',', start);
            axis.widths.push_back(to_int(values.substr(start, comma - start)));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
    }
    return axis;
}

/// Occam ordering: highest G first, then the smaller capacity. Rows without
/// a G (zero capacity or a training error) go last.
inline void rank_sweep(std::vector<RunReport>& rows) {
    auto g = [](const RunReport& r) -> std::optional<double> {
        if (r.error || !r.measurements.generalization) return std::nullopt;
        return r.measurements.generalization->value;
    };
    std::stable_sort(rows.begin(), rows.end(), [&](const RunReport& a, const RunReport& b) {
        const auto ga = g(a), gb = g(b);
        if (ga.has_value() != gb.has_value()) return ga.has_value();
        if (ga && *ga != *gb) return *ga > *gb;
        return a.measurements.mec_bits < b.measurements.mec_bits;
    });
}

/// Cartesian product of the axes applied to the base topology with
/// set_width edits; each row trains in isolation from the same seeds.
inline std::vector<ExperimentSpec> sweep_specs(const ExperimentSpec& base, const std::vector<SweepAxis>& axes) {
    std::size_t combos = 1;
    for (const SweepAxis& a : axes) {
        if (a.layer < 1 || a.layer > static_cast<int>(base.topology.hidden_layers().size()))
            throw ValidationError("sweep layer " + std::to_string(a.layer) + " is not a hidden layer of the base network (" +
                                  std::to_string(base.topology.hidden_layers().size()) + " hidden layers)");
        combos *= a.widths.size();
        if (combos > kMaxSweepCombinations) break;
    }
    if (combos > kMaxSweepCombinations) {
        std::size_t total = 1;
        for (const SweepAxis& a : axes) total *= a.widths.size();
        throw ValidationError("sweep has " + std::to_string(total) + " combinations; the limit is " +
                              std::to_string(kMaxSweepCombinations));
    }
    std::vector<ExperimentSpec> specs{base};
    for (const SweepAxis& a : axes) {
        std::vector<ExperimentSpec> next;
        for (const ExperimentSpec& s : specs)
            for (int w : a.widths) {
                ExperimentSpec v = s;
                v.topology = apply_edit(s.topology, edit::SetWidth{a.layer, w});
                next.push_back(std::move(v));
            }
        specs = std::move(next);
    }
    return specs;
}

/// Trains every combination (up to `jobs` at a time) and ranks the rows.
inline std::vector<RunReport> sweep(const ExperimentSpec& base, const std::vector<SweepAxis>& axes,
                                    std::uint64_t epochs, unsigned jobs = std::thread::hardware_concurrency()) {
    const std::vector<ExperimentSpec> specs = sweep_specs(base, axes);
    std::vector<RunReport> rows(specs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next++) < specs.size();) {
            Experiment exp(specs[i]);
            try {
                rows[i] = run_experiment(exp, epochs);
            } catch (const DivergenceError& e) {
                rows[i] = report_of(exp);
                rows[i].error = e.what();
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 1; t < std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(specs.size()))); ++t)
            pool.emplace_back(worker);
        worker();
    }
    rank_sweep(rows);
    return rows;
}

// ---------------------------------------------------------------------------
// Output

enum class OutputFormat { table, csv, jsonl };

inline OutputFormat output_format_from_name(std::string_view name) {
    if (name == "table") return OutputFormat::table;
    if (name == "csv") return OutputFormat::csv;
    if (name == "jsonl") return OutputFormat::jsonl;
    throw ValidationError("unknown format '" + std::string(name) + "'");
}

inline json report_to_json(const RunReport& r) {
    json j = {{"architecture", r.architecture},
              {"hidden_layers", r.hidden_layers},
              {"epochs", r.epochs},
              {"mec_bits", r.measurements.mec_bits},
              {"demand_bits", r.measurements.demand_bits},
              {"accuracy", r.test.accuracy},
              {"acc_positive", r.test.acc_positive},
              {"acc_negative", r.test.acc_negative},
              {"correct_count", r.test.correct_count},
              {"generalization", r.measurements.generalization ? json(r.measurements.generalization->value) : json(nullptr)},
              {"balance", r.measurements.balance},
              {"bias_flagged", r.measurements.bias_flagged},
              {"train_loss", r.train.mean_loss},
              {"test_loss", r.test.mean_loss}};
    if (r.error) j["error"] = *r.error;
    return j;
}

inline constexpr const char* kCsvColumns =
    "architecture,epochs,mec_bits,demand_bits,accuracy,acc_positive,acc_negative,correct_count,"
    "generalization,balance,bias_flagged,train_loss,test_loss";

namespace detail {
inline std::string exact(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}
}  // namespace detail

inline std::string format_reports(const std::vector<RunReport>& rows, OutputFormat fmt) {
    std::ostringstream os;
    switch (fmt) {
        case OutputFormat::jsonl:
            for (const RunReport& r : rows) os << report_to_json(r).dump() << '\n';
            break;
        case OutputFormat::csv:
            os << kCsvColumns << '\n';
            for (const RunReport& r : rows) {
                const auto& m = r.measurements;
                os << r.architecture << ',' << r.epochs << ',' << m.mec_bits << ',' << m.demand_bits << ','
                   << detail::exact(r.test.accuracy) << ',' << detail::exact(r.test.acc_positive) << ','
                   << detail::exact(r.test.acc_negative) << ',' << r.test.correct_count << ','
                   << (m.generalization ? detail::exact(m.generalization->value) : "") << ','
                   << detail::exact(m.balance) << ',' << (m.bias_flagged ? "true" : "false") << ','
                   << detail::exact(r.train.mean_loss) << ',' << detail::exact(r.test.mean_loss) << '\n';
            }
            break;
        case OutputFormat::table: {
            os << std::left << std::setw(18) << "architecture" << std::right << std::setw(8) << "epochs"
               << std::setw(6) << "MEC" << std::setw(8) << "demand" << std::setw(10) << "accuracy"
               << std::setw(8) << "acc+" << std::setw(8) << "acc-" << std::setw(9) << "G"
               << std::setw(9) << "balance" << std::setw(6) << "bias" << '\n';
            for (const RunReport& r : rows) {
                const auto& m = r.measurements;
                std::ostringstream g;
                if (m.generalization) g << std::fixed << std::setprecision(2) << m.generalization->display();
                else g << "n/a";
                os << std::left << std::setw(18) << r.architecture << std::right << std::setw(8) << r.epochs
                   << std::setw(6) << m.mec_bits << std::setw(8) << m.demand_bits << std::fixed
                   << std::setprecision(4) << std::setw(10) << r.test.accuracy << std::setprecision(3)
                   << std::setw(8) << r.test.acc_positive << std::setw(8) << r.test.acc_negative
                   << std::setw(9) << g.str() << std::setw(9) << m.balance << std::setw(6)
                   << (m.bias_flagged ? "YES" : "no");
                if (r.error) os << "  diverged: " << *r.error;
                os << '\n';
                os.unsetf(std::ios::fixed);
            }
            break;
        }
    }
    return os.str();
}

}  // namespace capmeter
