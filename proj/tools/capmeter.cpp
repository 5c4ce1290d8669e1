// Headless runner: trains one experiment, or a sweep of hidden-layer widths,
// and prints the capacity measurements.
//
//   capmeter --kind circle --hidden 8,4 --epochs 2000
//   capmeter --spec run.json --sweep layer2=1..5 --format csv
//   capmeter --spec exported.json --epochs 100      (continues an exported run)

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "capmeter/csv.hpp"
#include "capmeter/experiment.hpp"
#include "capmeter/runner.hpp"

namespace {

using namespace capmeter;

struct Options {
    std::string spec_file;
    std::string dataset_file;
    std::uint64_t epochs = 1000;
    std::optional<std::uint64_t> seed;
    std::string format = "table";
    std::vector<std::string> sweeps;
    std::string export_file;
    unsigned jobs = 0;

    std::optional<std::vector<int>> hidden;
    std::optional<std::string> activation;
    std::optional<std::string> output_activation;
    std::optional<std::string> features;
    std::optional<double> lr;
    std::optional<int> batch;
    std::optional<std::string> reg;
    std::optional<double> reg_rate;
    std::optional<std::string> kind;
    std::optional<std::size_t> n;
    std::optional<double> noise;
    std::optional<double> train_fraction;

    bool overrides_topology() const { return hidden || activation || output_activation || features; }
    bool overrides_anything() const {
        return overrides_topology() || lr || batch || reg || reg_rate || kind || n || noise || train_fraction ||
               seed || !dataset_file.empty();
    }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

FeatureSelection parse_feature_list(const std::string& text) {
    FeatureSelection sel;
    std::stringstream ss(text);
    for (std::string name; std::getline(ss, name, ',');) {
        const auto f = feature_from_name(name);
        if (!f) throw ValidationError("unknown feature '" + name + "'");
        sel.set(*f);
    }
    return sel;
}

ExperimentSpec build_spec(const Options& o, const json* inline_spec) {
    ExperimentSpec spec = inline_spec ? jsonio::spec_from_json(*inline_spec) : ExperimentSpec{};
    if (o.overrides_topology()) {
        const Topology& base = spec.topology;
        spec.topology = Topology::dense(o.features ? parse_feature_list(*o.features) : base.features(),
                                        o.hidden ? *o.hidden : base.hidden_layers(),
                                        o.activation ? activation_from_name(*o.activation) : base.activation(),
                                        o.output_activation ? activation_from_name(*o.output_activation)
                                                            : base.output_activation());
    }
    TrainingConfig& c = spec.config;
    if (o.lr) c.learning_rate = *o.lr;
    if (o.batch) c.batch_size = *o.batch;
    if (o.reg) c.regularization = regularization_from_name(*o.reg);
    if (o.reg_rate) c.regularization_rate = *o.reg_rate;
    DatasetSpec& d = spec.dataset;
    if (o.kind) d.kind = data_source_from_name(*o.kind);
    if (o.n) d.n = *o.n;
    if (o.noise) d.noise = *o.noise;
    if (o.train_fraction) d.train_fraction = *o.train_fraction;
    if (o.seed) c.seed = d.seed = *o.seed;
    if (!o.dataset_file.empty()) {
        const Dataset uploaded = parse_csv(slurp(o.dataset_file));
        d.kind = DataSource::uploaded;
        d.points = uploaded.points;
        d.n = uploaded.points.size();
    }
    c.validate();
    return spec;
}

int run_main(const Options& o) {
    const OutputFormat fmt = output_format_from_name(o.format);

    std::optional<Experiment> resumed;
    std::optional<json> inline_spec;
    if (!o.spec_file.empty()) {
        json doc = json::parse(slurp(o.spec_file));
        jsonio::check_schema_version(doc);
        if (doc.value("kind", std::string("spec")) == "experiment") {
            if (o.overrides_anything())
                throw ValidationError("an exported experiment record is a complete run description; "
                                      "it cannot be combined with topology, config or dataset flags");
            resumed.emplace(Experiment::from_record(doc));
        } else {
            inline_spec = std::move(doc);
        }
    }

    if (!o.sweeps.empty()) {
        if (!o.export_file.empty()) throw ValidationError("--export applies to a single run, not a sweep");
        const ExperimentSpec base = resumed ? resumed->spec()
                                            : build_spec(o, inline_spec ? &*inline_spec : nullptr);
        std::vector<SweepAxis> axes;
        for (const std::string& s : o.sweeps) axes.push_back(parse_sweep_axis(s));
        const unsigned jobs = o.jobs ? o.jobs : std::max(1u, std::thread::hardware_concurrency());
        const std::vector<RunReport> rows = sweep(base, axes, o.epochs, jobs);
        std::cout << format_reports(rows, fmt);
        return 0;
    }

    Experiment exp = resumed ? std::move(*resumed) : Experiment(build_spec(o, inline_spec ? &*inline_spec : nullptr));
    RunReport report;
    try {
        report = run_experiment(exp, o.epochs);
    } catch (const DivergenceError& e) {
        std::cerr << "error: training diverged after epoch " << exp.epoch() << ": " << e.what() << '\n';
        return 3;
    }
    std::cout << format_reports({report}, fmt);
    if (!o.export_file.empty()) {
        std::ofstream out(o.export_file);
        out << exp.to_record().dump(2) << '\n';
        if (!out) throw ValidationError("cannot write '" + o.export_file + "'");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Train small networks and report their capacity measurements"};
    Options o;
    app.add_option("--spec", o.spec_file, "JSON run spec or exported experiment record")->check(CLI::ExistingFile);
    app.add_option("--dataset", o.dataset_file, "CSV with columns x1,x2,label")->check(CLI::ExistingFile);
    app.add_option("--epochs", o.epochs, "Epochs to train")->capture_default_str();
    app.add_option("--seed", o.seed, "Seed for weights, data generation and the split");
    app.add_option("--format", o.format, "Output format")
        ->check(CLI::IsMember({"table", "csv", "jsonl"}))
        ->capture_default_str();
    app.add_option("--sweep", o.sweeps, "Width range of a hidden layer, e.g. layer2=1..5 or layer1=2,4,8");
    app.add_option("--jobs", o.jobs, "Sweep rows trained in parallel (default: hardware threads)");
    app.add_option("--export", o.export_file, "Write the trained experiment record to this file");

    app.add_option("--hidden", o.hidden, "Hidden layer widths, e.g. 8,4")->delimiter(',');
    app.add_option("--activation", o.activation, "Hidden activation: tanh, relu, sigmoid or linear");
    app.add_option("--output-activation", o.output_activation, "Output activation (default tanh)");
    app.add_option("--features", o.features, "Comma-separated inputs: x1,x2,x1^2,x2^2,x1*x2,sin(x1),sin(x2)");
    app.add_option("--lr", o.lr, "Learning rate");
    app.add_option("--batch", o.batch, "Batch size");
    app.add_option("--reg", o.reg, "Regularization: none, L1 or L2");
    app.add_option("--reg-rate", o.reg_rate, "Regularization rate");
    app.add_option("--kind", o.kind, "Generated dataset: circle, xor, gauss or spiral");
    app.add_option("--n", o.n, "Number of generated points");
    app.add_option("--noise", o.noise, "Generator noise in [0, 0.5]");
    app.add_option("--train-fraction", o.train_fraction, "Share of points used for training");

    CLI11_PARSE(app, argc, argv);
    try {
        return run_main(o);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "error: malformed JSON: " << e.what() << '\n';
        return 2;
    }
}
