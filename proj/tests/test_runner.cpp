#include <catch_amalgamated.hpp>

#include <map>
#include <sstream>

#include "capmeter/runner.hpp"

using namespace capmeter;

namespace {

ExperimentSpec base_spec(std::vector<int> hidden) {
    ExperimentSpec s;
    s.topology = Topology::dense({Feature::x1, Feature::x2}, std::move(hidden));
    s.dataset.n = 100;
    s.dataset.seed = 2;
    return s;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

RunReport fake(std::string arch, std::int64_t mec_bits, std::size_t correct) {
    RunReport r;
    r.architecture = std::move(arch);
    r.measurements.mec_bits = mec_bits;
    r.test.correct_count = correct;
    r.measurements.generalization = generalization_ratio(static_cast<std::int64_t>(correct), mec_bits);
    return r;
}

}  // namespace

TEST_CASE("sweep axis parsing", "[runner][sweep]") {
    SweepAxis a = parse_sweep_axis("layer2=1..5");
    CHECK(a.layer == 2);
    CHECK(a.widths == std::vector<int>{1, 2, 3, 4, 5});
    a = parse_sweep_axis("layer1=2,4,8");
    CHECK(a.layer == 1);
    CHECK(a.widths == std::vector<int>{2, 4, 8});
    a = parse_sweep_axis("layer3=6");
    CHECK(a.widths == std::vector<int>{6});
    for (const char* bad : {"layer=1..3", "lay2=1..3", "layer2", "layer2=5..1", "layer2=a..b", "layer2=1,,2",
                            "layer2=1..1000"})
        CHECK_THROWS_AS(parse_sweep_axis(bad), ValidationError);
}

TEST_CASE("oversize sweeps are rejected with their size", "[runner][sweep]") {
    const ExperimentSpec s = base_spec({3, 3, 3});
    const std::vector<SweepAxis> axes{parse_sweep_axis("layer1=1..8"), parse_sweep_axis("layer2=1..8"),
                                      parse_sweep_axis("layer3=1..8")};
    CHECK_THROWS_WITH(sweep_specs(s, axes), Catch::Matchers::ContainsSubstring("512 combinations"));
    CHECK_NOTHROW(sweep_specs(s, {axes[0], axes[1]}));
    CHECK_THROWS_AS(sweep_specs(s, {parse_sweep_axis("layer4=1..2")}), ValidationError);
}

TEST_CASE("sweep specs form the cartesian product", "[runner][sweep]") {
    const auto specs = sweep_specs(base_spec({3, 3}), {parse_sweep_axis("layer1=2,4"), parse_sweep_axis("layer2=1..3")});
    REQUIRE(specs.size() == 6);
    CHECK(specs[0].topology.hidden_layers() == std::vector<int>{2, 1});
    CHECK(specs[5].topology.hidden_layers() == std::vector<int>{4, 3});
    CHECK(specs[3].topology == Topology::dense({Feature::x1, Feature::x2}, {4, 1}));
}

TEST_CASE("ranking prefers high G, then small capacity", "[runner][sweep]") {
    std::vector<RunReport> rows{fake("a", 20, 100), fake("b", 10, 100), fake("c", 12, 100), fake("d", 10, 50)};
    rows.push_back(fake("e", 10, 100));
    rows.back().error = "diverged";
    rank_sweep(rows);
    std::vector<std::string> order;
    for (const auto& r : rows) order.push_back(r.architecture);
    CHECK(order == std::vector<std::string>{"b", "c", "d", "a", "e"});

    // equal accuracy, different capacity: the smaller network first
    std::vector<RunReport> two{fake("big", 15, 80), fake("small", 12, 80)};
    rank_sweep(two);
    CHECK(two[0].architecture == "small");
}

TEST_CASE("capacity is constant across saturated widths in a sweep", "[runner][sweep]") {
    const auto rows = sweep(base_spec({3, 1}), {parse_sweep_axis("layer2=1..5")}, 2, 2);
    REQUIRE(rows.size() == 5);
    std::map<std::string, std::int64_t> by_arch;
    for (const auto& r : rows) by_arch[r.architecture] = r.measurements.mec_bits;
    CHECK(by_arch["2-3-3-1"] == 15);
    CHECK(by_arch["2-3-4-1"] == 15);
    CHECK(by_arch["2-3-5-1"] == 15);
    CHECK(by_arch["2-3-2-1"] == 14);
    CHECK(by_arch["2-3-1-1"] == 13);
}

TEST_CASE("a one-row sweep equals a plain run", "[runner][sweep]") {
    const ExperimentSpec s = base_spec({4});
    const RunReport single = run(s, 15);
    const auto rows = sweep(s, {parse_sweep_axis("layer1=4")}, 15, 1);
    REQUIRE(rows.size() == 1);
    CHECK(format_reports(rows, OutputFormat::jsonl) == format_reports({single}, OutputFormat::jsonl));
}

TEST_CASE("parallel and serial sweeps agree", "[runner][sweep]") {
    const ExperimentSpec s = base_spec({2, 2});
    const std::vector<SweepAxis> axes{parse_sweep_axis("layer1=1..3")};
    CHECK(format_reports(sweep(s, axes, 5, 1), OutputFormat::csv) ==
          format_reports(sweep(s, axes, 5, 3), OutputFormat::csv));
}

TEST_CASE("diverging rows are reported, not fatal", "[runner][sweep]") {
    ExperimentSpec s = base_spec({2});
    s.topology = Topology::dense({Feature::x1_squared, Feature::x2_squared}, {2}, Activation::linear, Activation::linear);
    s.config.learning_rate = 10.0;
    s.config.batch_size = 1;
    const auto rows = sweep(s, {parse_sweep_axis("layer1=1,2")}, 50, 1);
    REQUIRE(rows.size() == 2);
    for (const auto& r : rows) CHECK(r.error.has_value());
    CHECK_THROWS_AS(run(s, 50), DivergenceError);
}

TEST_CASE("report formats", "[runner][format]") {
    const RunReport r = run(base_spec({3}), 5);

    const json j = json::parse(lines_of(format_reports({r}, OutputFormat::jsonl)).at(0));
    for (const char* key : {"mec_bits", "demand_bits", "accuracy", "acc_positive", "acc_negative", "generalization"})
        CHECK(j.contains(key));
    CHECK(j["mec_bits"] == 12);
    CHECK(j["architecture"] == "2-3-1");
    CHECK(j["accuracy"].get<double>() == r.test.accuracy);

    const auto csv = lines_of(format_reports({r, r}, OutputFormat::csv));
    REQUIRE(csv.size() == 3);
    CHECK(csv[0] == kCsvColumns);
    CHECK(csv[1] == csv[2]);
    CHECK(csv[1].starts_with("2-3-1,5,12,"));

    const auto table = lines_of(format_reports({r}, OutputFormat::table));
    REQUIRE(table.size() == 2);
    CHECK_THAT(table[0], Catch::Matchers::ContainsSubstring("MEC"));
    CHECK_THAT(table[1], Catch::Matchers::ContainsSubstring("2-3-1"));

    CHECK_THROWS_AS(output_format_from_name("xml"), ValidationError);
}

TEST_CASE("csv rows parse back to the reported values", "[runner][format]") {
    const RunReport r = run(base_spec({3, 2}), 8);
    const auto csv = lines_of(format_reports({r}, OutputFormat::csv));
    std::vector<std::string> cells;
    std::stringstream ss(csv.at(1));
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    REQUIRE(cells.size() == 13);
    CHECK(std::stoll(cells[2]) == r.measurements.mec_bits);
    CHECK(std::stoll(cells[3]) == r.measurements.demand_bits);
    CHECK(std::stod(cells[4]) == r.test.accuracy);
    CHECK(std::stod(cells[8]) == r.measurements.generalization->value);
    CHECK(std::stod(cells[12]) == r.test.mean_loss);
}
