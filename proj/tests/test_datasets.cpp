#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "capmeter/csv.hpp"
#include "capmeter/dataset.hpp"

using namespace capmeter;

namespace {

std::size_t count_label(const Dataset& ds, int y) {
    return static_cast<std::size_t>(
        std::count_if(ds.points.begin(), ds.points.end(), [&](const RawPoint& p) { return p.label == y; }));
}

bool inside_domain(const Dataset& ds) {
    return std::all_of(ds.points.begin(), ds.points.end(), [](const RawPoint& p) {
        return std::abs(p.x1) <= 6.0 && std::abs(p.x2) <= 6.0;
    });
}

}  // namespace

TEST_CASE("generators are seeded and balanced", "[datasets][generate]") {
    for (DataSource kind : {DataSource::circle, DataSource::xor_quadrants, DataSource::gauss, DataSource::spiral}) {
        CAPTURE(data_source_name(kind));
        const Dataset a = generate(kind, 200, 0.2, 7);
        CHECK(a == generate(kind, 200, 0.2, 7));
        CHECK(a.points != generate(kind, 200, 0.2, 8).points);
        CHECK(a.size() == 200);
        CHECK(inside_domain(a));
        if (kind != DataSource::xor_quadrants) {
            CHECK(count_label(a, 1) == 100);
            CHECK(count_label(a, -1) == 100);
        }
    }
}

TEST_CASE("circle classes are separated by radius", "[datasets][generate]") {
    const Dataset ds = generate(DataSource::circle, 200, 0.0, 3);
    CHECK(count_label(ds, 1) == 100);
    for (const RawPoint& p : ds.points) {
        const double r = std::hypot(p.x1, p.x2);
        if (p.label > 0) CHECK(r < 2.5 + 1e-12);
        else CHECK(r >= 3.5 - 1e-12);
    }
}

TEST_CASE("xor labels follow the quadrant sign", "[datasets][generate]") {
    const Dataset ds = generate(DataSource::xor_quadrants, 400, 0.0, 5);
    for (const RawPoint& p : ds.points) CHECK(p.label == (p.x1 * p.x2 >= 0 ? 1 : -1));
    CHECK(count_label(ds, 1) == 200);
}

TEST_CASE("generator argument checks", "[datasets][generate]") {
    CHECK_THROWS_AS(generate(DataSource::circle, 3, 0.0, 1), ValidationError);
    CHECK_THROWS_AS(generate(DataSource::circle, 10, 0.6, 1), ValidationError);
    CHECK_THROWS_AS(generate(DataSource::circle, 10, -0.1, 1), ValidationError);
    CHECK_THROWS_AS(generate(DataSource::uploaded, 10, 0.0, 1), ValidationError);
    CHECK_THROWS_AS(data_source_from_name("moons"), ValidationError);
    CHECK(data_source_from_name("xor") == DataSource::xor_quadrants);
}

TEST_CASE("feature transforms", "[datasets][features]") {
    const std::vector<RawPoint> pt{{1.0, 2.0, 1}};
    FeatureView v = apply_features(pt, {Feature::x1, Feature::x2});
    CHECK(v.cols() == 2);
    CHECK(v.row(0)[0] == 1.0);
    CHECK(v.row(0)[1] == 2.0);

    v = apply_features(pt, {Feature::x1_times_x2, Feature::x2_squared});
    CHECK(v.row(0)[0] == 4.0);  // x2^2 comes first in canonical order
    CHECK(v.row(0)[1] == 2.0);
    CHECK(*FeatureSelection({Feature::x1_times_x2, Feature::x2_squared}).column_of(Feature::x1_times_x2) == 1);

    const std::vector<RawPoint> half_pi{{std::numbers::pi / 2, 0.0, -1}};
    v = apply_features(half_pi, {Feature::sin_x1});
    CHECK(v.row(0)[0] == Catch::Approx(1.0).margin(1e-15));
    CHECK(v.label(0) == -1);

    v = apply_features(pt, FeatureSelection::all());
    CHECK(v.cols() == 7);
    CHECK_THROWS_AS(apply_features(pt, FeatureSelection{}), ValidationError);
}

TEST_CASE("feature names", "[datasets][features]") {
    for (int i = 0; i < kFeatureCount; ++i) {
        const auto f = static_cast<Feature>(i);
        CHECK(feature_from_name(feature_name(f)) == f);
    }
    CHECK_FALSE(feature_from_name("x3").has_value());
}

TEST_CASE("split", "[datasets][split]") {
    const Dataset ds = generate(DataSource::gauss, 100, 0.1, 2);
    auto [train, test] = split(ds, 0.5, 9);
    CHECK(train.size() == 50);
    CHECK(test.size() == 50);
    auto [train2, test2] = split(ds, 0.5, 9);
    CHECK(train == train2);
    CHECK(test == test2);

    const Dataset ten = generate(DataSource::gauss, 10, 0.0, 2);
    auto [tr, te] = split(ten, 0.7, 1);
    CHECK(tr.size() == 7);
    CHECK(te.size() == 3);

    // every point lands on exactly one side
    std::vector<RawPoint> joined = train.points;
    joined.insert(joined.end(), test.points.begin(), test.points.end());
    auto by_xy = [](const RawPoint& a, const RawPoint& b) { return std::tie(a.x1, a.x2) < std::tie(b.x1, b.x2); };
    std::vector<RawPoint> original = ds.points;
    std::sort(joined.begin(), joined.end(), by_xy);
    std::sort(original.begin(), original.end(), by_xy);
    CHECK(joined == original);

    CHECK_THROWS_AS(split(ds, 0.05, 1), ValidationError);
    CHECK_THROWS_AS(split(ds, 0.95, 1), ValidationError);
    const Dataset tiny = generate(DataSource::gauss, 4, 0.0, 2);
    CHECK_THROWS_AS(split(tiny, 0.1, 1), ValidationError);
}

TEST_CASE("csv labels and columns", "[datasets][csv]") {
    const Dataset ds = parse_csv("x1,x2,label\n0,0,1\n1,1,0\n2,0,-1\n0,2,+1\n");
    REQUIRE(ds.size() == 4);
    CHECK(ds.labels() == std::vector<int>{1, -1, -1, 1});
    CHECK(ds.source == DataSource::uploaded);

    const Dataset reordered = parse_csv("\xEF\xBB\xBFlabel,x2,x1\r\n1,0,0\r\n\r\n0,1,1\r\n-1,0,2\r\n1,2,0\r\n");
    CHECK(reordered == ds);
}

TEST_CASE("csv rejects bad input with a line number", "[datasets][csv]") {
    auto line_of = [](std::string_view text) -> std::size_t {
        try {
            parse_csv(text);
        } catch (const ParseError& e) {
            return e.row();
        }
        return 999;
    };
    CHECK(line_of("x1,x2,label\n0,0,1\n1,1,2\n2,2,1\n3,3,-1\n") == 3);
    CHECK(line_of("x1,x2,label\n0,0,1\n1,abc,1\n2,2,1\n3,3,-1\n") == 3);
    CHECK(line_of("x1,x2,label\n0,0,1\n1,1\n2,2,1\n3,3,-1\n") == 3);
    CHECK(line_of("x1,x2,label\n0,nan,1\n1,1,-1\n2,2,1\n3,3,-1\n") == 2);
    CHECK(line_of("x1,label\n0,1\n") == 1);
    CHECK(line_of("x1,x2,x3,label\n0,0,0,1\n") == 1);
    CHECK_THROWS_AS(parse_csv(""), ParseError);
    CHECK_THROWS_WITH(parse_csv("x1,x2,label\n0,0,1\n1,1,-1\n"), Catch::Matchers::ContainsSubstring("at least 4"));
    CHECK_THROWS_WITH(parse_csv("x1,x2,label\n0,0,1\n1,1,1\n2,2,1\n3,3,1\n"),
                      Catch::Matchers::ContainsSubstring("single class"));
    try {
        parse_csv("x1,x2,label\n0,0,1\n1,1,2\n2,2,1\n3,3,-1\n");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).starts_with("line 3:"));
    }
}

TEST_CASE("csv rescales each axis onto [-6, 6]", "[datasets][csv]") {
    const Dataset ds = parse_csv("x1,x2,label\n0,5,1\n25,5,-1\n50,5,1\n100,5,-1\n");
    CHECK(ds.points[0].x1 == -6.0);
    CHECK(ds.points[3].x1 == 6.0);
    CHECK(ds.points[1].x1 == Catch::Approx(-3.0));
    CHECK(ds.points[2].x1 == Catch::Approx(0.0).margin(1e-12));
    for (const RawPoint& p : ds.points) CHECK(p.x2 == 0.0);  // degenerate axis
}

TEST_CASE("csv round trip", "[datasets][csv]") {
    Dataset ds = generate(DataSource::spiral, 60, 0.3, 4);
    // Pin the bounding box so the rescale is the identity.
    ds.points.push_back({-6.0, -6.0, 1});
    ds.points.push_back({6.0, 6.0, -1});
    const Dataset back = parse_csv(serialize_csv(ds));
    CHECK(back.points == ds.points);
    CHECK(serialize_csv(back) == serialize_csv(ds));
}
