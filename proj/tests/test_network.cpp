#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "capmeter/network.hpp"

using namespace capmeter;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const FeatureSelection kXY{Feature::x1, Feature::x2};
const NodeId kX1 = NodeId::input(Feature::x1);
const NodeId kX2 = NodeId::input(Feature::x2);

NetworkState with_params(const Topology& t, std::vector<double> weights, std::vector<double> biases) {
    Params p = params_layout(t);
    p.weights = std::move(weights);
    p.biases = std::move(biases);
    return NetworkState(t, std::move(p));
}

NetworkState zeroed(const Topology& t) {
    return NetworkState(t, params_layout(t));
}

FeatureView one_row(double a, double b, int y) { return FeatureView(2, {a, b}, {y}); }

FeatureView random_view(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(rows * cols);
    std::vector<int> y(rows);
    for (double& x : v) x = u(rng);
    for (int& l : y) l = rng() % 2 ? 1 : -1;
    return FeatureView(cols, std::move(v), std::move(y));
}

}  // namespace

TEST_CASE("parameter initialisation", "[network][init]") {
    const Topology t = Topology::dense(kXY, {2});
    const Params a = init_params(t, 7);
    CHECK(a.weights.size() == 6);
    CHECK(a.biases.size() == 3);
    for (double w : a.weights) {
        CHECK(w >= -0.5);
        CHECK(w < 0.5);
    }
    for (double b : a.biases) CHECK(b == 0.1);
    CHECK(init_params(t, 7) == a);
    CHECK(init_params(t, 8) != a);

    const Topology off = apply_edit(t, edit::ToggleEdge{kX1, NodeId::neuron(1, 0)});
    const Params masked = init_params(off, 42);
    CHECK(masked.weights.size() == 5);
    CHECK_FALSE(masked.weight(kX1, NodeId::neuron(1, 0)).has_value());
}

TEST_CASE("state rejects mismatched parameters", "[network]") {
    const Topology t = Topology::dense(kXY, {2});
    Params p = init_params(t, 1);
    p.weights.pop_back();
    CHECK_THROWS_AS(NetworkState(t, p), ValidationError);
    Params q = init_params(t, 1);
    q.biases[0] = std::nan("");
    CHECK_THROWS_AS(NetworkState(t, q), ValidationError);
    const Topology off = apply_edit(t, edit::ToggleEdge{kX1, NodeId::neuron(1, 0)});
    CHECK_THROWS_AS(NetworkState(off, init_params(t, 1)), ValidationError);
}

TEST_CASE("forward pass by hand", "[network][forward]") {
    const Topology single = Topology::dense(kXY, {});

    SECTION("zero network predicts zero") {
        const NetworkState s = zeroed(Topology::default_network());
        for (double x : {-3.0, 0.0, 2.5}) CHECK(forward(s, std::vector{x, -x}).prediction == 0.0);
    }
    SECTION("single tanh neuron") {
        const NetworkState s = with_params(single, {0.5, 0.5}, {0.0});
        CHECK_THAT(forward(s, std::vector{1.0, 1.0}).prediction, WithinAbs(0.76159, 1e-5));
    }
    SECTION("both inputs masked leaves act(bias)") {
        Topology t = apply_edit(single, edit::ToggleEdge{kX1, NodeId::neuron(1, 0)});
        t = apply_edit(t, edit::ToggleEdge{kX2, NodeId::neuron(1, 0)});
        const NetworkState s = with_params(t, {}, {0.2});
        for (double x : {-5.0, 0.0, 1.0, 6.0})
            CHECK_THAT(forward(s, std::vector{x, 2 * x}).prediction, WithinAbs(0.19738, 1e-5));
    }
    SECTION("neuron with no incoming edges computes act(bias)") {
        Topology t = Topology::dense(kXY, {2});
        t = apply_edit(t, edit::RemoveEdge{kX1, NodeId::neuron(1, 0)});
        t = apply_edit(t, edit::RemoveEdge{kX2, NodeId::neuron(1, 0)});
        const NetworkState s = NetworkState::initialized(t, 3);
        const double a = forward(s, std::vector{1.0, 2.0}).activations[0];
        const double b = forward(s, std::vector{-4.0, 0.5}).activations[0];
        CHECK(a == b);
        CHECK(a == std::tanh(0.1));
    }
    SECTION("dimension mismatch") {
        const NetworkState s = NetworkState::initialized(single, 1);
        CHECK_THROWS_AS(forward(s, std::vector{1.0}), ShapeError);
        CHECK_THROWS_AS(forward(s, std::vector{1.0, 2.0, 3.0}), ShapeError);
    }
    SECTION("activations are reported per neuron") {
        const NetworkState s = NetworkState::initialized(Topology::default_network(), 5);
        const ForwardResult r = forward(s, std::vector{0.3, -0.7});
        REQUIRE(r.activations.size() == 7);
        CHECK(r.activations.back() == r.prediction);
    }
}

TEST_CASE("linear neuron gradient step by hand", "[network][train]") {
    const Topology t = Topology::dense(kXY, {}, Activation::tanh, Activation::linear);
    const NetworkState s = with_params(t, {1.0, 0.0}, {0.0});
    TrainingConfig cfg;
    cfg.learning_rate = 0.1;
    const StepResult r = train_step(s, one_row(1.0, 0.0, -1), cfg);
    CHECK_THAT(*r.state.params().weight(kX1, NodeId::neuron(1, 0)), WithinAbs(0.8, 1e-15));
    CHECK(*r.state.params().weight(kX2, NodeId::neuron(1, 0)) == 0.0);
    CHECK_THAT(*r.state.params().bias(NodeId::neuron(1, 0)), WithinAbs(-0.2, 1e-15));
    CHECK(r.batch_loss == 2.0);
    CHECK(r.state.step() == 1);
    CHECK(s.step() == 0);
}

TEST_CASE("regularisation terms", "[network][train]") {
    const Topology t = Topology::dense(kXY, {}, Activation::tanh, Activation::linear);
    // x = 0 and prediction == label: the loss gradient is exactly zero.
    const NetworkState s = with_params(t, {0.4, -0.3}, {1.0});
    const FeatureView batch = one_row(0.0, 0.0, 1);
    TrainingConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.regularization_rate = 0.1;

    cfg.regularization = Regularization::l2;
    StepResult r = train_step(s, batch, cfg);
    CHECK_THAT(r.state.params().weights[0], WithinRel(0.4 * 0.99, 1e-15));
    CHECK_THAT(r.state.params().weights[1], WithinRel(-0.3 * 0.99, 1e-15));
    CHECK(r.state.params().biases[0] == 1.0);

    cfg.regularization = Regularization::l1;
    r = train_step(s, batch, cfg);
    CHECK_THAT(r.state.params().weights[0], WithinAbs(0.39, 1e-15));
    CHECK_THAT(r.state.params().weights[1], WithinAbs(-0.29, 1e-15));
    CHECK(r.state.params().biases[0] == 1.0);

    cfg.regularization = Regularization::none;
    CHECK(train_step(s, batch, cfg).state.params() == s.params());
}

TEST_CASE("tiny learning rate barely moves the weights", "[network][train]") {
    std::mt19937_64 rng(11);
    const FeatureView data = random_view(rng, 20, 2);
    const NetworkState s = NetworkState::initialized(Topology::default_network(), 4);
    TrainingConfig cfg;
    cfg.learning_rate = 1e-12;
    const StepResult r = train_step(s, data, cfg);
    for (std::size_t i = 0; i < s.params().weights.size(); ++i)
        CHECK(std::abs(r.state.params().weights[i] - s.params().weights[i]) < 1e-10);
}

TEST_CASE("config validation", "[network][config]") {
    TrainingConfig c;
    CHECK_NOTHROW(c.validate());
    c.learning_rate = 0.0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c.learning_rate = 11.0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = {};
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = {};
    c.regularization_rate = -0.1;
    CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("divergence is reported without touching the state", "[network][train]") {
    const Topology t = Topology::dense(kXY, {}, Activation::tanh, Activation::linear);
    NetworkState s = with_params(t, {0.5, 0.5}, {0.0});
    s.set_step(41);
    TrainingConfig cfg;
    try {
        train_step(s, one_row(1e200, 1e200, 1), cfg);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.step() == 42);
    }
    NetworkState copy = s;
    CHECK_THROWS_AS(train_epoch(copy, one_row(1e200, 1e200, 1), cfg), DivergenceError);
    CHECK(copy.params() == s.params());
    CHECK(copy.step() == 41);
}

TEST_CASE("training is deterministic", "[network][train]") {
    std::mt19937_64 rng(5);
    const FeatureView data = random_view(rng, 57, 2);
    TrainingConfig cfg;
    cfg.batch_size = 8;
    cfg.regularization = Regularization::l1;
    cfg.regularization_rate = 0.001;
    NetworkState a = NetworkState::initialized(Topology::default_network(), 9);
    NetworkState b = NetworkState::initialized(Topology::default_network(), 9);
    for (int e = 0; e < 20; ++e) {
        CHECK(train_epoch(a, data, cfg) == train_epoch(b, data, cfg));
    }
    CHECK(a.params() == b.params());
    CHECK(a.step() == 20 * 8);
}

TEST_CASE("disabled edge behaves like a zero weight", "[network][mask]") {
    std::mt19937_64 rng(21);
    const FeatureView data = random_view(rng, 10, 2);
    const Topology full = Topology::dense(kXY, {3, 2});
    const NodeId src = NodeId::neuron(1, 1), dst = NodeId::neuron(2, 0);
    const Topology masked = apply_edit(full, edit::ToggleEdge{src, dst});

    const NetworkState m = NetworkState::initialized(masked, 77);
    NetworkState z(full, carry_over_params(full, m.params(), 77));
    *z.mutable_params().weight_ptr(src, dst) = 0.0;

    for (std::size_t r = 0; r < data.rows(); ++r)
        CHECK(forward(m, data.row(r)).prediction == forward(z, data.row(r)).prediction);

    TrainingConfig cfg;
    const StepResult sm = train_step(m, data, cfg);
    const StepResult sz = train_step(z, data, cfg);
    CHECK(sm.batch_loss == sz.batch_loss);
    for (std::size_t i = 0; i < sm.state.params().edge_keys.size(); ++i) {
        const EdgeKey k = sm.state.params().edge_keys[i];
        CHECK(sm.state.params().weights[i] == *sz.state.params().weight(k.source, k.target));
    }
    CHECK(sm.state.params().biases == sz.state.params().biases);
}

TEST_CASE("analytic gradient matches finite differences", "[network][gradient]") {
    std::mt19937_64 rng(3);
    const FeatureView data = random_view(rng, 6, 3);
    const FeatureSelection three{Feature::x1, Feature::x2, Feature::x1_squared};
    for (Activation act : {Activation::tanh, Activation::sigmoid, Activation::linear}) {
        Topology t = Topology::dense(three, {3, 2}, act, Activation::tanh);
        t = apply_edit(t, edit::AddSkipEdge{NodeId::input(Feature::x2), NodeId::neuron(3, 0)});
        const NetworkState s = NetworkState::initialized(t, 12);
        std::vector<std::size_t> rows{0, 1, 2, 3, 4, 5};
        const Gradient g = compute_gradient(s, data, rows);
        const double h = 1e-6;
        for (std::size_t i = 0; i < g.weights.size(); ++i) {
            NetworkState plus = s, minus = s;
            plus.mutable_params().weights[i] += h;
            minus.mutable_params().weights[i] -= h;
            const double numeric =
                (compute_gradient(plus, data, rows).loss - compute_gradient(minus, data, rows).loss) / (2 * h);
            CHECK_THAT(g.weights[i], WithinAbs(numeric, 1e-7));
        }
        for (std::size_t i = 0; i < g.biases.size(); ++i) {
            NetworkState plus = s, minus = s;
            plus.mutable_params().biases[i] += h;
            minus.mutable_params().biases[i] -= h;
            const double numeric =
                (compute_gradient(plus, data, rows).loss - compute_gradient(minus, data, rows).loss) / (2 * h);
            CHECK_THAT(g.biases[i], WithinAbs(numeric, 1e-7));
        }
    }
}

TEST_CASE("evaluation counts", "[network][evaluate]") {
    // All-zero parameters predict 0, which counts as +1.
    const NetworkState s = zeroed(Topology::dense(kXY, {2}));
    std::vector<double> x(200, 0.5);
    std::vector<int> y(100, 1);
    std::fill(y.begin() + 90, y.end(), -1);
    const EvalReport r = evaluate(s, FeatureView(2, x, y));
    CHECK(r.total == 100);
    CHECK(r.correct_count == 90);
    CHECK(r.accuracy == 0.9);
    CHECK(r.acc_positive == 1.0);
    CHECK(r.acc_negative == 0.0);
    CHECK_FALSE(r.acc_positive_undefined);
    CHECK(r.mean_loss == Catch::Approx((90 * 0.5 + 10 * 0.5) / 100));

    const EvalReport all_pos = evaluate(s, FeatureView(2, std::vector<double>(10, 1.0), std::vector<int>(5, 1)));
    CHECK(all_pos.accuracy == 1.0);
    CHECK(all_pos.acc_negative_undefined);
    CHECK(all_pos.acc_negative == 1.0);

    CHECK(predicted_class(0.0) == 1);
    CHECK(predicted_class(-1e-300) == -1);
    CHECK_THROWS_AS(evaluate(s, FeatureView(2, {}, {})), EmptyDatasetError);
    CHECK_THROWS_AS(evaluate(s, FeatureView(1, {1.0}, {1})), ShapeError);
}

TEST_CASE("parameters survive edits", "[network][edit]") {
    const Topology t = Topology::dense(kXY, {3});
    const Params before = init_params(t, 1);
    const Topology wider = apply_edit(t, edit::SetWidth{1, 5});
    const Params after = carry_over_params(wider, before, 99);
    for (std::size_t i = 0; i < before.edge_keys.size(); ++i) {
        const EdgeKey k = before.edge_keys[i];
        CHECK(after.weight(k.source, k.target) == before.weights[i]);
    }
    CHECK(after.weights.size() == 5 * 2 + 5);
}
