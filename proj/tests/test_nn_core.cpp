#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "h2t/errors.hpp"
#include "h2t/gradcheck.hpp"
#include "h2t/graph.hpp"
#include "h2t/model.hpp"
#include "h2t/optim.hpp"
#include "h2t/rng.hpp"

using namespace h2t;

namespace {

Tensor random_tensor(const std::vector<int64_t>& shape, Rng& rng, double scale = 1.0) {
    Tensor t = Tensor::zeros(shape);
    for (float& v : t.data) v = static_cast<float>(rng.normal() * scale);
    return t;
}

std::vector<int> random_labels(int64_t batch, int64_t classes, Rng& rng) {
    std::vector<int> y(static_cast<size_t>(batch));
    for (int& v : y) v = static_cast<int>(rng.uniform_int(classes));
    return y;
}

} // namespace

TEST_CASE("tensor shape bookkeeping") {
    Tensor t = Tensor::zeros({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.shape_str() == "(2, 3)");
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0f}), ShapeError);
}

TEST_CASE("mlp with identity weights applies relu") {
    // single layer, identity weights, zero bias: features = relu(x)
    BackboneSpec spec;
    spec.kind = BackboneKind::Mlp;
    spec.in_dims = 2;
    spec.hidden = {};
    spec.feature_dim = 2;
    ModelState m = init_model(spec, 2, 7);
    m.backbone.at("layer0/W").value = Tensor({2, 2}, {1, 0, 0, 1});

    Graph g;
    ModelBinding b = bind_model(g, m);
    Tensor x({1, 2}, {1.0f, -2.0f});
    BackboneOut out = backbone_forward(g, b, m, x);
    CHECK(g.value(out.pooled).at(0, 0) == 1.0f);
    CHECK(g.value(out.pooled).at(0, 1) == 0.0f);
    CHECK(g.value(out.feature_map).shape == std::vector<int64_t>{1, 2, 1, 1});
    CHECK(g.value(out.feature_map).at(0) == 1.0f);
    CHECK(g.value(out.feature_map).at(1) == 0.0f);
}

TEST_CASE("valid-pad conv of all ones sums the window") {
    Graph g;
    int x = g.leaf(Tensor::full({1, 1, 3, 3}, 1.0f), false);
    int k = g.leaf(Tensor::full({1, 1, 3, 3}, 1.0f), false);
    int y = g.conv2d(x, k, -1, 0);
    CHECK(g.value(y).shape == std::vector<int64_t>{1, 1, 1, 1});
    CHECK(g.value(y).at(0) == 9.0f);
}

TEST_CASE("pooled feature equals spatial mean of the map") {
    BackboneSpec spec;
    spec.kind = BackboneKind::Mlp;
    spec.in_dims = 4;
    spec.hidden = {8};
    spec.feature_dim = 8;
    ModelState m = init_model(spec, 3, 11);
    Rng rng(3);
    Tensor x = random_tensor({4, 4}, rng);

    Graph g;
    ModelBinding b = bind_model(g, m);
    BackboneOut out = backbone_forward(g, b, m, x);
    CHECK(g.value(out.pooled).shape == std::vector<int64_t>{4, 8});
    // w_F = h_F = 1, so pooling is exact identity
    for (int64_t i = 0; i < 4; ++i)
        for (int64_t d = 0; d < 8; ++d)
            CHECK(g.value(out.pooled).at(i, d) == g.value(out.feature_map).at(i * 8 + d));
}

TEST_CASE("backbone forward is deterministic") {
    BackboneSpec spec;
    spec.kind = BackboneKind::TinyConv;
    spec.in_channels = 1;
    spec.in_h = 8;
    spec.in_w = 8;
    spec.conv1_channels = 4;
    spec.feature_dim = 6;
    spec.in_dims = 64;
    ModelState m = init_model(spec, 4, 5);
    Rng rng(9);
    Tensor x = random_tensor({3, 64}, rng);

    Tensor first, second;
    {
        Graph g;
        ModelBinding b = bind_model(g, m);
        first = g.value(backbone_forward(g, b, m, x).feature_map);
    }
    {
        Graph g;
        ModelBinding b = bind_model(g, m);
        second = g.value(backbone_forward(g, b, m, x).feature_map);
    }
    CHECK(first.bit_equal(second));
}

TEST_CASE("backbone rejects wrong input width") {
    BackboneSpec spec;
    spec.in_dims = 4;
    ModelState m = init_model(spec, 2, 1);
    Graph g;
    ModelBinding b = bind_model(g, m);
    CHECK_THROWS_AS(backbone_forward(g, b, m, Tensor::zeros({2, 5})), ShapeError);
}

TEST_CASE("classifier logits are plain dot products") {
    BackboneSpec spec;
    spec.in_dims = 2;
    spec.hidden = {};
    spec.feature_dim = 2;
    ModelState m = init_model(spec, 2, 3);
    // w_0 = (1, 1), w_1 = (1, -1), stored column-wise
    m.classifier.at("W").value = Tensor({2, 2}, {1, 1, 1, -1});

    Graph g;
    ModelBinding b = bind_model(g, m);
    int f = g.leaf(Tensor({1, 2}, {2, 3}), false);
    int z = classifier_forward(g, b, m, f);
    CHECK(g.value(z).at(0, 0) == 5.0f);
    CHECK(g.value(z).at(0, 1) == -1.0f);
}

TEST_CASE("classifier with identity weights passes features through") {
    BackboneSpec spec;
    spec.in_dims = 3;
    spec.hidden = {};
    spec.feature_dim = 3;
    ModelState m = init_model(spec, 3, 3);
    m.classifier.at("W").value = Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Graph g;
    ModelBinding b = bind_model(g, m);
    int f = g.leaf(Tensor({1, 3}, {0.5f, -1.0f, 2.0f}), false);
    int z = classifier_forward(g, b, m, f);
    CHECK(g.value(z).at(0, 0) == 0.5f);
    CHECK(g.value(z).at(0, 1) == -1.0f);
    CHECK(g.value(z).at(0, 2) == 2.0f);
}

TEST_CASE("classifier output shape is (batch, classes)") {
    BackboneSpec spec;
    spec.in_dims = 5;
    spec.hidden = {6};
    spec.feature_dim = 5;
    ModelState m = init_model(spec, 4, 3);
    Rng rng(1);
    Graph g;
    ModelBinding b = bind_model(g, m);
    int f = g.leaf(random_tensor({2, 5}, rng), false);
    int z = classifier_forward(g, b, m, f);
    CHECK(g.value(z).shape == std::vector<int64_t>{2, 4});
}

TEST_CASE("cross entropy on uniform logits is ln 2") {
    Graph g;
    int z = g.leaf(Tensor({1, 2}, {0, 0}), false);
    Graph::Loss loss = g.softmax_xent(z, {0});
    CHECK(loss.value == doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("cross entropy is stable on saturated logits") {
    Graph g;
    int z = g.leaf(Tensor({1, 2}, {1000, 0}), false);
    Graph::Loss loss = g.softmax_xent(z, {0});
    CHECK(std::isfinite(loss.value));
    CHECK(loss.value == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("cross entropy matches the direct formula") {
    Graph g;
    int z = g.leaf(Tensor({1, 3}, {1, 2, 3}), false);
    Graph::Loss loss = g.softmax_xent(z, {2});
    // -3 + log(e^1 + e^2 + e^3), evaluated independently
    const double expected =
        -3.0 + std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
    CHECK(loss.value == doctest::Approx(expected).epsilon(1e-9));
    CHECK(loss.value == doctest::Approx(0.4076059644).epsilon(1e-6));
}

TEST_CASE("cross entropy rejects out-of-range labels") {
    Graph g;
    int z = g.leaf(Tensor({1, 2}, {0, 0}), false);
    CHECK_THROWS_AS(g.softmax_xent(z, {2}), ValidationError);
}

TEST_CASE("cross entropy is invariant to constant logit shifts") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor z = random_tensor({3, 5}, rng, 2.0);
        Tensor shifted = z;
        const float c = static_cast<float>(rng.uniform(-50.0, 50.0));
        for (int64_t b = 0; b < 3; ++b)
            for (int64_t k = 0; k < 5; ++k) shifted.at(b, k) += c;
        std::vector<int> y = random_labels(3, 5, rng);

        Graph g;
        Graph::Loss a = g.softmax_xent(g.leaf(z, false), y);
        Graph::Loss b2 = g.softmax_xent(g.leaf(shifted, false), y);
        CHECK(a.value == doctest::Approx(b2.value).epsilon(1e-5));
    }
}

TEST_CASE("plain sgd step") {
    ParameterSet ps;
    ps.add("w", Tensor({1}, {1.0f}));
    ps.at("w").grad = Tensor({1}, {2.0f});
    sgd_step(ps, 0.1, 0.0);
    CHECK(ps.at("w").value.at(0) == doctest::Approx(0.8f));
    CHECK(ps.at("w").grad.at(0) == 0.0f); // zeroed afterwards
}

TEST_CASE("frozen parameters are bit-unchanged") {
    ParameterSet ps;
    ps.add("w", Tensor({2}, {0.25f, -1.5f}), false);
    ps.at("w").grad = Tensor({2}, {3.0f, 4.0f});
    sgd_step(ps, 0.5, 0.9);
    CHECK(ps.at("w").value.at(0) == 0.25f);
    CHECK(ps.at("w").value.at(1) == -1.5f);
    CHECK(ps.at("w").momentum.at(0) == 0.0f);
    CHECK(ps.at("w").grad.at(0) == 0.0f);
}

TEST_CASE("momentum recurrence unrolled by hand") {
    // buf1 = 1, v1 = -1; buf2 = 0.9 + 1 = 1.9, v2 = -2.9
    ParameterSet ps;
    ps.add("w", Tensor({1}, {0.0f}));
    ps.at("w").grad.at(0) = 1.0f;
    sgd_step(ps, 1.0, 0.9);
    ps.at("w").grad.at(0) = 1.0f;
    sgd_step(ps, 1.0, 0.9);
    CHECK(ps.at("w").value.at(0) == doctest::Approx(-2.9f));
}

TEST_CASE("noop step reproduces the parameter set bit-exactly") {
    ParameterSet ps;
    Rng rng(23);
    ps.add("a", random_tensor({3, 4}, rng), false);
    ps.add("b", random_tensor({7}, rng), false);
    const Tensor a = ps.at("a").value;
    const Tensor b = ps.at("b").value;
    const Tensor am = ps.at("a").momentum;
    sgd_step(ps, 0.7, 0.0);
    CHECK(ps.at("a").value.bit_equal(a));
    CHECK(ps.at("b").value.bit_equal(b));
    CHECK(ps.at("a").momentum.bit_equal(am));
}

TEST_CASE("finite differences confirm analytic gradients for both backbones") {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        BackboneSpec spec;
        ModelState m = [&] {
            if (trial % 2 == 0) {
                spec.kind = BackboneKind::Mlp;
                spec.in_dims = 6;
                spec.hidden = {7};
                spec.feature_dim = 5;
            } else {
                spec.kind = BackboneKind::TinyConv;
                spec.in_channels = 1;
                spec.in_h = 8;
                spec.in_w = 8;
                spec.in_dims = 64;
                spec.conv1_channels = 3;
                spec.feature_dim = 4;
            }
            return init_model(spec, 4, 100 + static_cast<uint64_t>(trial));
        }();
        Tensor x = random_tensor({4, spec.input_width()}, rng);
        std::vector<int> y = random_labels(4, 4, rng);
        const double err = finite_diff_check(m, x, y);
        CHECK(err < 1e-3);
    }
}

TEST_CASE("finite differences on an effectively linear path") {
    // no hidden layer and strictly positive activations: the relu is locally
    // linear everywhere the checker probes
    BackboneSpec spec;
    spec.in_dims = 4;
    spec.hidden = {};
    spec.feature_dim = 4;
    ModelState m = init_model(spec, 3, 2);
    for (float& v : m.backbone.at("layer0/W").value.data) v = std::abs(v) + 0.1f;
    Tensor x = Tensor::full({2, 4}, 1.0f);
    const double err = finite_diff_check(m, x, {0, 2});
    CHECK(err < 1e-3);
}

TEST_CASE("gradient of a constant loss is exactly zero") {
    // loss reads only half the logits; the unused classifier column gets
    // zero gradient and finite differences agree exactly
    BackboneSpec spec;
    spec.in_dims = 3;
    spec.hidden = {};
    spec.feature_dim = 3;
    ModelState m = init_model(spec, 2, 3);
    Graph g;
    ModelBinding b = bind_model(g, m, true);
    Tensor x({1, 3}, {0.0f, 0.0f, 0.0f});
    Graph::Loss loss = model_loss(g, b, m, x, {0});
    g.backward(loss.id);
    // x = 0 and relu(0) = 0: every backbone weight gradient must be zero
    const Tensor& gw = g.grad(b.backbone_ids.at("layer0/W"));
    for (float v : gw.data) CHECK(v == 0.0f);
}

TEST_CASE("relu subgradient at zero is zero") {
    Graph g;
    int x = g.leaf(Tensor({1, 3}, {0.0f, -1.0f, 2.0f}), true);
    int r = g.relu(x);
    Graph::Loss loss = g.softmax_xent(r, {1});
    g.backward(loss.id);
    // d relu / dx at exactly 0 must be 0: grad of the first entry vanishes
    CHECK(g.grad(x).at(0) == 0.0f);
    CHECK(g.grad(x).at(2) != 0.0f);
}

TEST_CASE("maxpool routes gradient to the window argmax") {
    Graph g;
    Tensor in = Tensor::zeros({1, 1, 2, 2});
    in.at4(0, 0, 1, 0) = 5.0f;
    int x = g.leaf(in, true);
    int p = g.maxpool2(x);
    int flat = g.reshape(p, {1, 1});
    Graph::Loss loss = g.softmax_xent(flat, {0});
    g.backward(loss.id);
    CHECK(g.grad(x).at4(0, 0, 1, 0) == 0.0f); // softmax of one class: p - 1 = 0
    // drive a nonzero gradient instead via two pooled values
    Graph g2;
    Tensor in2 = Tensor::zeros({1, 2, 2, 2});
    in2.at4(0, 0, 0, 1) = 3.0f;
    in2.at4(0, 1, 1, 1) = 4.0f;
    int x2 = g2.leaf(in2, true);
    int p2 = g2.maxpool2(x2);
    int flat2 = g2.reshape(p2, {1, 2});
    Graph::Loss loss2 = g2.softmax_xent(flat2, {0});
    g2.backward(loss2.id);
    CHECK(g2.grad(x2).at4(0, 0, 0, 1) != 0.0f);
    CHECK(g2.grad(x2).at4(0, 0, 0, 0) == 0.0f);
    CHECK(g2.grad(x2).at4(0, 1, 1, 1) != 0.0f);
}

TEST_CASE("non-finite activations raise a numeric error") {
    BackboneSpec spec;
    spec.in_dims = 2;
    spec.hidden = {};
    spec.feature_dim = 2;
    ModelState m = init_model(spec, 2, 3);
    m.backbone.at("layer0/W").value.at(0) = std::numeric_limits<float>::infinity();
    Graph g;
    ModelBinding b = bind_model(g, m);
    Tensor x({1, 2}, {1.0f, 1.0f});
    CHECK_THROWS_AS(backbone_forward(g, b, m, x), NumericError);
}
