#include <cmath>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "funcarea/errors.hpp"
#include "funcarea/neuralnet.hpp"
#include "unit/support.hpp"

using namespace funcarea;

namespace {

Tensor random_tensor(Shape s, std::uint64_t seed, double scale = 1.0) {
    Tensor t(s);
    Rng rng(seed);
    for (double& v : t.values) v = rng.uniform(-scale, scale);
    return t;
}

LayerParams random_layer(std::size_t weights, std::size_t biases, std::uint64_t seed, double scale = 0.5) {
    LayerParams p;
    Rng rng(seed);
    p.weights.resize(weights);
    p.biases.resize(biases);
    for (double& v : p.weights) v = rng.uniform(-scale, scale);
    for (double& v : p.biases) v = rng.uniform(-scale, scale);
    return p;
}

Parameters random_params(const NetworkSpec& net, std::uint64_t seed) {
    Parameters p = init_parameters(net, seed);
    Rng rng(seed + 1);
    for (LayerParams& l : p.layers)
        for (double& b : l.biases) b = rng.uniform(-0.1, 0.1);
    return p;
}

// Direct summation oracle for valid cross-correlation.
Tensor conv_oracle(const Tensor& x, const ConvSpec& s, const LayerParams& p) {
    Tensor out(Shape{s.out_maps, x.shape.height - s.kernel_h + 1, x.shape.width - s.kernel_w + 1});
    for (int o = 0; o < s.out_maps; ++o)
        for (int r = 0; r < out.shape.height; ++r)
            for (int c = 0; c < out.shape.width; ++c) {
                double acc = p.biases[static_cast<std::size_t>(o)];
                for (int i = 0; i < s.in_maps; ++i)
                    for (int u = 0; u < s.kernel_h; ++u)
                        for (int v = 0; v < s.kernel_w; ++v)
                            acc += x.at(i, r + u, c + v) *
                                   p.weights[static_cast<std::size_t>(((o * s.in_maps + i) * s.kernel_h + u) * s.kernel_w + v)];
                out.at(o, r, c) = acc;
            }
    return out;
}

NetworkSpec single_layer_net(Shape input, LayerSpec layer, Shape out) {
    // layer -> flatten via fc to 12 classes -> softmax
    NetworkSpec net;
    net.input = input;
    net.layers = {layer, FullyConnectedSpec{static_cast<int>(out.size()), 12}, SoftmaxSpec{}};
    return net;
}

// Five conv and three fully connected layers at toy size.
NetworkSpec toy_5c3f() {
    NetworkSpec net;
    net.input = {3, 14, 14};
    net.layers = {
        ConvSpec{3, 3, 3, 3}, ReluSpec{}, MaxPoolSpec{2, 2},  // 12 -> 6
        ConvSpec{3, 4, 2, 2}, ReluSpec{},                     // 5
        ConvSpec{4, 4, 2, 2}, ReluSpec{},                     // 4
        ConvSpec{4, 4, 2, 2}, ReluSpec{},                     // 3
        ConvSpec{4, 4, 2, 2}, ReluSpec{}, AvgPoolSpec{2, 2},  // 2 -> 1
        FullyConnectedSpec{4, 8}, ReluSpec{},
        FullyConnectedSpec{8, 6}, ReluSpec{},
        FullyConnectedSpec{6, 12}, SoftmaxSpec{},
    };
    return net;
}

}  // namespace

TEST_CASE("conv_forward examples") {
    const Tensor x = random_tensor({2, 5, 4}, 1);
    SUBCASE("identity kernel") {
        const ConvSpec s{1, 1, 1, 1};
        const Tensor one = random_tensor({1, 5, 4}, 2);
        CHECK(conv_forward(one, s, {{1.0}, {0.0}}).values == one.values);
    }
    SUBCASE("ones") {
        const Tensor ones(Shape{1, 3, 3}, 1.0);
        const Tensor y = conv_forward(ones, {1, 1, 2, 2}, {{1, 1, 1, 1}, {0}});
        CHECK(y.shape == Shape{1, 2, 2});
        for (double v : y.values) CHECK(v == 4.0);
    }
    SUBCASE("zero kernels") {
        const ConvSpec s{2, 3, 2, 3};
        const Tensor y = conv_forward(x, s, {std::vector<double>(36, 0.0), {0.5, 0.5, 0.5}});
        for (double v : y.values) CHECK(v == 0.5);
    }
    SUBCASE("matches summation oracle, linear without bias") {
        const ConvSpec s{2, 3, 3, 2};
        LayerParams p = random_layer(36, 3, 5);
        const Tensor y = conv_forward(x, s, p);
        const Tensor ref = conv_oracle(x, s, p);
        REQUIRE(y.shape == ref.shape);
        for (std::size_t i = 0; i < y.values.size(); ++i) CHECK(y.values[i] == doctest::Approx(ref.values[i]).epsilon(1e-12));

        std::fill(p.biases.begin(), p.biases.end(), 0.0);
        const Tensor x2 = random_tensor({2, 5, 4}, 9);
        Tensor mix(x.shape);
        const double a = 0.7, b = -1.3;
        for (std::size_t i = 0; i < mix.values.size(); ++i) mix.values[i] = a * x.values[i] + b * x2.values[i];
        const Tensor lhs = conv_forward(mix, s, p);
        const Tensor y1 = conv_forward(x, s, p), y2 = conv_forward(x2, s, p);
        for (std::size_t i = 0; i < lhs.values.size(); ++i)
            CHECK(std::abs(lhs.values[i] - (a * y1.values[i] + b * y2.values[i])) <= 1e-9);
    }
    CHECK_THROWS_AS(conv_forward(x, {2, 1, 6, 1}, {std::vector<double>(12), {0}}), ShapeError);
}

TEST_CASE("relu and pooling") {
    const Tensor t(Shape{3, 1, 1}, std::vector<double>{-1, 2, 0});
    CHECK(relu(t).values == std::vector<double>{0, 2, 0});
    const Tensor pos = random_tensor({2, 3, 3}, 4);
    Tensor abs_pos = pos;
    for (double& v : abs_pos.values) v = std::abs(v);
    CHECK(relu(abs_pos).values == abs_pos.values);
    Tensor neg = abs_pos;
    for (double& v : neg.values) v = -v - 0.1;
    for (double v : relu(neg).values) CHECK(v == 0.0);

    const Tensor sq(Shape{1, 2, 2}, std::vector<double>{1, 2, 3, 4});
    CHECK(pool_forward(sq, PoolKind::Max, 2, 2).values == std::vector<double>{4});
    CHECK(pool_forward(sq, PoolKind::Average, 2, 2).values == std::vector<double>{2.5});

    const Tensor flat(Shape{2, 7, 5}, 0.3);
    for (PoolKind k : {PoolKind::Max, PoolKind::Average}) {
        const Tensor y = pool_forward(flat, k, 3, 2);
        CHECK(y.shape == Shape{2, 3, 2});
        for (double v : y.values) CHECK(v == doctest::Approx(0.3));
    }
    CHECK_THROWS_AS(pool_forward(sq, PoolKind::Max, 3, 1), ShapeError);
}

TEST_CASE("pool backward routing") {
    // Ties resolve to the first maximum in row-major order.
    const Tensor x(Shape{1, 2, 4}, std::vector<double>{5, 5, 1, 2, 5, 0, 3, 3});
    const Tensor up(Shape{1, 1, 2}, std::vector<double>{1.5, -2});
    const Tensor g = pool_backward(x, PoolKind::Max, 2, 2, up);
    CHECK(g.values == std::vector<double>{1.5, 0, 0, 0, 0, 0, -2, 0});

    const Tensor xr = random_tensor({2, 6, 6}, 12);
    const Tensor ur = random_tensor({2, 3, 3}, 13);
    const Tensor ga = pool_backward(xr, PoolKind::Average, 2, 2, ur);
    CHECK(std::accumulate(ga.values.begin(), ga.values.end(), 0.0) ==
          doctest::Approx(std::accumulate(ur.values.begin(), ur.values.end(), 0.0)));
}

TEST_CASE("softmax and cross entropy") {
    for (double v : softmax(std::vector<double>{0, 0, 0}).p) CHECK(v == doctest::Approx(1.0 / 3.0));
    const auto p = softmax(std::vector<double>{0, std::log(2.0)}).p;
    CHECK(p[0] == doctest::Approx(1.0 / 3.0));
    CHECK(p[1] == doctest::Approx(2.0 / 3.0));

    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> x(12), shifted(12);
        const double scale = trial % 2 == 0 ? 1e4 : 5.0;
        for (std::size_t i = 0; i < 12; ++i) {
            x[i] = rng.uniform(-scale, scale);
            shifted[i] = x[i] + 1000.0;
        }
        const auto a = softmax(x).p, b = softmax(shifted).p;
        CHECK(std::abs(std::accumulate(a.begin(), a.end(), 0.0) - 1.0) <= 1e-9);
        for (std::size_t i = 0; i < 12; ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12);
    }

    CHECK(cross_entropy({{0, 1, 0}}, 1) == 0.0);
    CHECK(cross_entropy({std::vector<double>(12, 1.0 / 12.0)}, 3) == doctest::Approx(std::log(12.0)));
    CHECK(cross_entropy({{0.5, 0.5}}, 0) == doctest::Approx(std::log(2.0)));
    CHECK(cross_entropy({{1.0, 0.0}}, 1) == doctest::Approx(-std::log(1e-12)));
    CHECK_THROWS_AS(cross_entropy({{0.5, 0.5}}, 2), InvalidInput);
}

TEST_CASE("network specs") {
    const NetworkSpec def = default_network();
    const auto shapes = def.layer_shapes();
    CHECK(shapes.back() == Shape{12, 1, 1});
    int convs = 0, fcs = 0;
    for (const LayerSpec& l : def.layers) {
        convs += std::holds_alternative<ConvSpec>(l) ? 1 : 0;
        fcs += std::holds_alternative<FullyConnectedSpec>(l) ? 1 : 0;
    }
    CHECK(convs == 5);
    CHECK(fcs == 3);
    CHECK(std::get<FullyConnectedSpec>(def.layers[def.layers.size() - 2]).in_dim == 128);

    const NetworkSpec tiny = tiny_network();
    CHECK(parse_network_spec(to_text(tiny)) == tiny);
    NetworkSpec pm = tiny;
    pm.preprocess = Preprocess::PatchMean;
    CHECK(parse_network_spec(to_text(pm)) == pm);

    NetworkSpec broken = tiny;
    broken.layers.pop_back();
    CHECK_THROWS_AS(broken.validate(), InvalidSpec);
    broken = tiny;
    broken.class_count = 5;
    CHECK_THROWS_AS(broken.validate(), InvalidSpec);
    CHECK_THROWS_AS(parse_network_spec("input 3 8 8\nconv 3 4 3\n"), FormatError);
    CHECK_THROWS_AS(parse_network_spec("input 3 8 8\nblur 2\n"), FormatError);
}

TEST_CASE("forward") {
    SUBCASE("softmax only") {
        NetworkSpec net;
        net.input = {12, 1, 1};
        net.layers = {SoftmaxSpec{}};
        const Tensor x = random_tensor({12, 1, 1}, 4, 3.0);
        const auto out = forward(net, init_parameters(net, 1), x).probabilities.p;
        const auto ref = softmax(x.values).p;
        for (std::size_t i = 0; i < 12; ++i) CHECK(out[i] == doctest::Approx(ref[i]));
    }
    SUBCASE("zero parameters give uniform output") {
        const NetworkSpec net = tiny_network();
        const Parameters zero = zeros_like(init_parameters(net, 3));
        const Image patch = testing::random_image(20, 20, 3, 2);
        for (double v : forward(net, zero, patch).probabilities.p) CHECK(v == doctest::Approx(1.0 / 12.0));
    }
    SUBCASE("deterministic and input-checked") {
        const NetworkSpec net = tiny_network();
        const Parameters p = init_parameters(net, 7);
        CHECK(init_parameters(net, 7) == p);
        CHECK_FALSE(init_parameters(net, 8) == p);
        const Image patch = testing::random_image(33, 17, 3, 2);
        CHECK(forward(net, p, patch).probabilities.p == forward(net, p, patch).probabilities.p);
        CHECK(predict(net, p, patch_to_input(net, patch)).p == forward(net, p, patch).probabilities.p);
        CHECK_THROWS_AS(forward(net, p, Tensor(Shape{3, 19, 20})), ShapeError);
        CHECK_THROWS_AS(forward(net, p, Image(20, 20, 1)), ShapeError);
    }
    SUBCASE("fresh init predicts near uniform") {
        const NetworkSpec net = tiny_network();
        const Parameters p = init_parameters(net, 11);
        const Image patch = testing::random_image(20, 20, 3, 5);
        const auto probs = forward(net, p, patch).probabilities;
        CHECK(cross_entropy(probs, 0) == doctest::Approx(std::log(12.0)).epsilon(0.05));
    }
}

TEST_CASE("backward identities") {
    SUBCASE("softmax+CE gradient on logits is p - onehot") {
        NetworkSpec net;
        net.input = {4, 1, 1};
        net.class_count = 4;
        net.layers = {FullyConnectedSpec{4, 4}, SoftmaxSpec{}};
        Parameters p = init_parameters(net, 1);
        // Identity weights make the input the logits.
        p.layers[0].weights = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
        const Tensor x(Shape{4, 1, 1}, std::vector<double>{0.1, -0.4, 2.0, 0.3});
        const auto fwd = forward(net, p, x);
        const Gradients g = backward(net, p, fwd.cache, 2);
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(g.layers[0].biases[j] == doctest::Approx(fwd.probabilities.p[j] - (j == 2 ? 1.0 : 0.0)));
    }
    SUBCASE("zero input conv layer") {
        const ConvSpec s{2, 3, 2, 2};
        const LayerParams p = random_layer(24, 3, 1);
        const Tensor x(Shape{2, 4, 4});
        const Tensor up = random_tensor({3, 3, 3}, 2);
        LayerParams grad{std::vector<double>(24, 0.0), std::vector<double>(3, 0.0)};
        conv_backward(x, s, p, up, grad);
        for (double v : grad.weights) CHECK(v == 0.0);
        for (int o = 0; o < 3; ++o) {
            double upstream = 0;
            for (int k = 0; k < 9; ++k) upstream += up.values[static_cast<std::size_t>(o * 9 + k)];
            CHECK(grad.biases[static_cast<std::size_t>(o)] == doctest::Approx(upstream));
        }
    }
    SUBCASE("stale cache") {
        const NetworkSpec net = tiny_network();
        Parameters p = init_parameters(net, 3);
        const auto fwd = forward(net, p, testing::random_image(20, 20, 3, 1));
        p.layers[0].weights[0] += 0.01;
        CHECK_THROWS_AS(backward(net, p, fwd.cache, 0), InvalidState);
        ForwardCache empty;
        CHECK_THROWS_AS(backward(net, p, empty, 0), InvalidState);
    }
}

TEST_CASE("gradient checks per layer kind") {
    const Shape in{2, 6, 6};
    const Tensor x = random_tensor(in, 21);
    struct Case {
        const char* name;
        LayerSpec layer;
        Shape out;
    };
    const Case cases[] = {
        {"conv", ConvSpec{2, 3, 3, 2}, {3, 4, 5}},
        {"relu", ReluSpec{}, in},
        {"maxpool", MaxPoolSpec{2, 2}, {2, 3, 3}},
        {"avgpool", AvgPoolSpec{3, 1}, {2, 4, 4}},
        {"fc", FullyConnectedSpec{72, 10}, {10, 1, 1}},
    };
    for (const Case& c : cases) {
        CAPTURE(c.name);
        const NetworkSpec net = single_layer_net(in, c.layer, c.out);
        const Parameters p = random_params(net, 5);
        for (int target : {0, 7, 11}) CHECK(gradient_check(net, p, x, target) < 1e-4);
    }
}

TEST_CASE("gradient check on a 5-conv 3-fc toy network") {
    const NetworkSpec net = toy_5c3f();
    const Parameters p = random_params(net, 17);
    CHECK(p.count() <= 10000);
    const Tensor x = random_tensor(net.input, 18);
    CHECK(gradient_check(net, p, x, 4) < 1e-4);
    CHECK(gradient_check(net, p, x, 11) < 1e-4);
}

TEST_CASE("gradient check detects a negated conv gradient") {
    const NetworkSpec net = toy_5c3f();
    const Parameters p = random_params(net, 17);
    const Tensor x = random_tensor(net.input, 18);
    const auto fwd = forward(net, p, x);
    Gradients g = backward(net, p, fwd.cache, 4);
    for (double& v : g.layers[0].weights) v = -v;
    CHECK(compare_gradients(net, p, x, 4, g) == doctest::Approx(2.0).epsilon(1e-3));

    const NetworkSpec small = tiny_network(10);
    const Parameters zero = zeros_like(init_parameters(small, 1));
    CHECK(gradient_check(small, zero, Tensor(small.input), 3) < 1e-8);
}

TEST_CASE("checkpoint round trip and corruption") {
    const NetworkSpec net = tiny_network();
    const Checkpoint ckpt{net, init_parameters(net, 9)};
    const auto bytes = serialize_checkpoint(ckpt);
    REQUIRE(bytes.size() > 8);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "FSCN");
    const Checkpoint back = deserialize_checkpoint(bytes);
    CHECK(back.net == net);
    CHECK(back.params == ckpt.params);
    CHECK(checksum(back.params) == checksum(ckpt.params));

    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(deserialize_checkpoint(bad_magic), FormatError);

    auto flipped = bytes;
    // Low mantissa bit of the last head bias.
    flipped[bytes.size() - 30] ^= 0x01U;
    try {
        deserialize_checkpoint(flipped);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.offset() == bytes.size() - 8);
    }

    const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + 100);
    try {
        deserialize_checkpoint(truncated);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.offset() <= 100);
    }

    const auto dir = testing::temp_dir("ckpt");
    save_checkpoint(dir / "m.fscn", ckpt);
    CHECK(load_checkpoint(dir / "m.fscn").params == ckpt.params);
    std::ifstream manifest(dir / "m.fscn.manifest");
    std::string text((std::istreambuf_iterator<char>(manifest)), std::istreambuf_iterator<char>());
    CHECK(text == checkpoint_manifest(ckpt));
    CHECK(text.find("checksum") != std::string::npos);
}
