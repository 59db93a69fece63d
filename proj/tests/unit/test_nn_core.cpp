#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "../support/oracles.hpp"
#include "yoeo/errors.hpp"
#include "yoeo/nn/adamw.hpp"
#include "yoeo/nn/checkpoint.hpp"
#include "yoeo/nn/mlp.hpp"
#include "yoeo/nn/rng.hpp"

using namespace yoeo;
using namespace yoeo::nn;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, RngStream& rng, double scale = 1.0) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, scale);
    return m;
}

// Checks every input coordinate and `per_tensor` random coordinates of every parameter tensor.
double worst_gradient_error(Mlp& net, const Matrix& x, const Matrix& upstream, RngStream& rng,
                            std::size_t per_tensor) {
    MlpTape tape;
    net.forward(x, tape);
    MlpGrad grad = net.make_grad();
    Matrix dx = net.backward(tape, upstream, grad);

    Matrix probe = x;
    auto objective = [&] { return (net.forward(probe).array() * upstream.array()).sum(); };
    double worst = 0.0;
    for (Eigen::Index i = 0; i < probe.size(); ++i) {
        const double fd = testing::central_difference(objective, probe.data() + i);
        worst = std::max(worst, testing::relative_error(dx.data()[i], fd));
    }
    auto params = net.parameters();
    auto grads = std::as_const(grad).tensors();
    for (std::size_t t = 0; t < params.size(); ++t) {
        for (std::size_t k = 0; k < per_tensor; ++k) {
            const std::size_t j = rng.index(params[t].size());
            const double fd = testing::central_difference(objective, params[t].data() + j);
            worst = std::max(worst, testing::relative_error(grads[t][j], fd));
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("mlp_forward: zero network maps everything to zero") {
    const std::vector<std::size_t> widths{3, 8, 2};
    const std::vector<Activation> acts{Activation::swish, Activation::identity};
    Mlp net(widths, acts);
    Vector x(3);
    x << 1.5, -2.0, 7.0;
    CHECK(net.forward_one(x).isZero(0.0));
}

TEST_CASE("mlp_forward: scalar affine layer") {
    const std::vector<std::size_t> widths{1, 1};
    const std::vector<Activation> acts{Activation::identity};
    Mlp net(widths, acts);
    net.layers()[0].weight(0, 0) = 2.0;
    net.layers()[0].bias[0] = 1.0;
    Vector x(1);
    x << 3.0;
    CHECK(net.forward_one(x)[0] == 7.0);
}

TEST_CASE("mlp_forward: wide swish network agrees with a straight-line evaluation") {
    RngStream rng(11, 0);
    Mlp net = Mlp::make(5, 256, 2, 3, Activation::swish, rng);
    for (int trial = 0; trial < 5; ++trial) {
        Matrix x = random_matrix(1, 5, rng);
        const Matrix y = net.forward(x);
        const auto ref = testing::straight_line_forward(net, std::vector<double>(x.data(), x.data() + 5));
        for (int o = 0; o < 3; ++o) {
            CHECK(std::isfinite(y(0, o)));
            CHECK(y(0, o) == doctest::Approx(ref[o]).epsilon(1e-12));
        }
    }
}

TEST_CASE("mlp_forward: dimension mismatch is a configuration error") {
    RngStream rng(1, 0);
    Mlp net = Mlp::make(4, 8, 1, 1, Activation::relu, rng);
    CHECK_THROWS_AS(net.forward(Matrix::Zero(2, 3)), ConfigError);
}

TEST_CASE("mlp_grad: zero upstream gives zero gradients") {
    RngStream rng(2, 0);
    Mlp net = Mlp::make(3, 16, 2, 2, Activation::swish, rng);
    MlpTape tape;
    const Matrix x = random_matrix(4, 3, rng);
    net.forward(x, tape);
    MlpGrad grad = net.make_grad();
    const Matrix dx = net.backward(tape, Matrix::Zero(4, 2), grad);
    CHECK(dx.isZero(0.0));
    for (auto t : std::as_const(grad).tensors()) {
        for (double g : t) CHECK(g == 0.0);
    }
}

TEST_CASE("mlp_grad: hand derivative of y = 2x + 1") {
    const std::vector<std::size_t> widths{1, 1};
    const std::vector<Activation> acts{Activation::identity};
    Mlp net(widths, acts);
    net.layers()[0].weight(0, 0) = 2.0;
    net.layers()[0].bias[0] = 1.0;
    MlpTape tape;
    Matrix x(1, 1);
    x << 3.0;
    net.forward(x, tape);
    MlpGrad grad = net.make_grad();
    const Matrix dx = net.backward(tape, Matrix::Ones(1, 1), grad);
    CHECK(grad.weight[0](0, 0) == 3.0);
    CHECK(grad.bias[0][0] == 1.0);
    CHECK(dx(0, 0) == 2.0);
}

TEST_CASE("mlp_grad: backward without a forward pass is a usage error") {
    RngStream rng(3, 0);
    Mlp net = Mlp::make(2, 4, 1, 1, Activation::relu, rng);
    MlpTape tape;
    MlpGrad grad = net.make_grad();
    CHECK_THROWS_AS(net.backward(tape, Matrix::Ones(1, 1), grad), UsageError);
}

TEST_CASE("mlp_grad: finite-difference agreement on random two-layer networks") {
    RngStream rng(4, 0);
    for (int draw = 0; draw < 10; ++draw) {
        SUBCASE("swish") {
            Mlp net = Mlp::make(4, 32, 2, 2, Activation::swish, rng);
            const Matrix x = random_matrix(3, 4, rng);
            const Matrix up = random_matrix(3, 2, rng);
            CHECK(worst_gradient_error(net, x, up, rng, 6) < 1e-4);
        }
        SUBCASE("relu away from kinks") {
            Mlp net = Mlp::make(4, 32, 2, 2, Activation::relu, rng);
            Matrix x = random_matrix(2, 4, rng);
            while (testing::min_relu_margin(net, x) <= 1e-3) x = random_matrix(2, 4, rng);
            const Matrix up = random_matrix(2, 2, rng);
            CHECK(worst_gradient_error(net, x, up, rng, 6) < 1e-4);
        }
    }
}

TEST_CASE("swish identities") {
    CHECK(swish(0.0) == 0.0);
    CHECK(std::abs(swish(30.0) - 30.0) < 1e-9);
    CHECK(swish(-800.0) == doctest::Approx(0.0));
    CHECK(sigmoid(-800.0) == 0.0);
}

TEST_CASE("adamw_step: zero gradient without decay is a fixed point") {
    std::vector<double> p{1.0, -2.0, 3.5};
    const std::vector<double> g(3, 0.0);
    std::vector<std::span<double>> params{std::span<double>(p)};
    std::vector<std::span<const double>> grads{std::span<const double>(g)};
    Adamw opt(AdamwConfig{}, std::span<const std::span<double>>(params));
    for (int i = 0; i < 5; ++i) opt.step(params, grads);
    CHECK(p == std::vector<double>{1.0, -2.0, 3.5});
    CHECK(opt.step_count() == 5);
}

TEST_CASE("adamw_step: first bias-corrected step moves a unit gradient by lr") {
    std::vector<double> p{0.5};
    const std::vector<double> g{1.0};
    std::vector<std::span<double>> params{std::span<double>(p)};
    std::vector<std::span<const double>> grads{std::span<const double>(g)};
    AdamwConfig config;
    config.learning_rate = 0.1;
    Adamw opt(config, std::span<const std::span<double>>(params));
    opt.step(params, grads);
    // m_hat = 1, v_hat = 1 after bias correction.
    CHECK(p[0] == doctest::Approx(0.5 - 0.1 / (1.0 + 1e-8)).epsilon(1e-15));
    CHECK(0.5 - p[0] == doctest::Approx(0.1).epsilon(1e-7));
}

TEST_CASE("adamw_step: decoupled weight decay") {
    std::vector<double> p{2.0};
    const std::vector<double> g{1.0};
    std::vector<std::span<double>> params{std::span<double>(p)};
    std::vector<std::span<const double>> grads{std::span<const double>(g)};
    AdamwConfig config;
    config.learning_rate = 0.1;
    config.weight_decay = 1e-8;
    Adamw opt(config, std::span<const std::span<double>>(params));
    opt.step(params, grads);
    const double adam_term = 1.0 / (1.0 + 1e-8);
    CHECK(p[0] == doctest::Approx(2.0 - 0.1 * 1e-8 * 2.0 - 0.1 * adam_term).epsilon(1e-15));
}

TEST_CASE("adamw_step: non-finite gradient is a training error and leaves params untouched") {
    std::vector<double> p{1.0, 2.0};
    const std::vector<double> g{0.5, NAN};
    std::vector<std::span<double>> params{std::span<double>(p)};
    std::vector<std::span<const double>> grads{std::span<const double>(g)};
    Adamw opt(AdamwConfig{}, std::span<const std::span<double>>(params));
    CHECK_THROWS_AS(opt.step(params, grads), TrainingError);
    CHECK(p == std::vector<double>{1.0, 2.0});
    CHECK(opt.step_count() == 0);
}

TEST_CASE("ema_update boundaries and geometric lag") {
    std::vector<double> target{0.0, 5.0};
    const std::vector<double> online{1.0, 1.0};
    std::vector<std::span<double>> t{std::span<double>(target)};
    std::vector<std::span<const double>> o{std::span<const double>(online)};

    ema_update(t, o, 1.0);
    CHECK(target == std::vector<double>{0.0, 5.0});
    ema_update(t, o, 0.0);
    CHECK(target == std::vector<double>{1.0, 1.0});

    target = {0.0, 0.0};
    for (int i = 0; i < 100; ++i) ema_update(t, o, 0.995);
    CHECK(target[0] == doctest::Approx(1.0 - std::pow(0.995, 100)).epsilon(1e-12));
    CHECK(target[0] == doctest::Approx(0.394).epsilon(1e-3));

    CHECK_THROWS_AS(ema_update(t, o, 1.5), ConfigError);
}

TEST_CASE("checkpoint round trip and validation") {
    RngStream rng(5, 0);
    Mlp net = Mlp::make(3, 7, 2, 2, Activation::swish, rng);
    Checkpoint ckpt;
    ckpt.add_mlp("q", net);
    ckpt.add_scalar("step", 42.0);
    const std::string bytes = ckpt.serialize();
    CHECK(bytes.substr(0, 4) == "YOEO");
    std::uint32_t version = 0;
    std::memcpy(&version, bytes.data() + 4, 4);
    CHECK(version == Checkpoint::kVersion);

    const Checkpoint back = Checkpoint::deserialize(bytes);
    Mlp copy = Mlp::make(3, 7, 2, 2, Activation::swish, rng);
    back.load_mlp("q", copy);
    CHECK(back.scalar("step") == 42.0);
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
        CHECK(copy.layers()[l].weight == net.layers()[l].weight);
        CHECK(copy.layers()[l].bias == net.layers()[l].bias);
    }
    CHECK(back.serialize() == bytes);

    CHECK_THROWS_AS(Checkpoint::deserialize("NOPE" + bytes.substr(4)), LoadError);
    CHECK_THROWS_AS(Checkpoint::deserialize(bytes.substr(0, bytes.size() - 3)), LoadError);
    Mlp wrong = Mlp::make(3, 8, 2, 2, Activation::swish, rng);
    CHECK_THROWS_AS(back.load_mlp("q", wrong), LoadError);
}

TEST_CASE("rng streams: identical (seed, stream) replay, distinct streams differ") {
    RngStream a(9, 3), b(9, 3), c(9, 4);
    bool all_same = true;
    bool any_diff = false;
    for (int i = 0; i < 100; ++i) {
        const double x = a.uniform();
        all_same = all_same && x == b.uniform();
        any_diff = any_diff || x != c.uniform();
    }
    CHECK(all_same);
    CHECK(any_diff);
}

TEST_CASE("determinism: identical seeds give bitwise-identical parameters after training") {
    auto run = [] {
        RngStream rng(77, 1);
        Mlp net = Mlp::make(2, 16, 2, 1, Activation::swish, rng);
        auto params = net.parameters();
        Adamw opt(AdamwConfig{}, std::span<const std::span<double>>(params));
        MlpTape tape;
        for (int step = 0; step < 50; ++step) {
            Matrix x = random_matrix(8, 2, rng);
            const Matrix y = net.forward(x, tape);
            MlpGrad grad = net.make_grad();
            net.backward(tape, y, grad);
            auto p = net.parameters();
            opt.step(p, std::as_const(grad).tensors());
        }
        Checkpoint c;
        c.add_mlp("n", net);
        return c.serialize();
    };
    CHECK(run() == run());
}
