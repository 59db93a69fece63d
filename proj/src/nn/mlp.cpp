#include "yoeo/nn/mlp.hpp"

#include <cmath>

#include "yoeo/errors.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace yoeo::nn {

namespace {

#if defined(__GLIBC__)
// Batch matrices are a few hundred KiB; keep them on the heap instead of fresh mmap pages per step.
const bool kAllocatorTuned = [] {
    mallopt(M_MMAP_THRESHOLD, 64 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
    return true;
}();
#endif

}  // namespace


std::string to_string(Activation activation) {
    switch (activation) {
        case Activation::relu: return "relu";
        case Activation::swish: return "swish";
        case Activation::identity: return "identity";
    }
    return "identity";
}

Activation activation_from_string(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "swish") return Activation::swish;
    if (name == "identity") return Activation::identity;
    throw ConfigError("unknown activation '" + name + "'");
}

double sigmoid(double x) noexcept {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double swish(double x) noexcept { return x * sigmoid(x); }

namespace {

void apply_activation(Activation activation, const Matrix& pre, Matrix& post) {
    switch (activation) {
        case Activation::relu: post = pre.cwiseMax(0.0); break;
        case Activation::swish:
            post = (pre.array() / (1.0 + (-pre.array()).exp())).matrix();
            break;
        case Activation::identity: post = pre; break;
    }
}

// Multiplies upstream by the activation derivative in place. ReLU'(0) = 0.
void activation_backward(Activation activation, const Matrix& pre, Matrix& upstream) {
    switch (activation) {
        case Activation::relu:
            upstream = (pre.array() > 0.0).select(upstream, 0.0);
            break;
        case Activation::swish: {
            const Eigen::ArrayXXd s = 1.0 / (1.0 + (-pre.array()).exp());
            upstream.array() *= s * (1.0 + pre.array() * (1.0 - s));
            break;
        }
        case Activation::identity: break;
    }
}

}  // namespace

void MlpTape::clear() {
    input.resize(0, 0);
    pre.clear();
    post.clear();
}

void MlpGrad::set_zero() {
    for (auto& w : weight) w.setZero();
    for (auto& b : bias) b.setZero();
}

std::vector<std::span<const double>> MlpGrad::tensors() const {
    std::vector<std::span<const double>> out;
    for (std::size_t i = 0; i < weight.size(); ++i) {
        out.emplace_back(weight[i].data(), static_cast<std::size_t>(weight[i].size()));
        out.emplace_back(bias[i].data(), static_cast<std::size_t>(bias[i].size()));
    }
    return out;
}

std::vector<std::span<double>> MlpGrad::tensors() {
    std::vector<std::span<double>> out;
    for (std::size_t i = 0; i < weight.size(); ++i) {
        out.emplace_back(weight[i].data(), static_cast<std::size_t>(weight[i].size()));
        out.emplace_back(bias[i].data(), static_cast<std::size_t>(bias[i].size()));
    }
    return out;
}

Mlp::Mlp(std::span<const std::size_t> widths, std::span<const Activation> activations) {
    if (widths.size() < 2 || activations.size() + 1 != widths.size()) {
        throw ConfigError("mlp needs n+1 widths for n activations (n >= 1)");
    }
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        if (widths[i] == 0 || widths[i + 1] == 0) {
            throw ConfigError("mlp layer widths must be positive");
        }
        Layer layer;
        layer.weight = Matrix::Zero(static_cast<Eigen::Index>(widths[i + 1]), static_cast<Eigen::Index>(widths[i]));
        layer.bias = Vector::Zero(static_cast<Eigen::Index>(widths[i + 1]));
        layer.activation = activations[i];
        layers_.push_back(std::move(layer));
    }
}

Mlp Mlp::uniform_init(std::span<const std::size_t> widths, std::span<const Activation> activations,
                      RngStream& rng) {
    Mlp net(widths, activations);
    for (auto& layer : net.layers_) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
        for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
            layer.weight.data()[i] = rng.uniform(-bound, bound);
        }
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
            layer.bias[i] = rng.uniform(-bound, bound);
        }
    }
    return net;
}

Mlp Mlp::make(std::size_t in, std::size_t hidden, std::size_t depth, std::size_t out,
              Activation hidden_activation, RngStream& rng) {
    std::vector<std::size_t> widths{in};
    std::vector<Activation> acts;
    for (std::size_t i = 0; i < depth; ++i) {
        widths.push_back(hidden);
        acts.push_back(hidden_activation);
    }
    widths.push_back(out);
    acts.push_back(Activation::identity);
    return uniform_init(widths, acts, rng);
}

std::size_t Mlp::input_dim() const {
    return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weight.cols());
}

std::size_t Mlp::output_dim() const {
    return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().weight.rows());
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers_) {
        n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
    }
    return n;
}

void Mlp::check_input(const Matrix& x) const {
    if (layers_.empty()) {
        throw UsageError("forward on an empty mlp");
    }
    if (static_cast<std::size_t>(x.cols()) != input_dim()) {
        throw ConfigError("mlp input has " + std::to_string(x.cols()) + " columns, expected " +
                          std::to_string(input_dim()));
    }
}

Matrix Mlp::forward(const Matrix& x) const {
    check_input(x);
    Matrix current = x;
    Matrix pre;
    for (const auto& layer : layers_) {
        pre.noalias() = current * layer.weight.transpose();
        pre.rowwise() += layer.bias.transpose();
        apply_activation(layer.activation, pre, current);
    }
    return current;
}

Matrix Mlp::forward(const Matrix& x, MlpTape& tape) const {
    check_input(x);
    tape.input = x;
    tape.pre.resize(layers_.size());
    tape.post.resize(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const Matrix& in = l == 0 ? tape.input : tape.post[l - 1];
        tape.pre[l].noalias() = in * layers_[l].weight.transpose();
        tape.pre[l].rowwise() += layers_[l].bias.transpose();
        apply_activation(layers_[l].activation, tape.pre[l], tape.post[l]);
    }
    return tape.post.back();
}

Vector Mlp::forward_one(const Vector& x) const {
    return forward(x.transpose()).row(0).transpose();
}

Matrix Mlp::backward(const MlpTape& tape, const Matrix& upstream, MlpGrad& grad) const {
    if (tape.empty() || tape.pre.size() != layers_.size()) {
        throw UsageError("mlp backward called without saved activations from a forward pass");
    }
    if (upstream.rows() != tape.input.rows() || static_cast<std::size_t>(upstream.cols()) != output_dim()) {
        throw ConfigError("mlp backward upstream shape does not match the saved forward pass");
    }
    if (grad.weight.size() != layers_.size()) {
        grad = make_grad();
    }
    Matrix delta = upstream;
    for (std::size_t l = layers_.size(); l-- > 0;) {
        activation_backward(layers_[l].activation, tape.pre[l], delta);
        const Matrix& in = l == 0 ? tape.input : tape.post[l - 1];
        grad.weight[l].noalias() += delta.transpose() * in;
        grad.bias[l] += delta.colwise().sum().transpose();
        Matrix next;
        next.noalias() = delta * layers_[l].weight;
        delta = std::move(next);
    }
    return delta;
}

MlpGrad Mlp::make_grad() const {
    MlpGrad grad;
    for (const auto& layer : layers_) {
        grad.weight.push_back(Matrix::Zero(layer.weight.rows(), layer.weight.cols()));
        grad.bias.push_back(Vector::Zero(layer.bias.size()));
    }
    return grad;
}

std::vector<std::span<double>> Mlp::parameters() {
    std::vector<std::span<double>> out;
    for (auto& layer : layers_) {
        out.emplace_back(layer.weight.data(), static_cast<std::size_t>(layer.weight.size()));
        out.emplace_back(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
    }
    return out;
}

std::vector<std::span<const double>> Mlp::parameters() const {
    std::vector<std::span<const double>> out;
    for (const auto& layer : layers_) {
        out.emplace_back(layer.weight.data(), static_cast<std::size_t>(layer.weight.size()));
        out.emplace_back(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
    }
    return out;
}

void ema_update(std::span<const std::span<double>> target, std::span<const std::span<const double>> online,
                double decay) {
    if (!(decay >= 0.0 && decay <= 1.0)) {
        throw ConfigError("ema decay must lie in [0, 1]");
    }
    if (target.size() != online.size()) {
        throw ConfigError("ema target and online parameter lists differ in length");
    }
    for (std::size_t t = 0; t < target.size(); ++t) {
        if (target[t].size() != online[t].size()) {
            throw ConfigError("ema tensor " + std::to_string(t) + " shape mismatch");
        }
        for (std::size_t i = 0; i < target[t].size(); ++i) {
            target[t][i] = decay * target[t][i] + (1.0 - decay) * online[t][i];
        }
    }
}

void ema_update(Mlp& target, const Mlp& online, double decay) {
    const auto t = target.parameters();
    const auto o = online.parameters();
    ema_update(t, o, decay);
}

}  // namespace yoeo::nn
