#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "yoeo/nn/rng.hpp"

namespace yoeo::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { relu, swish, identity };

std::string to_string(Activation activation);
Activation activation_from_string(const std::string& name);

double swish(double x) noexcept;
double sigmoid(double x) noexcept;

struct Layer {
    Matrix weight;  // out x in
    Vector bias;    // out
    Activation activation = Activation::identity;
};

/// Saved activations of one batched forward pass; consumed by Mlp::backward.
struct MlpTape {
    Matrix input;
    std::vector<Matrix> pre;   // per layer, batch x out
    std::vector<Matrix> post;  // per layer, batch x out

    bool empty() const noexcept { return pre.empty(); }
    void clear();
};

/// Parameter gradients with the same layout as Mlp::parameters().
struct MlpGrad {
    std::vector<Matrix> weight;
    std::vector<Vector> bias;

    void set_zero();
    std::vector<std::span<const double>> tensors() const;
    std::vector<std::span<double>> tensors();
};

/// Fully connected network. Rows of every batch matrix are samples.
class Mlp {
public:
    Mlp() = default;
    /// Zero-initialised network; widths has one more entry than activations.
    Mlp(std::span<const std::size_t> widths, std::span<const Activation> activations);

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
    static Mlp uniform_init(std::span<const std::size_t> widths, std::span<const Activation> activations,
                            RngStream& rng);

    /// Convenience: in -> hidden (x depth, `hidden_activation`) -> out (identity).
    static Mlp make(std::size_t in, std::size_t hidden, std::size_t depth, std::size_t out,
                    Activation hidden_activation, RngStream& rng);

    std::size_t input_dim() const;
    std::size_t output_dim() const;
    std::size_t depth() const noexcept { return layers_.size(); }
    std::size_t parameter_count() const;

    const std::vector<Layer>& layers() const noexcept { return layers_; }
    std::vector<Layer>& layers() noexcept { return layers_; }

    Matrix forward(const Matrix& x) const;
    Matrix forward(const Matrix& x, MlpTape& tape) const;
    Vector forward_one(const Vector& x) const;

    /// Reverse-mode pass for <upstream, forward(x)>. Accumulates into grad and returns d/dx.
    Matrix backward(const MlpTape& tape, const Matrix& upstream, MlpGrad& grad) const;

    MlpGrad make_grad() const;

    std::vector<std::span<double>> parameters();
    std::vector<std::span<const double>> parameters() const;

private:
    void check_input(const Matrix& x) const;

    std::vector<Layer> layers_;
};

/// target <- decay * target + (1 - decay) * online, elementwise.
void ema_update(std::span<const std::span<double>> target, std::span<const std::span<const double>> online,
                double decay);
void ema_update(Mlp& target, const Mlp& online, double decay);

}  // namespace yoeo::nn
