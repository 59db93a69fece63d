#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "yoeo/data/dataset.hpp"
#include "yoeo/nn/adamw.hpp"
#include "yoeo/nn/checkpoint.hpp"
#include "yoeo/nn/mlp.hpp"

namespace yoeo::value {

using nn::Matrix;
using nn::Vector;

inline constexpr std::size_t kCosineBasisSize = 64;

/// Rows [cos(pi * i * tau)] for i = 0..63, one row per tau.
Matrix cosine_basis(const Vector& taus);

/// Quantile-Huber loss of one prediction set against one target set:
///   sum_i mean_j |tau_i - 1{u_ij < 0}| * L_kappa(u_ij) / kappa,  u_ij = target_j - predicted_i.
/// If `grad` is non-null it receives d loss / d predicted.
double quantile_huber_loss(const Vector& predicted, const Vector& targets, const Vector& taus, double kappa,
                           Vector* grad = nullptr);

struct IqnConfig {
    std::size_t feature_dim = 64;  // |F|
    std::size_t hidden = 256;
    std::size_t depth = 2;
};

enum class Net { online, target };

/// Y(s; tau) = F(E(s) * T(cosine_basis(tau))) with EMA target copies of E, T and F.
class QuantileValueModel {
public:
    struct Tape {
        nn::MlpTape embed;
        nn::MlpTape cosine;
        nn::MlpTape head;
        Matrix embed_rows;   // E(s) repeated per tau, (B*K) x |F|
        Matrix cosine_rows;  // T(tau), (B*K) x |F|
        std::size_t batch = 0;
        std::size_t per_state = 0;
    };

    struct Grad {
        nn::MlpGrad embed;
        nn::MlpGrad cosine;
        nn::MlpGrad head;

        void set_zero();
        std::vector<std::span<const double>> tensors() const;
    };

    QuantileValueModel() = default;
    QuantileValueModel(std::size_t state_dim, const IqnConfig& config, nn::RngStream& rng);
    /// Every parameter zero: the model answers 0 everywhere.
    static QuantileValueModel zeros(std::size_t state_dim, const IqnConfig& config);

    std::size_t state_dim() const { return embed_.input_dim(); }
    const IqnConfig& config() const noexcept { return config_; }

    /// Y(s; tau). Throws UsageError unless 0 < tau < 1.
    double query(const Vector& state, double tau, Net net = Net::online) const;
    /// B x K values for states (B x dS) and per-row quantile levels (B x K).
    Matrix forward(const Matrix& states, const Matrix& taus, Net net = Net::online) const;
    /// Same tau for every row.
    Vector quantile(const Matrix& states, double tau, Net net = Net::online) const;

    /// Online forward that records what backward needs.
    Matrix forward(const Matrix& states, const Matrix& taus, Tape& tape) const;
    /// Accumulates parameter gradients of <upstream, forward(states, taus)>.
    void backward(const Tape& tape, const Matrix& upstream, Grad& grad) const;
    Grad make_grad() const;

    std::vector<std::span<double>> parameters();
    std::vector<std::span<const double>> parameters() const;

    void update_target(double decay);
    void sync_target();

    nn::Mlp& embed() noexcept { return embed_; }
    nn::Mlp& cosine() noexcept { return cosine_; }
    nn::Mlp& head() noexcept { return head_; }
    const nn::Mlp& head() const noexcept { return head_; }
    const nn::Mlp& target_head() const noexcept { return target_head_; }

    void save(nn::Checkpoint& checkpoint, const std::string& prefix) const;
    void load(const nn::Checkpoint& checkpoint, const std::string& prefix);

private:
    Matrix evaluate(const nn::Mlp& embed, const nn::Mlp& cosine, const nn::Mlp& head, const Matrix& states,
                    const Matrix& taus) const;

    IqnConfig config_;
    nn::Mlp embed_, cosine_, head_;
    nn::Mlp target_embed_, target_cosine_, target_head_;
};

struct ValueTrainConfig {
    double kappa = 1.0;
    std::size_t n_tau = 16;         // N
    std::size_t n_tau_target = 16;  // N'
    std::size_t batch = 100;
    std::size_t n_step = 10;
    double gamma = 0.99;
    double ema_decay = 0.995;
};

/// Loss of one distributional n-step TD update, computed on a given batch and quantile draws.
/// Targets are sum + gamma^k * Y_target(s_{t+k}; tau'_j), with no bootstrap on terminal rows.
double value_loss(const QuantileValueModel& model, const data::NStepBatch& batch, const Matrix& taus,
                  const Matrix& target_taus, double kappa, QuantileValueModel::Grad* grad = nullptr);

/// One AdamW step on psi followed by the EMA target update. Returns the loss before the step.
double train_value_step(QuantileValueModel& model, nn::Adamw& optimizer, const data::TransitionDataset& dataset,
                        const ValueTrainConfig& config, nn::RngStream& rng);

/// Same, on a batch sampled by the caller; quantile levels are drawn from rng.
double train_value_step(QuantileValueModel& model, nn::Adamw& optimizer, const data::NStepBatch& batch,
                        const ValueTrainConfig& config, nn::RngStream& rng);

}  // namespace yoeo::value
