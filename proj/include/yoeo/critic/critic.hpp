#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "yoeo/data/dataset.hpp"
#include "yoeo/envs/environment.hpp"
#include "yoeo/nn/adamw.hpp"
#include "yoeo/nn/checkpoint.hpp"
#include "yoeo/nn/mlp.hpp"
#include "yoeo/value/ensemble.hpp"

namespace yoeo::critic {

using nn::Matrix;
using nn::Vector;

enum class Variant { full, no_reg, no_mu, sarsa_target };

std::string to_string(Variant variant);
/// Accepts both "no_reg" and "no-reg" spellings.
Variant variant_from_string(const std::string& text);

/// Proposes one action per state row; used for the actor and uniform regularizer samples.
class ActionProposal {
public:
    virtual ~ActionProposal() = default;
    virtual Matrix propose(const Matrix& states, nn::RngStream& rng) const = 0;
};

/// mu: independent uniform draws inside the action box.
class UniformActionSampler final : public ActionProposal {
public:
    explicit UniformActionSampler(envs::ActionBounds bounds) : bounds_(std::move(bounds)) {}
    Matrix propose(const Matrix& states, nn::RngStream& rng) const override;
    const envs::ActionBounds& bounds() const noexcept { return bounds_; }

private:
    envs::ActionBounds bounds_;
};

/// Scalar action-value surface used by policy extraction.
class ActionValueFunction {
public:
    virtual ~ActionValueFunction() = default;
    virtual Vector evaluate(const Matrix& states, const Matrix& actions) const = 0;
    /// d value / d action per row; optionally returns the values.
    virtual Matrix action_gradient(const Matrix& states, const Matrix& actions, Vector* values = nullptr) const = 0;
};

/// M critics Q(s, a) over the concatenated input [s, a], each with an EMA target copy.
/// As an ActionValueFunction it exposes the ensemble minimum.
class CriticEnsemble final : public ActionValueFunction {
public:
    CriticEnsemble() = default;
    CriticEnsemble(std::size_t members, std::size_t state_dim, std::size_t action_dim, std::size_t hidden,
                   std::size_t depth, std::uint64_t seed);

    std::size_t size() const noexcept { return members_.size(); }
    std::size_t state_dim() const noexcept { return state_dim_; }
    std::size_t action_dim() const noexcept { return action_dim_; }

    nn::Mlp& member(std::size_t m) { return members_.at(m); }
    const nn::Mlp& member(std::size_t m) const { return members_.at(m); }
    const nn::Mlp& target(std::size_t m) const { return targets_.at(m); }

    /// Q values of every member, B x M.
    Matrix all_q(const Matrix& states, const Matrix& actions) const;
    Vector member_q(std::size_t m, const Matrix& states, const Matrix& actions) const;
    Vector target_q(std::size_t m, const Matrix& states, const Matrix& actions) const;
    /// Elementwise minimum over members.
    Vector ensemble_min(const Matrix& states, const Matrix& actions) const;
    /// d ensemble_min / d action per row (through the minimizing member); optionally returns the values.
    Matrix min_action_gradient(const Matrix& states, const Matrix& actions, Vector* values = nullptr) const;

    Vector evaluate(const Matrix& states, const Matrix& actions) const override { return ensemble_min(states, actions); }
    Matrix action_gradient(const Matrix& states, const Matrix& actions, Vector* values = nullptr) const override {
        return min_action_gradient(states, actions, values);
    }

    void update_targets(double decay);
    void sync_targets();

    void save(nn::Checkpoint& checkpoint) const;
    static CriticEnsemble load(const nn::Checkpoint& checkpoint);

private:
    std::size_t state_dim_ = 0;
    std::size_t action_dim_ = 0;
    std::vector<nn::Mlp> members_;
    std::vector<nn::Mlp> targets_;
};

Matrix concat_inputs(const Matrix& states, const Matrix& actions);

struct LogSumExp {
    double value = 0.0;   // T * log(exp(y / T) + sum_j exp(q_j / T))
    Vector weights;       // d value / d q_j (softmax weights of the samples)
};

/// Stabilised temperature-scaled log-sum-exp of the constant y and the samples q.
/// Throws TrainingError if the result is not finite.
LogSumExp log_sum_exp(double y, const Vector& q, double temperature);

/// Supervised n-step target: sum + gamma^k * Y(s_{t+k}; 0.5), bootstrap 0 on terminal rows,
/// reading the frozen bootstrap values from the cache (indexed by last_index).
Vector supervised_target(const data::NStepBatch& batch, const value::ValueCache& cache);
/// Same, querying a value source directly; UsageError if stage 1 is absent.
Vector supervised_target(const data::NStepBatch& batch, const value::StateValueSource* source);

/// r + gamma * Q_target(s', a'), r alone on terminal rows.
Vector sarsa_td_target(const data::SarsaBatch& batch, const nn::Mlp& target_critic, double gamma);

/// Inputs of one member loss. Sample rows b * n_b .. (b + 1) * n_b - 1 belong to batch row b.
struct CriticLossInputs {
    Matrix states;
    Matrix actions;
    Vector targets;
    Matrix actor_states;   // states repeated n_b times
    Matrix actor_actions;  // empty: no actor term
    Matrix mu_actions;     // empty: no mu term
    Vector upper;          // Y(s; tau1) per batch row
    Vector lower;          // Y(s; tau2) per batch row
    double lambda = 0.0;
    double temperature = 1.0;
    std::size_t samples = 0;  // n_b
};

struct CriticLoss {
    double total = 0.0;
    double supervised = 0.0;   // mean 1/2 (Q - y)^2
    double regularizer = 0.0;  // mean R(s)
};

/// Per-state R(s; theta) for one member.
Vector pessimistic_regularizer(const nn::Mlp& critic, const CriticLossInputs& in);

/// mean_b [1/2 (Q(s,a) - y)^2 + lambda * R(s)]; accumulates parameter gradients if grad is given.
CriticLoss critic_loss(const nn::Mlp& critic, const CriticLossInputs& in, nn::MlpGrad* grad = nullptr);

struct CriticConfig {
    std::size_t members = 5;
    std::size_t hidden = 256;
    std::size_t depth = 2;
    Variant variant = Variant::full;
    double lambda = 0.1;
    double tau1 = 0.9;
    double tau2 = 0.1;
    std::size_t samples = 10;  // n_b
    std::optional<double> temperature = 1.0;  // nullopt: dataset return range
    std::size_t batch = 100;
    std::size_t n_step = 10;
    double gamma = 0.99;
    double target_decay = 0.995;  // SARSA target critics
    nn::AdamwConfig optimizer{1e-3, 0.9, 0.999, 1e-8, 1e-8};

    void validate() const;
};

/// Range (max - min) of the discounted returns-to-go of a dataset; 1 if degenerate.
double dataset_return_range(const data::TransitionDataset& dataset, double gamma);

/// Owns the optimizers and drives stage-2 critic updates.
class CriticTrainer {
public:
    CriticTrainer(CriticEnsemble& critics, const CriticConfig& config, const data::TransitionDataset& dataset,
                  const value::ValueCache* cache, envs::ActionBounds bounds, std::uint64_t seed);

    /// One AdamW step per member; members share the batch and draw their own regularizer samples.
    /// Returns per-member losses. `actor` may be null only when no actor term is needed.
    std::vector<CriticLoss> step(const ActionProposal* actor, nn::RngStream& batch_rng);

    double temperature() const noexcept { return temperature_; }
    void set_learning_rate(double lr);
    const CriticConfig& config() const noexcept { return config_; }

private:
    bool uses_regularizer() const;
    bool uses_sarsa() const;

    CriticEnsemble& critics_;
    CriticConfig config_;
    const data::TransitionDataset& dataset_;
    const value::ValueCache* cache_;
    UniformActionSampler mu_;
    double temperature_;
    std::vector<nn::Adamw> optimizers_;
    std::vector<nn::RngStream> member_rngs_;
};

}  // namespace yoeo::critic
