#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "yoeo/critic/critic.hpp"
#include "yoeo/data/dataset.hpp"
#include "yoeo/envs/environment.hpp"
#include "yoeo/nn/adamw.hpp"
#include "yoeo/nn/checkpoint.hpp"
#include "yoeo/nn/mlp.hpp"

namespace yoeo::policy {

using nn::Matrix;
using nn::Vector;

struct ActorConfig {
    std::size_t hidden = 256;
    std::size_t depth = 2;
    double noise = 0.3;  // sigma
    double noise_clip = 0.5;
};

/// Deterministic pi(s) = center + half_range * tanh(net(s)), swish hidden layers.
/// As an ActionProposal it returns TD3-style noisy samples.
class ActorPolicy final : public critic::ActionProposal {
public:
    ActorPolicy() = default;
    ActorPolicy(std::size_t state_dim, envs::ActionBounds bounds, const ActorConfig& config, std::uint64_t seed);

    std::size_t state_dim() const { return net_.input_dim(); }
    const envs::ActionBounds& bounds() const noexcept { return bounds_; }
    const ActorConfig& config() const noexcept { return config_; }
    nn::Mlp& network() noexcept { return net_; }
    const nn::Mlp& network() const noexcept { return net_; }

    Matrix forward(const Matrix& states) const;
    Vector act(const Vector& state) const;

    /// clamp_bounds(pi(s) + clamp(eps, -clip, clip)), eps ~ N(0, sigma^2) per dimension.
    Matrix sample_noisy(const Matrix& states, double sigma, double clip, nn::RngStream& rng) const;
    Matrix propose(const Matrix& states, nn::RngStream& rng) const override;

    /// Gradient of -mean_b f(s_b, pi(s_b)) with respect to the actor parameters; returns the mean of f.
    double objective_gradient(const critic::ActionValueFunction& q, const Matrix& states, nn::MlpGrad& grad) const;

    void save(nn::Checkpoint& checkpoint) const;
    static ActorPolicy load(const nn::Checkpoint& checkpoint);

private:
    nn::Mlp net_;
    envs::ActionBounds bounds_;
    ActorConfig config_;
};

/// One ascent step on mean_b q(s_b, pi(s_b)). Returns the objective before the step.
double actor_update_step(ActorPolicy& actor, const critic::ActionValueFunction& q, const Matrix& states,
                         nn::Adamw& optimizer);

/// Exact K-nearest-neighbour index over dataset states (Euclidean, raw state space).
class KnnActionIndex {
public:
    KnnActionIndex(Matrix states, Matrix actions, std::size_t k = 100);
    static KnnActionIndex from_dataset(const data::TransitionDataset& dataset, std::size_t k = 100);

    std::size_t size() const noexcept { return static_cast<std::size_t>(states_.rows()); }
    std::size_t k() const noexcept { return k_; }
    const Matrix& states() const noexcept { return states_; }
    const Matrix& actions() const noexcept { return actions_; }

    /// min(K, N) distinct dataset indices ordered by distance, ties by lower index.
    std::vector<std::size_t> neighbors(const Vector& state) const;

private:
    Matrix states_;
    Matrix actions_;
    Vector squared_norms_;
    std::size_t k_;
};

/// argmax over the neighbours' actions of q(s, a); ties go to the lowest dataset index.
Vector knn_policy(const KnnActionIndex& index, const critic::ActionValueFunction& q, const Vector& state);

/// Adapters for rollouts.
class ActorEnvPolicy final : public envs::Policy {
public:
    explicit ActorEnvPolicy(const ActorPolicy& actor) : actor_(actor) {}
    Vector act(const Vector& state, nn::RngStream&) const override { return actor_.act(state); }

private:
    const ActorPolicy& actor_;
};

class KnnEnvPolicy final : public envs::Policy {
public:
    KnnEnvPolicy(const KnnActionIndex& index, const critic::ActionValueFunction& q) : index_(index), q_(q) {}
    Vector act(const Vector& state, nn::RngStream&) const override { return knn_policy(index_, q_, state); }

private:
    const KnnActionIndex& index_;
    const critic::ActionValueFunction& q_;
};

}  // namespace yoeo::policy
