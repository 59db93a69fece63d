#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "yoeo/nn/rng.hpp"

namespace yoeo::envs {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct ActionBounds {
    Vector low;
    Vector high;

    static ActionBounds symmetric(std::size_t dim, double limit = 1.0);

    std::size_t dim() const noexcept { return static_cast<std::size_t>(low.size()); }
    Vector center() const { return 0.5 * (low + high); }
    Vector half_range() const { return 0.5 * (high - low); }
    Vector clamp(const Vector& action) const;
    bool contains(const Vector& action) const;
    Vector sample_uniform(nn::RngStream& rng) const;
};

struct StepOutcome {
    Vector next_state;
    double reward = 0.0;
    bool terminal = false;
};

/// MDP (S, A, T, d0, r, gamma) with a finite horizon H. Environments are stateless value
/// objects: step() maps (s, a) to an outcome, so rollouts may start from any state.
class Environment {
public:
    virtual ~Environment() = default;

    virtual std::string name() const = 0;
    virtual std::size_t state_dim() const = 0;
    virtual const ActionBounds& bounds() const = 0;
    virtual std::size_t horizon() const = 0;
    /// Discount used by value oracles and recorded in generated datasets.
    virtual double gamma() const = 0;

    virtual Vector reset(nn::RngStream& rng) const = 0;
    virtual StepOutcome step(const Vector& state, const Vector& action, nn::RngStream& rng) const = 0;

    std::size_t action_dim() const { return bounds().dim(); }
};

class Policy {
public:
    virtual ~Policy() = default;
    virtual Vector act(const Vector& state, nn::RngStream& rng) const = 0;
};

class FunctionPolicy final : public Policy {
public:
    using Fn = std::function<Vector(const Vector&, nn::RngStream&)>;
    explicit FunctionPolicy(Fn fn) : fn_(std::move(fn)) {}
    Vector act(const Vector& state, nn::RngStream& rng) const override { return fn_(state, rng); }

private:
    Fn fn_;
};

class UniformPolicy final : public Policy {
public:
    explicit UniformPolicy(ActionBounds bounds) : bounds_(std::move(bounds)) {}
    Vector act(const Vector&, nn::RngStream& rng) const override { return bounds_.sample_uniform(rng); }

private:
    ActionBounds bounds_;
};

struct Trajectory {
    std::vector<Vector> states;
    std::vector<Vector> actions;
    std::vector<double> rewards;
    std::vector<Vector> next_states;
    bool terminated = false;  // true termination (as opposed to reaching max_steps)
    double discounted_return = 0.0;
    double undiscounted_return = 0.0;

    std::size_t length() const noexcept { return rewards.size(); }
};

struct RolloutOptions {
    std::optional<Vector> start_state;   // default: draw from d0
    std::optional<Vector> first_action;  // default: ask the policy
    std::optional<std::size_t> max_steps;
    std::optional<double> gamma;  // default: env.gamma()
    bool record = true;           // keep per-step arrays
};

/// Runs one episode of at most min(max_steps, H) steps.
Trajectory rollout(const Environment& env, const Policy& policy, nn::RngStream& rng,
                   const RolloutOptions& options = {});

}  // namespace yoeo::envs
