#include "yoeo/envs/environment.hpp"

#include <cmath>

#include "yoeo/errors.hpp"

namespace yoeo::envs {

ActionBounds ActionBounds::symmetric(std::size_t dim, double limit) {
    const auto d = static_cast<Eigen::Index>(dim);
    return {Vector::Constant(d, -limit), Vector::Constant(d, limit)};
}

Vector ActionBounds::clamp(const Vector& action) const {
    return action.cwiseMax(low).cwiseMin(high);
}

bool ActionBounds::contains(const Vector& action) const {
    return action.size() == low.size() && (action.array() >= low.array()).all() &&
           (action.array() <= high.array()).all();
}

Vector ActionBounds::sample_uniform(nn::RngStream& rng) const {
    Vector a(low.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = rng.uniform(low[i], high[i]);
    return a;
}

Trajectory rollout(const Environment& env, const Policy& policy, nn::RngStream& rng, const RolloutOptions& options) {
    Trajectory traj;
    const std::size_t max_steps = options.max_steps.value_or(env.horizon());
    const double gamma = options.gamma.value_or(env.gamma());
    Vector state = options.start_state ? *options.start_state : env.reset(rng);
    if (static_cast<std::size_t>(state.size()) != env.state_dim()) {
        throw ConfigError("rollout start state has the wrong dimension");
    }
    double discount = 1.0;
    for (std::size_t t = 0; t < max_steps; ++t) {
        Vector action = (t == 0 && options.first_action) ? *options.first_action : policy.act(state, rng);
        if (static_cast<std::size_t>(action.size()) != env.action_dim()) {
            throw ConfigError("policy action dimension does not match the environment");
        }
        StepOutcome out = env.step(state, action, rng);
        traj.discounted_return += discount * out.reward;
        traj.undiscounted_return += out.reward;
        discount *= gamma;
        if (options.record) {
            traj.states.push_back(state);
            traj.actions.push_back(action);
            traj.rewards.push_back(out.reward);
            traj.next_states.push_back(out.next_state);
        }
        if (out.terminal) {
            traj.terminated = true;
            break;
        }
        state = std::move(out.next_state);
    }
    return traj;
}

}  // namespace yoeo::envs
