#include "yoeo/envs/point_mass.hpp"

#include <algorithm>
#include <cmath>

#include "yoeo/errors.hpp"

namespace yoeo::envs {

PointMass1D::PointMass1D(PointMassParams params) : params_(params), bounds_(ActionBounds::symmetric(1)) {
    if (!(params_.dt > 0.0) || !(params_.accel > 0.0)) throw ConfigError("pointmass1d needs positive dt and accel");
    if (!(params_.damping >= 0.0 && params_.damping <= 1.0)) throw ConfigError("pointmass1d damping must lie in [0, 1]");
    if (!(params_.stall > 0.0)) throw ConfigError("pointmass1d stall threshold must be positive");
    if (!(params_.gamma >= 0.0 && params_.gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
    if (params_.horizon == 0) throw ConfigError("horizon must be positive");
}

double PointMass1D::thrust(double action) const {
    const double a = std::clamp(action, -1.0, 1.0);
    const double mag = std::abs(a);
    if (mag <= params_.stall || params_.stall >= 1.0) return a;
    // Linear fold-back from +stall at |a| = stall to -stall at |a| = 1.
    const double frac = (mag - params_.stall) / (1.0 - params_.stall);
    return (a < 0.0 ? -1.0 : 1.0) * params_.stall * (1.0 - 2.0 * frac);
}

Vector PointMass1D::reset(nn::RngStream& rng) const {
    const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
    Vector s(2);
    s[0] = params_.goal + side * (params_.start_center + rng.uniform(-params_.start_jitter, params_.start_jitter));
    s[1] = 0.0;
    return s;
}

StepOutcome PointMass1D::step(const Vector& state, const Vector& action, nn::RngStream&) const {
    if (state.size() != 2 || action.size() != 1) throw ConfigError("pointmass1d expects a 2-d state and a scalar action");
    StepOutcome out;
    out.reward = -std::abs(state[0] - params_.goal);
    const double v = params_.damping * state[1] + params_.dt * params_.accel * thrust(action[0]);
    out.next_state.resize(2);
    out.next_state[0] = state[0] + params_.dt * v;
    out.next_state[1] = v;
    return out;
}

PdController::PdController(const PointMass1D& env, double kp, double kd, double saturation, double noise_std)
    : goal_(env.params().goal), kp_(kp), kd_(kd), saturation_(saturation), noise_std_(noise_std) {
    if (noise_std_ < 0.0) throw ConfigError("controller noise must be non-negative");
}

double PdController::mean_action(const Vector& state) const {
    return std::clamp(-kp_ * (state[0] - goal_) - kd_ * state[1], -saturation_, saturation_);
}

Vector PdController::act(const Vector& state, nn::RngStream& rng) const {
    double a = mean_action(state);
    if (noise_std_ > 0.0) a += rng.normal(0.0, noise_std_);
    Vector out(1);
    out[0] = std::clamp(a, -1.0, 1.0);
    return out;
}

}  // namespace yoeo::envs
