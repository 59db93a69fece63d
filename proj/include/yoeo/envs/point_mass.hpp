#pragma once

#include "yoeo/envs/environment.hpp"

namespace yoeo::envs {

struct PointMassParams {
    double goal = 0.0;
    double dt = 0.1;
    double accel = 5.0;
    double damping = 0.95;
    /// Commands with |a| above this stall the thruster: thrust folds back linearly and reverses at |a| = 1.
    double stall = 0.8;
    double start_center = 2.0;
    double start_jitter = 0.25;
    std::size_t horizon = 50;
    double gamma = 0.9;
};

/// 1-D point mass, state (x, v), action a in [-1, 1], reward -|x - goal| on the current state.
class PointMass1D final : public Environment {
public:
    explicit PointMass1D(PointMassParams params = {});

    std::string name() const override { return "pointmass1d"; }
    std::size_t state_dim() const override { return 2; }
    const ActionBounds& bounds() const override { return bounds_; }
    std::size_t horizon() const override { return params_.horizon; }
    double gamma() const override { return params_.gamma; }

    Vector reset(nn::RngStream& rng) const override;
    StepOutcome step(const Vector& state, const Vector& action, nn::RngStream& rng) const override;

    const PointMassParams& params() const noexcept { return params_; }
    double thrust(double action) const;

private:
    PointMassParams params_;
    ActionBounds bounds_;
};

/// Saturated PD controller toward the goal with optional Gaussian action noise.
class PdController final : public Policy {
public:
    PdController(const PointMass1D& env, double kp, double kd, double saturation, double noise_std = 0.0);
    Vector act(const Vector& state, nn::RngStream& rng) const override;
    double mean_action(const Vector& state) const;

private:
    double goal_;
    double kp_;
    double kd_;
    double saturation_;
    double noise_std_;
};

struct PdGains {
    double kp = 1.8;
    double kd = 1.2;
    double saturation = 0.75;
};

inline constexpr PdGains kExpertGains{};

}  // namespace yoeo::envs
