#include "yoeo/nn/adamw.hpp"

#include <cmath>
#include <string>

#include "yoeo/errors.hpp"

namespace yoeo::nn {

namespace {

template <typename Span>
void allocate(std::span<const Span> params, std::vector<std::vector<double>>& m, std::vector<std::vector<double>>& v) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
        m.emplace_back(p.size(), 0.0);
        v.emplace_back(p.size(), 0.0);
    }
}

}  // namespace

Adamw::Adamw(AdamwConfig config, std::span<const std::span<double>> params) : config_(config) {
    allocate(params, m_, v_);
}

Adamw::Adamw(AdamwConfig config, std::span<const std::span<const double>> params) : config_(config) {
    allocate(params, m_, v_);
}

void Adamw::step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
        throw ConfigError("adamw: expected " + std::to_string(m_.size()) + " tensors, got " +
                          std::to_string(params.size()) + " params and " + std::to_string(grads.size()) + " grads");
    }
    for (std::size_t t = 0; t < params.size(); ++t) {
        if (params[t].size() != m_[t].size() || grads[t].size() != m_[t].size()) {
            throw ConfigError("adamw: tensor " + std::to_string(t) + " shape mismatch");
        }
        for (std::size_t i = 0; i < grads[t].size(); ++i) {
            if (!std::isfinite(grads[t][i])) {
                throw TrainingError("adamw: non-finite gradient " + std::to_string(grads[t][i]) + " in tensor " +
                                    std::to_string(t) + " at element " + std::to_string(i) + " (step " +
                                    std::to_string(steps_ + 1) + ")");
            }
        }
    }

    ++steps_;
    const double lr = config_.learning_rate;
    const double correction1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double correction2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto& m = m_[t];
        auto& v = v_[t];
        for (std::size_t i = 0; i < params[t].size(); ++i) {
            const double g = grads[t][i];
            m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
            v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            const double p = params[t][i];
            params[t][i] = p - lr * config_.weight_decay * p - lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
        }
    }
}

}  // namespace yoeo::nn
