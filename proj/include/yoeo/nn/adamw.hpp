#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace yoeo::nn {

struct AdamwConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
};

/// AdamW with decoupled weight decay:
///   p <- p - lr * wd * p - lr * m_hat / (sqrt(v_hat) + eps)
class Adamw {
public:
    Adamw() = default;
    Adamw(AdamwConfig config, std::span<const std::span<double>> params);
    Adamw(AdamwConfig config, std::span<const std::span<const double>> params);

    /// Throws TrainingError naming the tensor and element on a non-finite gradient;
    /// in that case no parameter is touched.
    void step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads);

    std::uint64_t step_count() const noexcept { return steps_; }
    const AdamwConfig& config() const noexcept { return config_; }
    void set_learning_rate(double lr) noexcept { config_.learning_rate = lr; }

    const std::vector<std::vector<double>>& first_moment() const noexcept { return m_; }
    const std::vector<std::vector<double>>& second_moment() const noexcept { return v_; }

private:
    AdamwConfig config_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::uint64_t steps_ = 0;
};

}  // namespace yoeo::nn
