#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "yoeo/value/iqn.hpp"

namespace yoeo::value {

enum class Aggregate { mean, min };

/// Read-only access to a (possibly ensembled) state-value distribution.
class StateValueSource {
public:
    virtual ~StateValueSource() = default;

    virtual std::size_t state_dim() const = 0;
    /// Y(s; tau) per row, aggregated over members.
    virtual Vector quantile(const Matrix& states, double tau, Aggregate aggregate) const = 0;

    /// Average over the midpoint grid tau = (i + 0.5) / grid of the aggregated quantiles.
    Vector expected(const Matrix& states, std::size_t grid, Aggregate aggregate) const;
};

/// Wraps a closure, e.g. an exact oracle in tests and diagnostics.
class FunctionValueSource final : public StateValueSource {
public:
    using Fn = std::function<double(const Vector& state, double tau)>;
    FunctionValueSource(std::size_t state_dim, Fn fn) : state_dim_(state_dim), fn_(std::move(fn)) {}

    std::size_t state_dim() const override { return state_dim_; }
    Vector quantile(const Matrix& states, double tau, Aggregate aggregate) const override;

private:
    std::size_t state_dim_;
    Fn fn_;
};

/// Independently initialised value models trained on the same batches.
class ValueEnsemble final : public StateValueSource {
public:
    ValueEnsemble() = default;
    ValueEnsemble(std::size_t members, std::size_t state_dim, const IqnConfig& config,
                  const nn::AdamwConfig& optimizer, std::uint64_t seed);

    std::size_t size() const noexcept { return members_.size(); }
    std::size_t state_dim() const override;
    QuantileValueModel& member(std::size_t m) { return members_.at(m); }
    const QuantileValueModel& member(std::size_t m) const { return members_.at(m); }

    Vector quantile(const Matrix& states, double tau, Aggregate aggregate) const override;

    /// Which copy answers queries; the EMA target is the default.
    void set_query_net(Net net) noexcept { query_net_ = net; }
    Net query_net() const noexcept { return query_net_; }

    /// One step for every member on a shared n-step batch; returns the per-member losses.
    std::vector<double> train_step(const data::TransitionDataset& dataset, const ValueTrainConfig& config,
                                   nn::RngStream& batch_rng);

    /// Runs `steps` updates. If `csv` is given, every `log_every` steps one row per member is
    /// written: step,member,loss,q10,q50,q90 (quantiles at the first dataset state).
    void train(const data::TransitionDataset& dataset, const ValueTrainConfig& config, std::size_t steps,
               nn::RngStream& batch_rng, std::ostream* csv = nullptr, std::size_t log_every = 1000);

    void save(nn::Checkpoint& checkpoint) const;
    static ValueEnsemble load(const nn::Checkpoint& checkpoint);

private:
    std::vector<QuantileValueModel> members_;
    std::vector<nn::Adamw> optimizers_;
    std::vector<nn::RngStream> member_rngs_;
    Net query_net_ = Net::target;
};

/// Frozen stage-1 quantities for every dataset index, computed once before stage 2.
struct ValueCache {
    Vector bootstrap;  // member-mean Y(next_states[t]; 0.5), or its tau average
    Vector upper;      // min over members of Y(states[t]; tau1)
    Vector lower;      // min over members of Y(states[t]; tau2)
};

enum class BootstrapMode { median, mean };

ValueCache build_value_cache(const StateValueSource& source, const data::TransitionDataset& dataset, double tau1,
                             double tau2, BootstrapMode mode = BootstrapMode::median);

BootstrapMode bootstrap_mode_from_string(const std::string& text);
std::string to_string(BootstrapMode mode);

}  // namespace yoeo::value
