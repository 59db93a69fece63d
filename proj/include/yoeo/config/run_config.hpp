#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "yoeo/critic/critic.hpp"
#include "yoeo/nn/adamw.hpp"
#include "yoeo/policy/policies.hpp"
#include "yoeo/value/ensemble.hpp"
#include "yoeo/value/iqn.hpp"

namespace yoeo::config {

/// Every knob of a run, with library defaults.
struct RunConfig {
    // [run]
    std::string env = "pointmass1d";
    std::string dataset;
    std::string out_dir = "run";
    std::uint64_t seed = 0;
    critic::Variant variant = critic::Variant::full;

    // [common]
    double gamma = 0.99;
    std::size_t n_step = 10;
    std::size_t batch = 100;

    // [value]
    std::size_t value_members = 5;
    std::size_t value_steps = 1'000'000;
    double value_lr = 1e-4;
    double value_weight_decay = 0.0;
    std::size_t feature_dim = 64;
    std::size_t value_hidden = 256;
    std::size_t value_depth = 2;
    std::size_t n_tau = 16;
    std::size_t n_tau_target = 16;
    double kappa = 1.0;
    double ema_decay = 0.995;
    value::BootstrapMode bootstrap = value::BootstrapMode::median;

    // [critic]
    std::size_t critic_members = 5;
    std::size_t critic_steps = 1'000'000;
    double critic_lr = 1e-3;
    double critic_weight_decay = 1e-8;
    std::size_t critic_hidden = 256;
    std::size_t critic_depth = 2;
    double lambda = 0.1;
    std::size_t samples = 10;  // n_b
    double tau1 = 0.9;
    double tau2 = 0.1;
    std::optional<double> temperature = 1.0;  // "auto": dataset return range
    double target_decay = 0.995;

    // [actor]
    double actor_lr = 3e-4;
    double actor_weight_decay = 0.0;
    std::size_t actor_hidden = 256;
    std::size_t actor_depth = 2;
    double noise = 0.3;
    double noise_clip = 0.5;

    // [policy]
    std::size_t knn_k = 100;

    // [eval]
    std::size_t trajectories = 100;
    std::string policy = "actor";

    // [log]
    std::size_t log_every = 1000;

    /// ConfigError naming the offending key.
    void validate() const;

    value::IqnConfig iqn() const;
    value::ValueTrainConfig value_train() const;
    nn::AdamwConfig value_optimizer() const;
    critic::CriticConfig critic_config() const;
    policy::ActorConfig actor_config() const;
    nn::AdamwConfig actor_optimizer() const;

    bool operator==(const RunConfig&) const = default;
};

/// "section.key" names in canonical order.
std::vector<std::string> config_keys();

std::string get_option(const RunConfig& config, const std::string& key);
/// Sets one "section.key"; ConfigError for unknown keys or unparsable values. Does not validate.
void set_option(RunConfig& config, const std::string& key, const std::string& value);

/// Flat "key = value" text with [section] headers and '#' comments. Missing keys keep their defaults;
/// unknown sections or keys, duplicates and malformed lines are ConfigErrors. The result is validated.
/// `present` receives the keys the text sets explicitly.
RunConfig parse_config(const std::string& text, std::set<std::string>* present = nullptr);
/// Canonical form: every key, fixed order, shortest round-trip numbers.
std::string serialize_config(const RunConfig& config);

RunConfig load_config(const std::string& path, std::set<std::string>* present = nullptr);
void save_config(const RunConfig& config, const std::string& path);

}  // namespace yoeo::config
