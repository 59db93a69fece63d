#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "yoeo/config/run_config.hpp"
#include "yoeo/critic/critic.hpp"
#include "yoeo/data/dataset.hpp"
#include "yoeo/envs/behavior.hpp"
#include "yoeo/envs/environment.hpp"
#include "yoeo/value/ensemble.hpp"

namespace yoeo::diagnostics {

using nn::Matrix;
using nn::Vector;

struct NamedCritic {
    std::string name;
    const critic::ActionValueFunction* critic = nullptr;
};

struct CalibrationOptions {
    std::size_t pairs = 10000;       // on-policy (s, a) rows
    std::size_t probe_states = 4;
    std::size_t probe_actions = 100;  // uniform actions per probe state
    std::size_t rollouts = 20;        // MC rollouts per estimate
    std::uint64_t seed = 0;
};

/// Critic predictions against Monte-Carlo returns of the behavior policy.
struct CalibrationReport {
    std::vector<std::string> variants;

    // On-policy rows drawn from the dataset.
    std::vector<std::size_t> pair_index;
    Vector pair_mc;
    Matrix pair_predicted;  // pairs x variants

    // Uniform actions at a few dataset states.
    std::vector<std::size_t> probe_index;
    Vector probe_mc_value;  // MC state value of each probe state
    Matrix probe_actions;   // (probe_states * probe_actions) x action_dim, grouped by state
    Matrix probe_predicted;  // same rows x variants

    std::size_t probe_actions_per_state = 0;

    /// sqrt(mean (prediction - MC)^2) over the on-policy rows.
    double rmse(std::size_t variant) const;
    /// Mean over probe states of the standard deviation of predictions across uniform actions.
    double discrimination_std(std::size_t variant) const;
    std::size_t variant_index(const std::string& name) const;

    /// Columns: index,mc,<variant>...
    void write_pairs_csv(std::ostream& out) const;
    /// Columns: probe,state_index,mc_value,a0..,<variant>...
    void write_probes_csv(std::ostream& out) const;
    /// Columns: variant,rmse,discrimination_std
    void write_summary_csv(std::ostream& out) const;
};

/// UsageError if no critic is given or any critic pointer is null.
CalibrationReport calibration_report(const std::vector<NamedCritic>& critics, const data::TransitionDataset& dataset,
                                     const envs::Environment& env, const envs::Policy& behavior,
                                     const CalibrationOptions& options = {});

struct McCheckOptions {
    std::size_t rollouts = 100;
    double tolerance_fraction = 0.1;    // of the value range
    std::optional<double> value_range;  // default: range of the MC means over the checked states
    std::size_t tau_grid = 64;          // midpoints for E[Y]
    std::uint64_t seed = 0;
};

struct McCheckRow {
    double predicted = 0.0;  // E[Y(s)] or Q(s, a)
    double mc_mean = 0.0;
    double mc_standard_error = 0.0;
    bool flagged = false;
};

struct McCheckReport {
    double tolerance = 0.0;
    std::vector<McCheckRow> values;   // per state
    std::vector<McCheckRow> actions;  // per (state, action) pair, if a critic was given
    std::size_t flagged() const;
    double flagged_fraction() const;
    bool passed() const { return flagged() == 0; }
    void write_csv(std::ostream& out) const;
};

/// Compares E_tau[Y(s; tau)] (member mean) with behavior MC returns at `states`; if `critic` and `actions`
/// are given, also ensemble-min Q(s, a) with MC returns forced through a.
McCheckReport mc_consistency_check(const value::StateValueSource& values, const critic::ActionValueFunction* critic,
                                   const envs::Environment& env, const envs::Policy& behavior, const Matrix& states,
                                   const std::optional<Matrix>& actions, const McCheckOptions& options = {});

/// One dataset of the ablation grid: an environment plus the behavior that generates it.
struct AblationDataset {
    std::string label;
    std::string env;
    nlohmann::json env_params = nlohmann::json::object();
    envs::BehaviorTag behavior = envs::BehaviorTag::medium;
    nlohmann::json behavior_options = nlohmann::json::object();
    std::size_t episodes = 200;
};

struct AblationConfig {
    config::RunConfig base;
    std::vector<std::string> variants{"no_reg", "no_mu", "ens1", "ens3", "full"};
    std::vector<AblationDataset> datasets;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::size_t eval_trajectories = 100;
};

/// Variant names: full, no_reg, no_mu, sarsa_target, ens<M> (full with M critics).
config::RunConfig apply_ablation_variant(const config::RunConfig& base, const std::string& variant);

struct AblationCell {
    std::string variant;
    std::string dataset;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double actor_score = 0.0;  // normalized
    double knn_score = 0.0;    // normalized
    double behavior_score = 0.0;
};

struct AblationGrid {
    std::vector<AblationCell> cells;

    /// Mean normalized score over the successful seeds of one (variant, dataset); nullopt if none succeeded.
    std::optional<double> mean_score(const std::string& variant, const std::string& dataset, bool knn = false) const;
    /// Columns: variant,dataset,seed,status,actor_score,knn_score,behavior_score,error
    void write_csv(std::ostream& out) const;
};

/// Trains and evaluates every (variant, dataset, seed) cell. Stage 1 is shared by the variants of one
/// (dataset, seed). Training errors fail the cell only.
AblationGrid run_ablation(const AblationConfig& config, std::ostream* log = nullptr);

}  // namespace yoeo::diagnostics
