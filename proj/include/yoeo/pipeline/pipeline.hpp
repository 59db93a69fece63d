#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "yoeo/config/run_config.hpp"
#include "yoeo/critic/critic.hpp"
#include "yoeo/data/dataset.hpp"
#include "yoeo/envs/environment.hpp"
#include "yoeo/policy/policies.hpp"
#include "yoeo/value/ensemble.hpp"

namespace yoeo::pipeline {

using config::RunConfig;

/// Stage 1: distributional policy evaluation of the behavior policy.
/// CSV columns: step,member,loss,q10,q50,q90.
value::ValueEnsemble train_value_stage(const RunConfig& config, const data::TransitionDataset& dataset,
                                       std::ostream* csv = nullptr);

/// Frozen stage-1 quantities for stage 2.
value::ValueCache make_value_cache(const RunConfig& config, const data::TransitionDataset& dataset,
                                   const value::StateValueSource& values);

struct PolicyStage {
    critic::CriticEnsemble critics;
    policy::ActorPolicy actor;
    double temperature = 1.0;
};

/// Optional hook called every log interval with the step count; used for periodic checkpoints.
using StageCallback = std::function<void(std::size_t step, const PolicyStage&)>;

/// Stage 2: critic and actor updates interleaved, one each per iteration. `cache` may be null only
/// for the no_reg variant. CSV columns: step,member,loss,supervised,regularizer,actor_objective.
PolicyStage train_policy_stage(const RunConfig& config, const data::TransitionDataset& dataset,
                               const value::ValueCache* cache, const envs::ActionBounds& bounds,
                               std::ostream* csv = nullptr, const StageCallback& on_log = {});

void save_policy_stage(const PolicyStage& stage, nn::Checkpoint& checkpoint);
PolicyStage load_policy_stage(const nn::Checkpoint& checkpoint);

/// Files of one run directory.
struct RunPaths {
    std::string dir;
    std::string config() const { return dir + "/config.ini"; }
    std::string value_checkpoint() const { return dir + "/value.ckpt"; }
    std::string policy_checkpoint() const { return dir + "/policy.ckpt"; }
    std::string value_metrics() const { return dir + "/value_metrics.csv"; }
    std::string policy_metrics() const { return dir + "/policy_metrics.csv"; }
};

enum class Stage { value, policy, all };
Stage stage_from_string(const std::string& text);

/// Runs the requested stages for config.dataset and writes every artifact under config.out_dir.
/// Stage `policy` alone reloads value.ckpt. On a training error the last saved checkpoint stays in place.
void run_training(const RunConfig& config, Stage stage = Stage::all, std::ostream* log = nullptr);

struct EvalReport {
    std::size_t trajectories = 0;
    double mean = 0.0;  // undiscounted return
    double std = 0.0;
    double normalized_mean = 0.0;
    double normalized_std = 0.0;
    std::vector<double> returns;
};

/// Rolls out `trajectories` episodes from d0 and normalizes against the given reference scores.
EvalReport evaluate_policy(const envs::Environment& env, const envs::Policy& policy, std::size_t trajectories,
                           std::uint64_t seed, double random_score, double expert_score);

/// Extracted policy of a trained run ("actor" or "knn"); keeps the artifacts it references alive.
std::shared_ptr<const envs::Policy> make_run_policy(const std::string& kind, std::shared_ptr<const PolicyStage> stage,
                                                    const data::TransitionDataset& dataset, std::size_t knn_k);

}  // namespace yoeo::pipeline
