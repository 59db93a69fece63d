#include "yoeo/pipeline/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "yoeo/envs/oracles.hpp"
#include "yoeo/envs/registry.hpp"
#include "yoeo/errors.hpp"

namespace yoeo::pipeline {

using nn::Matrix;
using nn::Vector;

namespace {

constexpr std::uint64_t kValueBatchStream = 0x100;
constexpr std::uint64_t kCriticBatchStream = 0x200;
constexpr std::uint64_t kActorBatchStream = 0x300;
constexpr std::uint64_t kEvalStream = 0x400;

Matrix sample_states(const data::TransitionDataset& dataset, std::size_t batch, nn::RngStream& rng) {
    Matrix s(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(dataset.state_dim()));
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        s.row(i) = dataset.states().row(static_cast<Eigen::Index>(rng.index(dataset.size())));
    }
    return s;
}

// Knn policy bundled with the stage it reads from.
class OwningKnnPolicy final : public envs::Policy {
public:
    OwningKnnPolicy(std::shared_ptr<const PolicyStage> stage, policy::KnnActionIndex index)
        : stage_(std::move(stage)), index_(std::move(index)) {}
    Vector act(const Vector& state, nn::RngStream&) const override {
        return policy::knn_policy(index_, stage_->critics, state);
    }

private:
    std::shared_ptr<const PolicyStage> stage_;
    policy::KnnActionIndex index_;
};

class OwningActorPolicy final : public envs::Policy {
public:
    explicit OwningActorPolicy(std::shared_ptr<const PolicyStage> stage) : stage_(std::move(stage)) {}
    Vector act(const Vector& state, nn::RngStream&) const override { return stage_->actor.act(state); }

private:
    std::shared_ptr<const PolicyStage> stage_;
};

}  // namespace

value::ValueEnsemble train_value_stage(const RunConfig& config, const data::TransitionDataset& dataset,
                                       std::ostream* csv) {
    config.validate();
    value::ValueEnsemble values(config.value_members, dataset.state_dim(), config.iqn(), config.value_optimizer(),
                                config.seed);
    nn::RngStream batch_rng(config.seed, kValueBatchStream);
    values.train(dataset, config.value_train(), config.value_steps, batch_rng, csv, config.log_every);
    return values;
}

value::ValueCache make_value_cache(const RunConfig& config, const data::TransitionDataset& dataset,
                                   const value::StateValueSource& values) {
    return value::build_value_cache(values, dataset, config.tau1, config.tau2, config.bootstrap);
}

PolicyStage train_policy_stage(const RunConfig& config, const data::TransitionDataset& dataset,
                               const value::ValueCache* cache, const envs::ActionBounds& bounds, std::ostream* csv,
                               const StageCallback& on_log) {
    config.validate();
    PolicyStage stage;
    stage.critics = critic::CriticEnsemble(config.critic_members, dataset.state_dim(), dataset.action_dim(),
                                           config.critic_hidden, config.critic_depth, config.seed);
    stage.actor = policy::ActorPolicy(dataset.state_dim(), bounds, config.actor_config(), config.seed);
    critic::CriticTrainer trainer(stage.critics, config.critic_config(), dataset, cache, bounds, config.seed);
    stage.temperature = trainer.temperature();
    nn::Adamw actor_opt(config.actor_optimizer(), stage.actor.network().parameters());
    nn::RngStream critic_rng(config.seed, kCriticBatchStream);
    nn::RngStream actor_rng(config.seed, kActorBatchStream);

    if (csv != nullptr) *csv << "step,member,loss,supervised,regularizer,actor_objective\n";
    for (std::size_t step = 1; step <= config.critic_steps; ++step) {
        const auto losses = trainer.step(&stage.actor, critic_rng);
        const Matrix states = sample_states(dataset, config.batch, actor_rng);
        const double objective = policy::actor_update_step(stage.actor, stage.critics, states, actor_opt);
        if (step % config.log_every == 0 || step == config.critic_steps) {
            if (csv != nullptr) {
                for (std::size_t m = 0; m < losses.size(); ++m) {
                    *csv << step << ',' << m << ',' << losses[m].total << ',' << losses[m].supervised << ','
                         << losses[m].regularizer << ',' << objective << '\n';
                }
            }
            if (on_log) on_log(step, stage);
        }
    }
    return stage;
}

void save_policy_stage(const PolicyStage& stage, nn::Checkpoint& checkpoint) {
    stage.critics.save(checkpoint);
    stage.actor.save(checkpoint);
    checkpoint.add_scalar("critic.temperature", stage.temperature);
}

PolicyStage load_policy_stage(const nn::Checkpoint& checkpoint) {
    PolicyStage stage;
    stage.critics = critic::CriticEnsemble::load(checkpoint);
    stage.actor = policy::ActorPolicy::load(checkpoint);
    stage.temperature = checkpoint.scalar("critic.temperature");
    return stage;
}

Stage stage_from_string(const std::string& text) {
    if (text == "1" || text == "value") return Stage::value;
    if (text == "2" || text == "policy") return Stage::policy;
    if (text == "all") return Stage::all;
    throw ConfigError("unknown stage '" + text + "' (expected 1, 2 or all)");
}

void run_training(const RunConfig& config, Stage stage, std::ostream* log) {
    config.validate();
    if (config.dataset.empty()) throw ConfigError("run.dataset is required for training");
    const auto dataset = data::load_dataset(config.dataset);
    const auto env = envs::env_from_metadata(dataset.metadata());
    const RunPaths paths{config.out_dir};
    std::filesystem::create_directories(paths.dir);
    config::save_config(config, paths.config());

    std::optional<value::ValueEnsemble> values;
    if (stage != Stage::policy) {
        if (log != nullptr) *log << "stage 1: " << config.value_steps << " steps, " << config.value_members << " members\n";
        std::ofstream csv(paths.value_metrics());
        values = train_value_stage(config, dataset, &csv);
        nn::Checkpoint ck;
        values->save(ck);
        ck.save(paths.value_checkpoint());
    }
    if (stage == Stage::value) return;

    const bool needs_value = config.variant != critic::Variant::no_reg;
    std::optional<value::ValueCache> cache;
    if (needs_value) {
        if (!values) {
            if (!std::filesystem::exists(paths.value_checkpoint())) {
                throw UsageError("stage 2 needs " + paths.value_checkpoint() + "; run stage 1 first");
            }
            values = value::ValueEnsemble::load(nn::Checkpoint::load(paths.value_checkpoint()));
        }
        cache = make_value_cache(config, dataset, *values);
    }
    if (log != nullptr) *log << "stage 2: " << config.critic_steps << " steps, variant " << critic::to_string(config.variant) << '\n';
    std::ofstream csv(paths.policy_metrics());
    auto checkpoint = [&](std::size_t, const PolicyStage& s) {
        nn::Checkpoint ck;
        save_policy_stage(s, ck);
        ck.save(paths.policy_checkpoint());
    };
    const PolicyStage result =
        train_policy_stage(config, dataset, cache ? &*cache : nullptr, env->bounds(), &csv, checkpoint);
    checkpoint(config.critic_steps, result);
}

EvalReport evaluate_policy(const envs::Environment& env, const envs::Policy& policy, std::size_t trajectories,
                           std::uint64_t seed, double random_score, double expert_score) {
    if (trajectories == 0) throw UsageError("evaluation needs at least one trajectory");
    EvalReport report;
    report.trajectories = trajectories;
    nn::RngStream rng(seed, kEvalStream);
    envs::RolloutOptions options;
    options.record = false;
    for (std::size_t i = 0; i < trajectories; ++i) {
        report.returns.push_back(envs::rollout(env, policy, rng, options).undiscounted_return);
    }
    const auto stats = envs::summarize_returns(report.returns);
    report.mean = stats.mean;
    report.std = stats.std;
    report.normalized_mean = envs::normalized_score(stats.mean, random_score, expert_score);
    report.normalized_std = 100.0 * stats.std / std::abs(expert_score - random_score);
    return report;
}

std::shared_ptr<const envs::Policy> make_run_policy(const std::string& kind, std::shared_ptr<const PolicyStage> stage,
                                                    const data::TransitionDataset& dataset, std::size_t knn_k) {
    if (kind == "actor") return std::make_shared<OwningActorPolicy>(std::move(stage));
    if (kind == "knn") {
        return std::make_shared<OwningKnnPolicy>(std::move(stage), policy::KnnActionIndex::from_dataset(dataset, knn_k));
    }
    throw ConfigError("unknown policy '" + kind + "' (expected actor or knn)");
}

}  // namespace yoeo::pipeline
