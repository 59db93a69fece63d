#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "yoeo/config/run_config.hpp"
#include "yoeo/data/dataset.hpp"
#include "yoeo/diagnostics/diagnostics.hpp"
#include "yoeo/envs/oracles.hpp"
#include "yoeo/envs/registry.hpp"
#include "yoeo/envs/tabular.hpp"
#include "yoeo/errors.hpp"
#include "yoeo/nn/checkpoint.hpp"
#include "yoeo/nn/binary_io.hpp"
#include "yoeo/pipeline/pipeline.hpp"

namespace {

using namespace yoeo;
using nlohmann::json;

constexpr int kRuntimeFailure = 1;
constexpr int kUsageFailure = 2;

// Seed precedence: --seed, then the config file, then YOEO_SEED, then 0.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::optional<std::uint64_t> from_config) {
    if (flag) return *flag;
    if (from_config) return *from_config;
    if (const char* env = std::getenv("YOEO_SEED"); env != nullptr && *env != '\0') {
        try {
            std::size_t used = 0;
            const auto value = std::stoull(env, &used);
            if (used == std::string(env).size()) return value;
        } catch (const std::exception&) {
        }
        throw ConfigError(std::string("YOEO_SEED is not an unsigned integer: '") + env + "'");
    }
    return 0;
}

json parse_params(const std::vector<std::string>& pairs) {
    json params = json::object();
    for (const auto& p : pairs) {
        const auto eq = p.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("expected key=value, got '" + p + "'");
        const std::string value = p.substr(eq + 1);
        const json parsed = json::parse(value, nullptr, false);
        params[p.substr(0, eq)] = parsed.is_discarded() ? json(value) : parsed;
    }
    return params;
}

/// Config file, then --set pairs, then the dedicated flags.
struct ConfigOptions {
    std::string file;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;

    void add(CLI::App& app) {
        app.add_option("--config", file, "Config file (key = value with [sections])")->check(CLI::ExistingFile);
        app.add_option("--set", sets, "Override one config key, e.g. --set critic.lambda=1.0")->take_all();
        app.add_option("--seed", seed, "Run seed (falls back to the config, then YOEO_SEED)");
    }

    config::RunConfig load(std::set<std::string>& present) const {
        config::RunConfig c = file.empty() ? config::RunConfig{} : config::load_config(file, &present);
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
            const std::string key = s.substr(0, eq);
            config::set_option(c, key, s.substr(eq + 1));
            present.insert(key);
        }
        c.seed = resolve_seed(seed, present.count("run.seed") ? std::optional(c.seed) : std::nullopt);
        return c;
    }
};

std::unique_ptr<envs::Environment> dataset_env(const data::TransitionDataset& dataset) {
    return envs::env_from_metadata(dataset.metadata());
}

std::shared_ptr<const envs::Policy> behavior_of(const envs::Environment& env, const data::TransitionDataset& dataset) {
    const auto& meta = dataset.metadata();
    const auto tag = envs::behavior_from_string(meta.at("behavior").get<std::string>());
    return envs::make_behavior(env, tag, meta.value("behavior_options", json::object())).step_mixture();
}

config::RunConfig load_run(const std::string& dir) {
    const pipeline::RunPaths paths{dir};
    if (!std::filesystem::exists(paths.config())) throw LoadError("no run found at " + dir + " (missing config.ini)");
    return config::load_config(paths.config());
}

std::shared_ptr<const pipeline::PolicyStage> load_stage(const std::string& dir) {
    const pipeline::RunPaths paths{dir};
    if (!std::filesystem::exists(paths.policy_checkpoint())) {
        throw LoadError("missing checkpoint " + paths.policy_checkpoint() + "; train stage 2 first");
    }
    return std::make_shared<const pipeline::PolicyStage>(
        pipeline::load_policy_stage(nn::Checkpoint::load(paths.policy_checkpoint())));
}

void write_file(const std::string& path, const std::function<void(std::ostream&)>& fill) {
    std::ostringstream out;
    out.precision(17);
    fill(out);
    nn::io::atomic_write(path, out.str());
}

// gen-data

struct GenDataArgs {
    std::string env;
    std::string behavior = "medium";
    std::size_t episodes = 200;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> params;
    std::vector<std::string> behavior_options;
    std::string out;
};

int cmd_gen_data(const GenDataArgs& a) {
    const auto env = envs::make_env(a.env, parse_params(a.params));
    const auto tag = envs::behavior_from_string(a.behavior);
    const std::uint64_t seed = resolve_seed(a.seed, std::nullopt);
    const auto dataset = envs::generate_benchmark_dataset(*env, tag, a.episodes, seed, parse_params(a.behavior_options));
    const std::string out = a.out.empty() ? a.env + "-" + a.behavior + ".yoed" : a.out;
    data::save_dataset(dataset, out);
    nn::io::atomic_write(out + ".json", dataset.metadata().dump(2) + "\n");
    std::cout << "wrote " << out << ": " << dataset.size() << " transitions, " << dataset.episode_count()
              << " episodes, behavior score " << dataset.metadata().at("behavior_score").get<double>() << '\n';
    return 0;
}

// train

struct TrainArgs {
    ConfigOptions config;
    std::string dataset;
    std::string out_dir;
    std::string stage = "all";
    std::optional<std::size_t> steps;
    std::string variant;
    std::optional<double> lambda;
};

int cmd_train(const TrainArgs& a) {
    std::set<std::string> present;
    config::RunConfig c = a.config.load(present);
    if (!a.dataset.empty()) c.dataset = a.dataset;
    if (!a.out_dir.empty()) c.out_dir = a.out_dir;
    if (a.steps) c.value_steps = c.critic_steps = *a.steps;
    if (!a.variant.empty()) c.variant = critic::variant_from_string(a.variant);
    if (a.lambda) c.lambda = *a.lambda;
    if (c.dataset.empty()) throw ConfigError("a dataset is required (--dataset or run.dataset)");
    c.dataset = std::filesystem::absolute(c.dataset).lexically_normal().string();
    const auto dataset = data::load_dataset(c.dataset);
    // The dataset's discount applies unless the config sets one.
    if (!present.count("common.gamma") && dataset.metadata().contains("gamma")) {
        c.gamma = dataset.metadata().at("gamma").get<double>();
    }
    c.env = dataset.metadata().value("env", c.env);
    c.validate();
    pipeline::run_training(c, pipeline::stage_from_string(a.stage), &std::cout);
    std::cout << "artifacts in " << c.out_dir << '\n';
    return 0;
}

// eval

struct EvalArgs {
    std::string run;
    std::string dataset;
    std::string policy = "actor";
    std::size_t trajectories = 100;
    std::optional<std::uint64_t> seed;
};

int cmd_eval(const EvalArgs& a) {
    const bool reference = a.policy == "expert" || a.policy == "random";
    if (!reference && a.run.empty()) throw UsageError("--run is required for the actor and knn policies");
    if (reference && a.run.empty() && a.dataset.empty()) throw UsageError("--run or --dataset is required");
    std::optional<config::RunConfig> c;
    if (!a.run.empty()) c = load_run(a.run);
    const auto dataset = data::load_dataset(a.dataset.empty() ? c->dataset : a.dataset);
    const auto env = dataset_env(dataset);
    std::shared_ptr<const envs::Policy> policy;
    if (a.policy == "expert") {
        policy = envs::expert_policy(*env);
    } else if (a.policy == "random") {
        policy = envs::random_policy(*env);
    } else {
        policy = pipeline::make_run_policy(a.policy, load_stage(a.run), dataset, c->knn_k);
    }
    const auto& meta = dataset.metadata();
    const auto report = pipeline::evaluate_policy(*env, *policy, a.trajectories,
                                                  resolve_seed(a.seed, c ? std::optional(c->seed) : std::nullopt),
                                                  meta.at("random_score").get<double>(), meta.at("expert_score").get<double>());
    std::cout << "policy " << a.policy << " over " << report.trajectories << " trajectories\n"
              << "raw        " << report.mean << " +- " << report.std << '\n'
              << "normalized " << report.normalized_mean << " +- " << report.normalized_std << '\n';
    return 0;
}

// diagnose

struct DiagnoseArgs {
    std::vector<std::string> runs;
    std::string out_dir;
    std::size_t pairs = 10000;
    std::size_t probe_states = 4;
    std::size_t probe_actions = 100;
    std::size_t rollouts = 20;
    std::size_t check_states = 100;
    std::optional<std::uint64_t> seed;
};

int cmd_diagnose(const DiagnoseArgs& a) {
    const auto first = load_run(a.runs.front());
    const auto dataset = data::load_dataset(first.dataset);
    const auto env = dataset_env(dataset);
    const auto behavior = behavior_of(*env, dataset);
    const std::uint64_t seed = resolve_seed(a.seed, first.seed);
    const std::string out = a.out_dir.empty() ? a.runs.front() : a.out_dir;
    std::filesystem::create_directories(out);

    std::vector<std::shared_ptr<const pipeline::PolicyStage>> stages;
    std::vector<diagnostics::NamedCritic> critics;
    for (const auto& dir : a.runs) {
        const auto c = load_run(dir);
        if (c.dataset != first.dataset) throw UsageError("runs compared by diagnose must share one dataset");
        stages.push_back(load_stage(dir));
        critics.push_back({critic::to_string(c.variant) + "@" + std::filesystem::path(dir).filename().string(),
                           &stages.back()->critics});
    }
    diagnostics::CalibrationOptions options;
    options.pairs = a.pairs;
    options.probe_states = a.probe_states;
    options.probe_actions = a.probe_actions;
    options.rollouts = a.rollouts;
    options.seed = seed;
    const auto report = diagnostics::calibration_report(critics, dataset, *env, *behavior, options);
    write_file(out + "/calibration_pairs.csv", [&](std::ostream& o) { report.write_pairs_csv(o); });
    write_file(out + "/calibration_probes.csv", [&](std::ostream& o) { report.write_probes_csv(o); });
    write_file(out + "/calibration_summary.csv", [&](std::ostream& o) { report.write_summary_csv(o); });
    for (std::size_t v = 0; v < report.variants.size(); ++v) {
        std::cout << report.variants[v] << ": on-policy RMSE " << report.rmse(v) << ", discrimination std "
                  << report.discrimination_std(v) << '\n';
    }

    const pipeline::RunPaths paths{a.runs.front()};
    if (std::filesystem::exists(paths.value_checkpoint())) {
        const auto values = value::ValueEnsemble::load(nn::Checkpoint::load(paths.value_checkpoint()));
        nn::RngStream pick(seed, 0x700);
        const auto n = static_cast<Eigen::Index>(std::min(a.check_states, dataset.size()));
        Eigen::MatrixXd states(n, static_cast<Eigen::Index>(dataset.state_dim()));
        Eigen::MatrixXd actions(n, static_cast<Eigen::Index>(dataset.action_dim()));
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto t = static_cast<Eigen::Index>(pick.index(dataset.size()));
            states.row(i) = dataset.states().row(t);
            actions.row(i) = dataset.actions().row(t);
        }
        diagnostics::McCheckOptions check;
        check.rollouts = a.rollouts;
        check.seed = seed;
        const auto mc = diagnostics::mc_consistency_check(values, &stages.front()->critics, *env, *behavior, states, actions, check);
        write_file(out + "/mc_check.csv", [&](std::ostream& o) { mc.write_csv(o); });
        std::cout << "value check: " << mc.flagged() << " of " << mc.values.size() + mc.actions.size()
                  << " flagged at tolerance " << mc.tolerance << (mc.passed() ? " (pass)" : " (fail)") << '\n';
    }
    std::cout << "reports in " << out << '\n';
    return 0;
}

// ablate

struct AblateArgs {
    ConfigOptions config;
    std::vector<std::string> variants{"no_reg", "no_mu", "ens1", "ens3", "full"};
    std::vector<std::string> datasets;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::size_t trajectories = 100;
    std::optional<std::size_t> steps;
    std::string out = "ablation.csv";
};

// label=env:behavior[:episodes][;param=value...]
diagnostics::AblationDataset parse_ablation_dataset(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError("dataset spec must look like label=env:behavior[:episodes], got '" + text + "'");
    diagnostics::AblationDataset d;
    d.label = text.substr(0, eq);
    std::vector<std::string> params;
    std::stringstream tail(text.substr(eq + 1));
    std::string head;
    std::getline(tail, head, ';');
    for (std::string p; std::getline(tail, p, ';');) params.push_back(p);
    d.env_params = parse_params(params);
    std::vector<std::string> parts;
    std::stringstream rest(head);
    for (std::string p; std::getline(rest, p, ':');) parts.push_back(p);
    if (parts.size() < 2 || parts.size() > 3) throw ConfigError("dataset spec '" + text + "' needs env:behavior[:episodes]");
    d.env = parts[0];
    d.behavior = envs::behavior_from_string(parts[1]);
    if (parts.size() == 3) d.episodes = static_cast<std::size_t>(std::stoul(parts[2]));
    return d;
}

int cmd_ablate(const AblateArgs& a) {
    std::set<std::string> present;
    diagnostics::AblationConfig config;
    config.base = a.config.load(present);
    if (a.steps) config.base.value_steps = config.base.critic_steps = *a.steps;
    config.variants = a.variants;
    config.seeds = a.seeds;
    config.eval_trajectories = a.trajectories;
    const std::vector<std::string> specs =
        a.datasets.empty() ? std::vector<std::string>{"medium=pointmass1d:medium", "medium_replay=pointmass1d:medium_replay_mix",
                                                      "mixture=mixture_recovery:medium;reward_scale=10"}
                           : a.datasets;
    for (const auto& s : specs) config.datasets.push_back(parse_ablation_dataset(s));
    const auto grid = diagnostics::run_ablation(config, &std::cout);
    write_file(a.out, [&](std::ostream& o) { grid.write_csv(o); });
    for (const auto& d : config.datasets) {
        for (const auto& v : config.variants) {
            const auto s = grid.mean_score(v, d.label, false);
            std::cout << d.label << ' ' << v << ": " << (s ? std::to_string(*s) : std::string("no finished cell")) << '\n';
        }
    }
    const bool all_ok = std::all_of(grid.cells.begin(), grid.cells.end(), [](const auto& c) { return c.ok; });
    return all_ok ? 0 : kRuntimeFailure;
}

// dp

int cmd_dp(const std::string& env_name, const std::vector<std::string>& params, const std::string& behavior) {
    const auto env = envs::make_env(env_name, parse_params(params));
    const auto* mdp = dynamic_cast<const envs::TabularMdp*>(env.get());
    if (mdp == nullptr) throw UsageError("dp needs a tabular environment, got " + env_name);
    const auto& beta = mdp->behavior(behavior);
    std::cout << envs::dp_solution_to_json(*mdp, beta, envs::solve_dp(*mdp, beta)).dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-stage offline RL: distributional behavior evaluation, pessimistic critic, greedy policy"};
    app.require_subcommand(1);

    GenDataArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "Roll out a behavior policy and save the dataset");
    gen_cmd->add_option("--env", gen.env, "Environment name")->required();
    gen_cmd->add_option("--behavior", gen.behavior, "random, medium, medium_replay_mix, medium_expert_mix or expert");
    gen_cmd->add_option("--episodes", gen.episodes, "Number of episodes")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--seed", gen.seed, "Seed (falls back to YOEO_SEED)");
    gen_cmd->add_option("--param", gen.params, "Environment parameter key=value")->take_all();
    gen_cmd->add_option("--behavior-option", gen.behavior_options, "Behavior option key=value")->take_all();
    gen_cmd->add_option("--out", gen.out, "Dataset path (default <env>-<behavior>.yoed)");

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "Run stage 1, stage 2 or both");
    train.config.add(*train_cmd);
    train_cmd->add_option("--dataset", train.dataset, "Dataset file");
    train_cmd->add_option("--out-dir", train.out_dir, "Run directory");
    train_cmd->add_option("--stage", train.stage, "1, 2 or all")->check(CLI::IsMember({"1", "2", "all", "value", "policy"}));
    train_cmd->add_option("--steps", train.steps, "Steps for both stages")->check(CLI::PositiveNumber);
    train_cmd->add_option("--variant", train.variant, "full, no-reg, no-mu or sarsa-target");
    train_cmd->add_option("--lambda", train.lambda, "Regularizer weight");

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "Roll out a trained policy");
    eval_cmd->add_option("--run", eval.run, "Run directory");
    eval_cmd->add_option("--dataset", eval.dataset, "Dataset (default: the run's; enough alone for expert and random)");
    eval_cmd->add_option("--policy", eval.policy, "actor, knn, or the reference policies expert and random")
        ->check(CLI::IsMember({"actor", "knn", "expert", "random"}));
    eval_cmd->add_option("--trajectories", eval.trajectories, "Episodes to roll out")->check(CLI::PositiveNumber);
    eval_cmd->add_option("--seed", eval.seed, "Evaluation seed (default: the run seed)");

    DiagnoseArgs diag;
    auto* diag_cmd = app.add_subcommand("diagnose", "Calibration report and Monte-Carlo value check");
    diag_cmd->add_option("--run", diag.runs, "Run directory; repeat to compare variants on one dataset")->required()->take_all();
    diag_cmd->add_option("--out-dir", diag.out_dir, "Report directory (default: the first run)");
    diag_cmd->add_option("--pairs", diag.pairs, "Dataset pairs for the on-policy RMSE");
    diag_cmd->add_option("--probe-states", diag.probe_states, "States for the action sweep");
    diag_cmd->add_option("--probe-actions", diag.probe_actions, "Uniform actions per probe state");
    diag_cmd->add_option("--rollouts", diag.rollouts, "Monte-Carlo rollouts per estimate")->check(CLI::PositiveNumber);
    diag_cmd->add_option("--check-states", diag.check_states, "States for the value check");
    diag_cmd->add_option("--seed", diag.seed, "Seed (default: the run seed)");

    AblateArgs abl;
    auto* abl_cmd = app.add_subcommand("ablate", "Train and score a variant x dataset x seed grid");
    abl.config.add(*abl_cmd);
    abl_cmd->add_option("--variants", abl.variants, "Subset of no_reg, no_mu, ens<M>, full")->take_all();
    abl_cmd->add_option("--dataset", abl.datasets, "label=env:behavior[:episodes][;param=value...]; repeatable")->take_all();
    abl_cmd->add_option("--seeds", abl.seeds, "Seeds")->take_all();
    abl_cmd->add_option("--trajectories", abl.trajectories, "Evaluation episodes per cell")->check(CLI::PositiveNumber);
    abl_cmd->add_option("--steps", abl.steps, "Steps for both stages")->check(CLI::PositiveNumber);
    abl_cmd->add_option("--out", abl.out, "CSV path");

    std::string dp_env;
    std::string dp_behavior = "behavior";
    std::vector<std::string> dp_params;
    auto* dp_cmd = app.add_subcommand("dp", "Exact policy evaluation on a tabular environment (JSON)");
    dp_cmd->add_option("--env", dp_env, "Tabular environment name")->required();
    dp_cmd->add_option("--behavior", dp_behavior, "Named behavior policy of the environment");
    dp_cmd->add_option("--param", dp_params, "Environment parameter key=value")->take_all();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsageFailure;
    }

    try {
        if (*gen_cmd) return cmd_gen_data(gen);
        if (*train_cmd) return cmd_train(train);
        if (*eval_cmd) return cmd_eval(eval);
        if (*diag_cmd) return cmd_diagnose(diag);
        if (*abl_cmd) return cmd_ablate(abl);
        if (*dp_cmd) return cmd_dp(dp_env, dp_params, dp_behavior);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsageFailure;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsageFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeFailure;
    }
    return kUsageFailure;
}
