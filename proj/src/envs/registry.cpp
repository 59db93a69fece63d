#include "yoeo/envs/registry.hpp"

#include <functional>
#include <map>

#include "yoeo/envs/point_mass.hpp"
#include "yoeo/envs/tabular.hpp"
#include "yoeo/errors.hpp"

namespace yoeo::envs {

namespace {

constexpr double kDefaultMediumNoise = 0.1;
constexpr double kDefaultMediumSaturation = 0.2;
constexpr std::size_t kReplayCheckpoints = 5;
constexpr std::uint64_t kReferenceStream = 0x5eed'0001;
constexpr std::uint64_t kDataStream = 0x5eed'0002;

void reject_unknown(const nlohmann::json& params, const std::vector<std::string>& allowed, const std::string& what) {
    if (!params.is_object()) throw ConfigError(what + " parameters must be a JSON object");
    for (const auto& [key, _] : params.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ConfigError("unknown parameter '" + key + "' for " + what);
        }
    }
}

template <typename T>
void read_into(const nlohmann::json& params, const char* key, T& out) {
    if (params.contains(key)) out = params.at(key).get<T>();
}

std::unique_ptr<Environment> make_tabular(const std::string& name, const nlohmann::json& params) {
    double gamma = name == "two_state_absorbing" ? 0.9 : 0.99;
    std::size_t horizon = 400;
    double reward_scale = 1.0;
    reject_unknown(params, name == "two_state_absorbing" ? std::vector<std::string>{"gamma", "horizon", "reward_scale"}
                                                         : std::vector<std::string>{"gamma", "reward_scale"},
                   name);
    read_into(params, "gamma", gamma);
    read_into(params, "horizon", horizon);
    read_into(params, "reward_scale", reward_scale);
    auto build = [&]() {
        if (name == "det_chain") return make_deterministic_chain(5, gamma);
        if (name == "bernoulli_one_step") return make_bernoulli_one_step(gamma);
        if (name == "bandit_chain") return make_bandit_chain(5, gamma);
        if (name == "mixture_recovery") return make_mixture_recovery(6, gamma);
        return make_two_state_absorbing(gamma, horizon);
    };
    auto env = std::make_unique<TabularMdp>(build());
    if (reward_scale != 1.0) env->scale_rewards(reward_scale);
    return env;
}

const PointMass1D& as_point_mass(const Environment& env) {
    const auto* pm = dynamic_cast<const PointMass1D*>(&env);
    if (pm == nullptr) throw UsageError("expected the pointmass1d environment, got " + env.name());
    return *pm;
}

std::shared_ptr<const Policy> pd(const PointMass1D& env, double saturation, double noise) {
    return std::make_shared<PdController>(env, kExpertGains.kp, kExpertGains.kd, saturation, noise);
}

}  // namespace

std::vector<std::string> env_names() {
    return {"pointmass1d", "det_chain", "bernoulli_one_step", "bandit_chain", "mixture_recovery", "two_state_absorbing"};
}

std::unique_ptr<Environment> make_env(const std::string& name, const nlohmann::json& params) {
    if (name == "pointmass1d") {
        reject_unknown(params,
                       {"goal", "dt", "accel", "damping", "stall", "start_center", "start_jitter", "horizon", "gamma"},
                       name);
        PointMassParams p;
        read_into(params, "goal", p.goal);
        read_into(params, "dt", p.dt);
        read_into(params, "accel", p.accel);
        read_into(params, "damping", p.damping);
        read_into(params, "stall", p.stall);
        read_into(params, "start_center", p.start_center);
        read_into(params, "start_jitter", p.start_jitter);
        read_into(params, "horizon", p.horizon);
        read_into(params, "gamma", p.gamma);
        return std::make_unique<PointMass1D>(p);
    }
    const auto names = env_names();
    if (std::find(names.begin(), names.end(), name) != names.end()) return make_tabular(name, params);
    std::string known;
    for (const auto& n : names) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown environment '" + name + "' (known: " + known + ")");
}

nlohmann::json env_params(const Environment& env) {
    if (const auto* pm = dynamic_cast<const PointMass1D*>(&env)) {
        const auto& p = pm->params();
        return {{"goal", p.goal},     {"dt", p.dt},
                {"accel", p.accel},   {"damping", p.damping},
                {"stall", p.stall},   {"start_center", p.start_center},
                {"start_jitter", p.start_jitter}, {"horizon", p.horizon},
                {"gamma", p.gamma}};
    }
    nlohmann::json j = {{"gamma", env.gamma()}};
    if (env.name() == "two_state_absorbing") j["horizon"] = env.horizon();
    if (const auto* mdp = dynamic_cast<const TabularMdp*>(&env); mdp != nullptr && mdp->reward_scale() != 1.0) {
        j["reward_scale"] = mdp->reward_scale();
    }
    return j;
}

std::shared_ptr<const Policy> expert_policy(const Environment& env) {
    if (const auto* tab = dynamic_cast<const TabularMdp*>(&env)) {
        return std::make_shared<TabularPolicy>(tab->behavior("expert"));
    }
    return pd(as_point_mass(env), kExpertGains.saturation, 0.0);
}

std::shared_ptr<const Policy> random_policy(const Environment& env) {
    return std::make_shared<UniformPolicy>(env.bounds());
}

BehaviorPolicySpec make_behavior(const Environment& env, BehaviorTag tag, const nlohmann::json& options) {
    BehaviorPolicySpec spec;
    spec.tag = tag;
    if (tag == BehaviorTag::random) {
        reject_unknown(options, {}, "random behavior");
        spec.components = {{"random", random_policy(env), 1.0}};
        return spec;
    }
    if (tag == BehaviorTag::expert) {
        reject_unknown(options, {}, "expert behavior");
        spec.components = {{"expert", expert_policy(env), 1.0}};
        return spec;
    }
    if (const auto* tab = dynamic_cast<const TabularMdp*>(&env)) {
        if (tag != BehaviorTag::medium) {
            throw ConfigError("tabular environment " + env.name() + " supports random, medium and expert behaviors");
        }
        reject_unknown(options, {}, "tabular behavior");
        spec.components = {{"behavior", std::make_shared<TabularPolicy>(tab->behavior("behavior")), 1.0}};
        return spec;
    }

    const PointMass1D& pm = as_point_mass(env);
    reject_unknown(options, {"medium_noise", "medium_saturation"}, "pointmass1d behavior");
    double noise = kDefaultMediumNoise;
    double saturation = kDefaultMediumSaturation;
    read_into(options, "medium_noise", noise);
    read_into(options, "medium_saturation", saturation);
    auto medium = pd(pm, saturation, noise);
    switch (tag) {
        case BehaviorTag::medium:
            spec.components = {{"medium", medium, 1.0}};
            break;
        case BehaviorTag::medium_expert_mix:
            spec.components = {{"medium", medium, 0.5}, {"expert", pd(pm, kExpertGains.saturation, 0.0), 0.5}};
            spec.mixing = Mixing::per_episode;
            break;
        case BehaviorTag::medium_replay_mix:
            // Checkpoints of increasing quality: authority grows and noise shrinks toward the medium policy.
            for (std::size_t j = 0; j < kReplayCheckpoints; ++j) {
                const double q = static_cast<double>(j + 1) / static_cast<double>(kReplayCheckpoints);
                const double sd = noise + (1.0 - q) * 0.4;
                spec.components.push_back({"checkpoint_" + std::to_string(j), pd(pm, saturation * q, sd),
                                           1.0 / static_cast<double>(kReplayCheckpoints)});
            }
            spec.mixing = Mixing::sequential;
            break;
        default:
            break;
    }
    return spec;
}

ReferenceScores reference_scores(const Environment& env, std::size_t episodes, std::uint64_t seed) {
    if (episodes == 0) throw UsageError("reference scores need at least one episode");
    nn::RngStream rng(seed, kReferenceStream);
    auto mean_return = [&](const Policy& policy) {
        RolloutOptions ro;
        ro.record = false;
        double total = 0.0;
        for (std::size_t e = 0; e < episodes; ++e) total += rollout(env, policy, rng, ro).undiscounted_return;
        return total / static_cast<double>(episodes);
    };
    ReferenceScores ref;
    ref.random_score = mean_return(*random_policy(env));
    ref.expert_score = mean_return(*expert_policy(env));
    return ref;
}

data::TransitionDataset generate_benchmark_dataset(const Environment& env, BehaviorTag tag, std::size_t episodes,
                                                   std::uint64_t seed, const nlohmann::json& options) {
    const BehaviorPolicySpec spec = make_behavior(env, tag, options);
    const ReferenceScores ref = reference_scores(env, 1000, seed);
    nlohmann::json meta = nlohmann::json::object();
    meta["env_params"] = env_params(env);
    meta["behavior_options"] = options;
    meta["random_score"] = ref.random_score;
    meta["expert_score"] = ref.expert_score;
    meta["seed"] = seed;
    nn::RngStream rng(seed, kDataStream);
    return generate_dataset(env, spec, episodes, rng, std::move(meta));
}

std::unique_ptr<Environment> env_from_metadata(const nlohmann::json& metadata) {
    if (!metadata.contains("env")) throw LoadError("dataset metadata does not name its environment");
    return make_env(metadata.at("env").get<std::string>(),
                    metadata.value("env_params", nlohmann::json::object()));
}

}  // namespace yoeo::envs
