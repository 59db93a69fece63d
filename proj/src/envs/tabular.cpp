#include "yoeo/envs/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "yoeo/errors.hpp"

namespace yoeo::envs {

namespace {

constexpr double kMassTolerance = 1e-9;

void check_mass(double total, const std::string& what) {
    if (std::abs(total - 1.0) > kMassTolerance) {
        throw ConfigError(what + " probabilities sum to " + std::to_string(total) + ", expected 1");
    }
}

}  // namespace

TabularPolicy::TabularPolicy(std::vector<std::vector<SupportPoint>> support) : support_(std::move(support)) {
    for (std::size_t s = 0; s < support_.size(); ++s) {
        if (support_[s].empty()) throw ConfigError("tabular policy has empty support in state " + std::to_string(s));
        double total = 0.0;
        for (const auto& p : support_[s]) {
            if (!(p.probability >= 0.0)) throw ConfigError("tabular policy has a negative probability");
            total += p.probability;
        }
        check_mass(total, "tabular policy state " + std::to_string(s));
    }
}

TabularPolicy TabularPolicy::uniform_support(std::size_t num_states, std::vector<SupportPoint> points) {
    return TabularPolicy(std::vector<std::vector<SupportPoint>>(num_states, points));
}

double TabularPolicy::sample_action(std::size_t state, nn::RngStream& rng) const {
    const auto& points = support_.at(state);
    double u = rng.uniform();
    for (const auto& p : points) {
        if (u < p.probability) return p.action;
        u -= p.probability;
    }
    return points.back().action;
}

Vector TabularPolicy::act(const Vector& state, nn::RngStream& rng) const {
    Eigen::Index idx = 0;
    state.maxCoeff(&idx);
    Vector a(1);
    a[0] = sample_action(static_cast<std::size_t>(idx), rng);
    return a;
}

double TabularPolicy::probability(std::size_t state, double action) const {
    double mass = 0.0;
    for (const auto& p : support_.at(state)) {
        if (p.action == action) mass += p.probability;
    }
    return mass;
}

TabularMdp::TabularMdp(std::string name, std::size_t num_states, std::vector<double> thresholds,
                       std::vector<std::vector<std::vector<TabularOutcome>>> outcomes, std::vector<double> initial,
                       std::size_t horizon, double gamma)
    : name_(std::move(name)),
      num_states_(num_states),
      thresholds_(std::move(thresholds)),
      outcomes_(std::move(outcomes)),
      initial_(std::move(initial)),
      horizon_(horizon),
      gamma_(gamma),
      bounds_(ActionBounds::symmetric(1)) {
    if (num_states_ == 0) throw ConfigError("tabular MDP needs at least one state");
    if (!std::is_sorted(thresholds_.begin(), thresholds_.end())) throw ConfigError("bin thresholds must be sorted");
    if (outcomes_.size() != num_states_) throw ConfigError("outcome table must have one row per state");
    if (initial_.size() != num_states_) throw ConfigError("initial distribution must have one entry per state");
    if (!(gamma_ >= 0.0 && gamma_ <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
    if (horizon_ == 0) throw ConfigError("horizon must be positive");
    check_mass(std::accumulate(initial_.begin(), initial_.end(), 0.0), "initial distribution");
    for (std::size_t s = 0; s < num_states_; ++s) {
        if (outcomes_[s].size() != num_bins()) {
            throw ConfigError("state " + std::to_string(s) + " needs one outcome list per action bin");
        }
        for (std::size_t b = 0; b < num_bins(); ++b) {
            double total = 0.0;
            for (const auto& o : outcomes_[s][b]) {
                if (o.next_state && *o.next_state >= num_states_) throw ConfigError("outcome points past the last state");
                if (!std::isfinite(o.reward)) throw ConfigError("outcome reward must be finite");
                total += o.probability;
            }
            check_mass(total, "state " + std::to_string(s) + " bin " + std::to_string(b));
        }
    }
}

void TabularMdp::scale_rewards(double factor) {
    if (!(factor > 0.0) || !std::isfinite(factor)) throw ConfigError("reward scale must be positive");
    for (auto& row : outcomes_) {
        for (auto& bin : row) {
            for (auto& o : bin) o.reward *= factor;
        }
    }
    reward_scale_ *= factor;
}

std::size_t TabularMdp::bin_of(double action) const {
    return static_cast<std::size_t>(std::upper_bound(thresholds_.begin(), thresholds_.end(), action) - thresholds_.begin());
}

const std::vector<TabularOutcome>& TabularMdp::outcomes(std::size_t state, std::size_t bin) const {
    return outcomes_.at(state).at(bin);
}

Vector TabularMdp::one_hot(std::size_t state) const {
    Vector v = Vector::Zero(static_cast<Eigen::Index>(num_states_));
    v[static_cast<Eigen::Index>(state)] = 1.0;
    return v;
}

std::size_t TabularMdp::state_index(const Vector& state) const {
    if (static_cast<std::size_t>(state.size()) != num_states_) throw ConfigError("state is not a one-hot vector of this MDP");
    Eigen::Index idx = 0;
    const double peak = state.maxCoeff(&idx);
    if (peak != 1.0 || state.sum() != 1.0) throw ConfigError("state is not a one-hot vector of this MDP");
    return static_cast<std::size_t>(idx);
}

std::size_t TabularMdp::sample_initial(nn::RngStream& rng) const {
    double u = rng.uniform();
    for (std::size_t s = 0; s < num_states_; ++s) {
        if (u < initial_[s]) return s;
        u -= initial_[s];
    }
    return num_states_ - 1;
}

const TabularOutcome& TabularMdp::sample_outcome(std::size_t state, std::size_t bin, nn::RngStream& rng) const {
    const auto& list = outcomes_[state][bin];
    if (list.size() == 1) return list.front();
    double u = rng.uniform();
    for (const auto& o : list) {
        if (u < o.probability) return o;
        u -= o.probability;
    }
    return list.back();
}

Vector TabularMdp::reset(nn::RngStream& rng) const { return one_hot(sample_initial(rng)); }

StepOutcome TabularMdp::step(const Vector& state, const Vector& action, nn::RngStream& rng) const {
    if (action.size() != 1) throw ConfigError("tabular MDPs take a scalar action");
    const std::size_t s = state_index(state);
    const TabularOutcome& o = sample_outcome(s, bin_of(action[0]), rng);
    StepOutcome out;
    out.reward = o.reward;
    if (o.next_state) {
        out.next_state = one_hot(*o.next_state);
    } else {
        out.terminal = true;
        out.next_state = Vector::Zero(static_cast<Eigen::Index>(num_states_));
    }
    return out;
}

void TabularMdp::add_behavior(const std::string& name, TabularPolicy policy) {
    if (policy.num_states() != num_states_) throw ConfigError("behavior '" + name + "' does not cover every state");
    behaviors_[name] = std::move(policy);
}

const TabularPolicy& TabularMdp::behavior(const std::string& name) const {
    auto it = behaviors_.find(name);
    if (it == behaviors_.end()) throw ConfigError("environment " + name_ + " has no behavior named '" + name + "'");
    return it->second;
}

double DpSolution::q(const TabularMdp& env, std::size_t state, double action) const {
    return q_bin.at(state).at(env.bin_of(action));
}

double DpSolution::value_range() const { return value.maxCoeff() - value.minCoeff(); }

DpSolution solve_dp(const Environment& env, const TabularPolicy& beta, std::optional<double> gamma_override,
                    double tolerance, std::size_t max_iterations) {
    const auto* mdp = dynamic_cast<const TabularMdp*>(&env);
    if (mdp == nullptr) throw UsageError("solve_dp requires a tabular environment, got " + env.name());
    const std::size_t S = mdp->num_states();
    if (beta.num_states() != S) throw UsageError("behavior policy does not cover every state of " + env.name());
    const double gamma = gamma_override.value_or(mdp->gamma());

    auto bin_values = [&](const Vector& v) {
        std::vector<std::vector<double>> q(S, std::vector<double>(mdp->num_bins(), 0.0));
        for (std::size_t s = 0; s < S; ++s) {
            for (std::size_t b = 0; b < mdp->num_bins(); ++b) {
                double total = 0.0;
                for (const auto& o : mdp->outcomes(s, b)) {
                    const double cont = o.next_state ? v[static_cast<Eigen::Index>(*o.next_state)] : 0.0;
                    total += o.probability * (o.reward + gamma * cont);
                }
                q[s][b] = total;
            }
        }
        return q;
    };
    auto backup = [&](const std::vector<std::vector<double>>& q) {
        Vector v(static_cast<Eigen::Index>(S));
        for (std::size_t s = 0; s < S; ++s) {
            double total = 0.0;
            for (const auto& p : beta.support(s)) total += p.probability * q[s][mdp->bin_of(p.action)];
            v[static_cast<Eigen::Index>(s)] = total;
        }
        return v;
    };

    DpSolution sol;
    sol.value = Vector::Zero(static_cast<Eigen::Index>(S));
    double residual = std::numeric_limits<double>::infinity();
    std::size_t it = 0;
    while (it < max_iterations) {
        Vector next = backup(bin_values(sol.value));
        residual = (next - sol.value).cwiseAbs().maxCoeff();
        sol.value = std::move(next);
        ++it;
        if (residual < tolerance) break;
    }
    if (!(residual < tolerance)) {
        throw TrainingError("policy evaluation on " + env.name() + " did not converge (residual " +
                            std::to_string(residual) + ")");
    }
    sol.q_bin = bin_values(sol.value);
    sol.residual = (backup(sol.q_bin) - sol.value).cwiseAbs().maxCoeff();
    sol.iterations = it;
    sol.q_support.resize(S);
    sol.greedy_action.resize(S);
    for (std::size_t s = 0; s < S; ++s) {
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& p : beta.support(s)) {
            const double q = sol.q_bin[s][mdp->bin_of(p.action)];
            sol.q_support[s].push_back(q);
            if (p.probability > 0.0 && q > best) {
                best = q;
                sol.greedy_action[s] = p.action;
            }
        }
    }
    return sol;
}

nlohmann::json dp_solution_to_json(const TabularMdp& env, const TabularPolicy& beta, const DpSolution& solution) {
    nlohmann::json states = nlohmann::json::array();
    for (std::size_t s = 0; s < env.num_states(); ++s) {
        nlohmann::json support = nlohmann::json::array();
        for (std::size_t i = 0; i < beta.support(s).size(); ++i) {
            support.push_back({{"action", beta.support(s)[i].action},
                               {"probability", beta.support(s)[i].probability},
                               {"q", solution.q_support[s][i]}});
        }
        states.push_back({{"state", s},
                          {"v", solution.value[static_cast<Eigen::Index>(s)]},
                          {"q_bins", solution.q_bin[s]},
                          {"support", support},
                          {"greedy_action", solution.greedy_action[s]}});
    }
    return {{"env", env.name()}, {"gamma", env.gamma()}, {"residual", solution.residual}, {"states", states}};
}

TabularPolicy greedy_policy(const DpSolution& solution) {
    std::vector<std::vector<SupportPoint>> support;
    for (double a : solution.greedy_action) support.push_back({{a, 1.0}});
    return TabularPolicy(std::move(support));
}

double trajectory_log_probability(const TabularMdp& env, const TabularPolicy& beta, const Trajectory& trajectory) {
    double log_p = 0.0;
    for (std::size_t t = 0; t < trajectory.length(); ++t) {
        const std::size_t s = env.state_index(trajectory.states[t]);
        const double a = trajectory.actions[t][0];
        if (t == 0) log_p += std::log(env.initial_distribution()[s]);
        log_p += std::log(beta.probability(s, a));
        const bool terminal = t + 1 == trajectory.length() && trajectory.terminated;
        std::optional<std::size_t> next;
        if (!terminal) next = env.state_index(trajectory.next_states[t]);
        double p_transition = 0.0;
        for (const auto& o : env.outcomes(s, env.bin_of(a))) {
            if (o.next_state == next && o.reward == trajectory.rewards[t]) p_transition += o.probability;
        }
        log_p += std::log(p_transition);
    }
    return log_p;
}

namespace {

using OutcomeTable = std::vector<std::vector<std::vector<TabularOutcome>>>;

std::optional<std::size_t> successor(std::size_t s, std::size_t num_states) {
    if (s + 1 < num_states) return s + 1;
    return std::nullopt;
}

std::vector<double> start_at_zero(std::size_t num_states) {
    std::vector<double> d0(num_states, 0.0);
    d0[0] = 1.0;
    return d0;
}

}  // namespace

TabularMdp make_deterministic_chain(std::size_t num_states, double gamma) {
    OutcomeTable table(num_states);
    for (std::size_t s = 0; s < num_states; ++s) {
        const auto next = successor(s, num_states);
        table[s] = {{{1.0, 0.5, next}}, {{1.0, 1.0, next}}};
    }
    TabularMdp env("det_chain", num_states, {0.0}, std::move(table), start_at_zero(num_states), num_states, gamma);
    env.add_behavior("behavior", TabularPolicy::uniform_support(num_states, {{-0.5, 0.5}, {0.5, 0.5}}));
    env.add_behavior("expert", TabularPolicy::uniform_support(num_states, {{0.5, 1.0}}));
    return env;
}

TabularMdp make_bernoulli_one_step(double gamma) {
    OutcomeTable table(1);
    table[0] = {{{0.5, 10.0, std::nullopt}, {0.5, 0.0, std::nullopt}}};
    TabularMdp env("bernoulli_one_step", 1, {}, std::move(table), {1.0}, 1, gamma);
    env.add_behavior("behavior", TabularPolicy::uniform_support(1, {{0.0, 1.0}}));
    env.add_behavior("expert", TabularPolicy::uniform_support(1, {{0.0, 1.0}}));
    return env;
}

TabularMdp make_bandit_chain(std::size_t num_states, double gamma) {
    OutcomeTable table(num_states);
    for (std::size_t s = 0; s < num_states; ++s) {
        const auto next = successor(s, num_states);
        table[s] = {{{0.8, 1.0, next}, {0.2, 0.0, next}}, {{0.4, 3.0, next}, {0.6, 0.0, next}}};
    }
    TabularMdp env("bandit_chain", num_states, {0.0}, std::move(table), start_at_zero(num_states), num_states, gamma);
    env.add_behavior("behavior", TabularPolicy::uniform_support(num_states, {{-0.5, 0.5}, {0.5, 0.5}}));
    env.add_behavior("expert", TabularPolicy::uniform_support(num_states, {{0.5, 1.0}}));
    return env;
}

TabularMdp make_mixture_recovery(std::size_t num_states, double gamma) {
    OutcomeTable table(num_states);
    for (std::size_t s = 0; s < num_states; ++s) {
        const auto next = successor(s, num_states);
        table[s] = {
            {{1.0, 0.2, next}},                       // a < -0.5: slow but safe
            {{0.9, 1.0, next}, {0.1, 0.0, next}},     // -0.5 <= a < 0.5: good
            {{1.0, -1.0, std::nullopt}},              // a >= 0.5: cliff
        };
    }
    TabularMdp env("mixture_recovery", num_states, {-0.5, 0.5}, std::move(table), start_at_zero(num_states),
                   num_states, gamma);
    env.add_behavior("expert", TabularPolicy::uniform_support(num_states, {{-0.2, 1.0}}));
    env.add_behavior("bad", TabularPolicy::uniform_support(num_states, {{-0.95, 1.0}}));
    env.add_behavior("behavior", TabularPolicy::uniform_support(num_states, {{-0.2, 0.5}, {-0.95, 0.5}}));
    return env;
}

TabularMdp make_two_state_absorbing(double gamma, std::size_t horizon) {
    OutcomeTable table(2);
    table[0] = {{{1.0, 1.0, std::size_t{1}}}};
    table[1] = {{{1.0, 1.0, std::size_t{1}}}};
    TabularMdp env("two_state_absorbing", 2, {}, std::move(table), {1.0, 0.0}, horizon, gamma);
    env.add_behavior("behavior", TabularPolicy::uniform_support(2, {{0.0, 1.0}}));
    env.add_behavior("expert", TabularPolicy::uniform_support(2, {{0.0, 1.0}}));
    return env;
}

}  // namespace yoeo::envs
