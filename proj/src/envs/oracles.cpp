#include "yoeo/envs/oracles.hpp"

#include <algorithm>
#include <cmath>

#include "yoeo/envs/tabular.hpp"
#include "yoeo/errors.hpp"

namespace yoeo::envs {

double empirical_quantile(const std::vector<double>& sorted, double tau) {
    if (sorted.empty()) throw UsageError("quantile of an empty sample");
    if (!(tau > 0.0 && tau <= 1.0)) throw UsageError("quantile level must lie in (0, 1]");
    const double pos = std::ceil(tau * static_cast<double>(sorted.size()));
    const auto idx = static_cast<std::size_t>(std::clamp(pos, 1.0, static_cast<double>(sorted.size()))) - 1;
    return sorted[idx];
}

double MonteCarloStats::quantile(double tau) const { return empirical_quantile(sorted_returns, tau); }

MonteCarloStats summarize_returns(std::vector<double> returns, bool keep_samples) {
    if (returns.empty()) throw UsageError("cannot summarize an empty return sample");
    MonteCarloStats st;
    st.count = returns.size();
    // Shifted by the first sample so constant samples give exactly zero spread.
    const double shift = returns.front();
    double sum = 0.0;
    for (double r : returns) sum += r - shift;
    const double centered_mean = sum / static_cast<double>(st.count);
    st.mean = shift + centered_mean;
    double ss = 0.0;
    for (double r : returns) ss += (r - shift - centered_mean) * (r - shift - centered_mean);
    st.std = st.count > 1 ? std::sqrt(ss / static_cast<double>(st.count - 1)) : 0.0;
    st.standard_error = st.std / std::sqrt(static_cast<double>(st.count));
    std::sort(returns.begin(), returns.end());
    st.q10 = empirical_quantile(returns, 0.1);
    st.q50 = empirical_quantile(returns, 0.5);
    st.q90 = empirical_quantile(returns, 0.9);
    if (keep_samples) st.sorted_returns = std::move(returns);
    return st;
}

namespace {

// Integer-state simulation of a tabular MDP under a tabular policy; same dynamics, no vector traffic.
double tabular_return(const TabularMdp& env, const TabularPolicy& policy, std::size_t state,
                      const std::optional<double>& first_action, std::size_t max_steps, double gamma,
                      nn::RngStream& rng) {
    double ret = 0.0;
    double discount = 1.0;
    for (std::size_t t = 0; t < max_steps; ++t) {
        const double a = (t == 0 && first_action) ? *first_action : policy.sample_action(state, rng);
        const TabularOutcome& o = env.sample_outcome(state, env.bin_of(a), rng);
        ret += discount * o.reward;
        discount *= gamma;
        if (!o.next_state) break;
        state = *o.next_state;
    }
    return ret;
}

}  // namespace

MonteCarloStats monte_carlo_value(const Environment& env, const Policy& policy, const Vector& state,
                                  const std::optional<Vector>& action, std::size_t n_rollouts, nn::RngStream& rng,
                                  const MonteCarloOptions& options) {
    if (n_rollouts == 0) throw UsageError("monte_carlo_value needs at least one rollout");
    const std::size_t max_steps = options.max_steps.value_or(env.horizon());
    const double gamma = options.gamma.value_or(env.gamma());
    std::vector<double> returns;
    returns.reserve(n_rollouts);

    const auto* mdp = dynamic_cast<const TabularMdp*>(&env);
    const auto* tab = dynamic_cast<const TabularPolicy*>(&policy);
    if (mdp != nullptr && tab != nullptr) {
        const std::size_t s = mdp->state_index(state);
        std::optional<double> a0;
        if (action) a0 = (*action)[0];
        for (std::size_t i = 0; i < n_rollouts; ++i) returns.push_back(tabular_return(*mdp, *tab, s, a0, max_steps, gamma, rng));
    } else {
        RolloutOptions ro;
        ro.start_state = state;
        ro.first_action = action;
        ro.max_steps = max_steps;
        ro.gamma = gamma;
        ro.record = false;
        for (std::size_t i = 0; i < n_rollouts; ++i) returns.push_back(rollout(env, policy, rng, ro).discounted_return);
    }
    return summarize_returns(std::move(returns), options.keep_samples);
}

double normalized_score(double score, double random_score, double expert_score) {
    if (!std::isfinite(random_score) || !std::isfinite(expert_score) || random_score == expert_score) {
        throw UsageError("degenerate reference scores for normalization");
    }
    return 100.0 * (score - random_score) / (expert_score - random_score);
}

double normalized_score(double score, const nlohmann::json& metadata) {
    if (!metadata.contains("random_score") || !metadata.contains("expert_score")) {
        throw UsageError("dataset metadata lacks random/expert reference scores");
    }
    return normalized_score(score, metadata.at("random_score").get<double>(), metadata.at("expert_score").get<double>());
}

}  // namespace yoeo::envs
