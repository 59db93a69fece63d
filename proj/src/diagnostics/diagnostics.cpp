#include "yoeo/diagnostics/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "yoeo/envs/oracles.hpp"
#include "yoeo/envs/registry.hpp"
#include "yoeo/errors.hpp"
#include "yoeo/pipeline/pipeline.hpp"

namespace yoeo::diagnostics {

namespace {

constexpr std::uint64_t kPairStream = 0x600;
constexpr std::uint64_t kProbeStream = 0x601;
constexpr std::uint64_t kRolloutStream = 0x602;
constexpr std::uint64_t kCheckStream = 0x610;

// `count` distinct indices below n in draw order (all of them if count >= n).
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count, nn::RngStream& rng) {
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    const std::size_t k = std::min(count, n);
    for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + rng.index(n - i)]);
    pool.resize(k);
    return pool;
}

double column_rmse(const Vector& predicted, const Vector& reference) {
    if (predicted.size() == 0) return 0.0;
    return std::sqrt((predicted - reference).squaredNorm() / static_cast<double>(predicted.size()));
}

}  // namespace

double CalibrationReport::rmse(std::size_t variant) const { return column_rmse(pair_predicted.col(static_cast<Eigen::Index>(variant)), pair_mc); }

double CalibrationReport::discrimination_std(std::size_t variant) const {
    if (probe_index.empty()) return 0.0;
    const auto per = static_cast<Eigen::Index>(probe_actions_per_state);
    double total = 0.0;
    for (std::size_t p = 0; p < probe_index.size(); ++p) {
        const Vector q = probe_predicted.col(static_cast<Eigen::Index>(variant)).segment(static_cast<Eigen::Index>(p) * per, per);
        total += std::sqrt((q.array() - q.mean()).square().mean());
    }
    return total / static_cast<double>(probe_index.size());
}

std::size_t CalibrationReport::variant_index(const std::string& name) const {
    const auto it = std::find(variants.begin(), variants.end(), name);
    if (it == variants.end()) throw UsageError("calibration report has no variant '" + name + "'");
    return static_cast<std::size_t>(it - variants.begin());
}

void CalibrationReport::write_pairs_csv(std::ostream& out) const {
    out << "index,mc";
    for (const auto& v : variants) out << ',' << v;
    out << '\n';
    for (std::size_t i = 0; i < pair_index.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        out << pair_index[i] << ',' << pair_mc[r];
        for (Eigen::Index v = 0; v < pair_predicted.cols(); ++v) out << ',' << pair_predicted(r, v);
        out << '\n';
    }
}

void CalibrationReport::write_probes_csv(std::ostream& out) const {
    out << "probe,state_index,mc_value";
    for (Eigen::Index j = 0; j < probe_actions.cols(); ++j) out << ",a" << j;
    for (const auto& v : variants) out << ',' << v;
    out << '\n';
    for (Eigen::Index r = 0; r < probe_actions.rows(); ++r) {
        const auto p = static_cast<std::size_t>(r) / probe_actions_per_state;
        out << p << ',' << probe_index[p] << ',' << probe_mc_value[static_cast<Eigen::Index>(p)];
        for (Eigen::Index j = 0; j < probe_actions.cols(); ++j) out << ',' << probe_actions(r, j);
        for (Eigen::Index v = 0; v < probe_predicted.cols(); ++v) out << ',' << probe_predicted(r, v);
        out << '\n';
    }
}

void CalibrationReport::write_summary_csv(std::ostream& out) const {
    out << "variant,rmse,discrimination_std\n";
    for (std::size_t v = 0; v < variants.size(); ++v) out << variants[v] << ',' << rmse(v) << ',' << discrimination_std(v) << '\n';
}

CalibrationReport calibration_report(const std::vector<NamedCritic>& critics, const data::TransitionDataset& dataset,
                                     const envs::Environment& env, const envs::Policy& behavior,
                                     const CalibrationOptions& options) {
    if (critics.empty()) throw UsageError("calibration needs at least one critic variant");
    for (const auto& c : critics) {
        if (c.critic == nullptr) throw UsageError("calibration variant '" + c.name + "' has no trained critic");
    }
    if (dataset.size() == 0) throw UsageError("calibration needs a non-empty dataset");

    CalibrationReport report;
    for (const auto& c : critics) report.variants.push_back(c.name);
    const auto V = static_cast<Eigen::Index>(critics.size());
    nn::RngStream pair_rng(options.seed, kPairStream);
    nn::RngStream probe_rng(options.seed, kProbeStream);
    nn::RngStream mc_rng(options.seed, kRolloutStream);

    report.pair_index = sample_without_replacement(dataset.size(), options.pairs, pair_rng);
    const auto P = static_cast<Eigen::Index>(report.pair_index.size());
    Matrix states(P, static_cast<Eigen::Index>(dataset.state_dim()));
    Matrix actions(P, static_cast<Eigen::Index>(dataset.action_dim()));
    report.pair_mc.resize(P);
    for (Eigen::Index i = 0; i < P; ++i) {
        const auto t = static_cast<Eigen::Index>(report.pair_index[static_cast<std::size_t>(i)]);
        states.row(i) = dataset.states().row(t);
        actions.row(i) = dataset.actions().row(t);
        report.pair_mc[i] = envs::monte_carlo_value(env, behavior, states.row(i).transpose(),
                                                    Vector(actions.row(i).transpose()), options.rollouts, mc_rng)
                                .mean;
    }
    report.pair_predicted.resize(P, V);
    for (Eigen::Index v = 0; v < V; ++v) report.pair_predicted.col(v) = critics[static_cast<std::size_t>(v)].critic->evaluate(states, actions);

    report.probe_index = sample_without_replacement(dataset.size(), options.probe_states, probe_rng);
    report.probe_actions_per_state = options.probe_actions;
    const auto S = static_cast<Eigen::Index>(report.probe_index.size());
    const auto A = static_cast<Eigen::Index>(options.probe_actions);
    const auto& bounds = env.bounds();
    Matrix probe_states(S * A, static_cast<Eigen::Index>(dataset.state_dim()));
    report.probe_actions.resize(S * A, static_cast<Eigen::Index>(dataset.action_dim()));
    report.probe_mc_value.resize(S);
    for (Eigen::Index p = 0; p < S; ++p) {
        const auto t = static_cast<Eigen::Index>(report.probe_index[static_cast<std::size_t>(p)]);
        const Vector s = dataset.states().row(t).transpose();
        report.probe_mc_value[p] = envs::monte_carlo_value(env, behavior, s, std::nullopt, options.rollouts, mc_rng).mean;
        for (Eigen::Index j = 0; j < A; ++j) {
            probe_states.row(p * A + j) = s.transpose();
            report.probe_actions.row(p * A + j) = bounds.sample_uniform(probe_rng).transpose();
        }
    }
    report.probe_predicted.resize(S * A, V);
    for (Eigen::Index v = 0; v < V; ++v) {
        report.probe_predicted.col(v) = critics[static_cast<std::size_t>(v)].critic->evaluate(probe_states, report.probe_actions);
    }
    return report;
}

std::size_t McCheckReport::flagged() const {
    std::size_t n = 0;
    for (const auto& r : values) n += r.flagged;
    for (const auto& r : actions) n += r.flagged;
    return n;
}

double McCheckReport::flagged_fraction() const {
    const std::size_t total = values.size() + actions.size();
    return total == 0 ? 0.0 : static_cast<double>(flagged()) / static_cast<double>(total);
}

void McCheckReport::write_csv(std::ostream& out) const {
    out << "kind,row,predicted,mc_mean,mc_standard_error,flagged\n";
    auto rows = [&](const char* kind, const std::vector<McCheckRow>& list) {
        for (std::size_t i = 0; i < list.size(); ++i) {
            out << kind << ',' << i << ',' << list[i].predicted << ',' << list[i].mc_mean << ',' << list[i].mc_standard_error
                << ',' << (list[i].flagged ? 1 : 0) << '\n';
        }
    };
    rows("value", values);
    rows("action", actions);
}

McCheckReport mc_consistency_check(const value::StateValueSource& values, const critic::ActionValueFunction* critic,
                                   const envs::Environment& env, const envs::Policy& behavior, const Matrix& states,
                                   const std::optional<Matrix>& actions, const McCheckOptions& options) {
    if (actions && actions->rows() != states.rows()) throw UsageError("consistency check needs one action per state");
    nn::RngStream rng(options.seed, kCheckStream);
    McCheckReport report;
    const Vector expected = values.expected(states, options.tau_grid, value::Aggregate::mean);
    for (Eigen::Index i = 0; i < states.rows(); ++i) {
        const auto mc = envs::monte_carlo_value(env, behavior, states.row(i).transpose(), std::nullopt, options.rollouts, rng);
        report.values.push_back({expected[i], mc.mean, mc.standard_error, false});
    }
    if (critic != nullptr && actions) {
        const Vector q = critic->evaluate(states, *actions);
        for (Eigen::Index i = 0; i < states.rows(); ++i) {
            const auto mc = envs::monte_carlo_value(env, behavior, states.row(i).transpose(), Vector(actions->row(i).transpose()),
                                                    options.rollouts, rng);
            report.actions.push_back({q[i], mc.mean, mc.standard_error, false});
        }
    }
    double range = 0.0;
    if (options.value_range) {
        range = *options.value_range;
    } else if (!report.values.empty()) {
        auto [lo, hi] = std::minmax_element(report.values.begin(), report.values.end(),
                                            [](const McCheckRow& a, const McCheckRow& b) { return a.mc_mean < b.mc_mean; });
        range = hi->mc_mean - lo->mc_mean;
    }
    report.tolerance = options.tolerance_fraction * range;
    for (auto* list : {&report.values, &report.actions}) {
        for (auto& r : *list) r.flagged = std::abs(r.predicted - r.mc_mean) > report.tolerance;
    }
    return report;
}

config::RunConfig apply_ablation_variant(const config::RunConfig& base, const std::string& variant) {
    config::RunConfig c = base;
    if (variant.rfind("ens", 0) == 0) {
        const std::string count = variant.substr(3);
        if (count.empty() || count.find_first_not_of("0123456789") != std::string::npos) {
            throw ConfigError("ensemble variant '" + variant + "' needs a member count, e.g. ens3");
        }
        c.variant = critic::Variant::full;
        c.critic_members = static_cast<std::size_t>(std::stoul(count));
    } else {
        c.variant = critic::variant_from_string(variant);
    }
    c.validate();
    return c;
}

std::optional<double> AblationGrid::mean_score(const std::string& variant, const std::string& dataset, bool knn) const {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& c : cells) {
        if (c.variant == variant && c.dataset == dataset && c.ok) {
            total += knn ? c.knn_score : c.actor_score;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return total / static_cast<double>(n);
}

void AblationGrid::write_csv(std::ostream& out) const {
    out << "variant,dataset,seed,status,actor_score,knn_score,behavior_score,error\n";
    for (const auto& c : cells) {
        std::string error = c.error;
        std::replace(error.begin(), error.end(), ',', ';');
        std::replace(error.begin(), error.end(), '\n', ' ');
        out << c.variant << ',' << c.dataset << ',' << c.seed << ',' << (c.ok ? "ok" : "failed") << ',' << c.actor_score
            << ',' << c.knn_score << ',' << c.behavior_score << ',' << error << '\n';
    }
}

AblationGrid run_ablation(const AblationConfig& config, std::ostream* log) {
    if (config.variants.empty() || config.datasets.empty() || config.seeds.empty()) {
        throw UsageError("ablation needs at least one variant, dataset and seed");
    }
    std::vector<config::RunConfig> variant_configs;
    for (const auto& v : config.variants) variant_configs.push_back(apply_ablation_variant(config.base, v));

    AblationGrid grid;
    for (const auto& spec : config.datasets) {
        const auto env = envs::make_env(spec.env, spec.env_params);
        for (const auto seed : config.seeds) {
            const auto dataset = envs::generate_benchmark_dataset(*env, spec.behavior, spec.episodes, seed, spec.behavior_options);
            const auto& meta = dataset.metadata();
            const double random_score = meta.at("random_score").get<double>();
            const double expert_score = meta.at("expert_score").get<double>();
            const double behavior_score = envs::normalized_score(meta.at("behavior_score").get<double>(), random_score, expert_score);

            std::optional<value::ValueCache> cache;
            std::string stage1_error;
            const bool needs_value = std::any_of(variant_configs.begin(), variant_configs.end(),
                                                 [](const config::RunConfig& c) { return c.variant != critic::Variant::no_reg; });
            if (needs_value) {
                try {
                    config::RunConfig c = config.base;
                    c.env = spec.env;
                    c.gamma = env->gamma();
                    c.seed = seed;
                    const auto values = pipeline::train_value_stage(c, dataset);
                    cache = pipeline::make_value_cache(c, dataset, values);
                } catch (const std::exception& e) {
                    stage1_error = std::string("stage 1: ") + e.what();
                }
            }
            for (std::size_t v = 0; v < config.variants.size(); ++v) {
                AblationCell cell;
                cell.variant = config.variants[v];
                cell.dataset = spec.label;
                cell.seed = seed;
                cell.behavior_score = behavior_score;
                try {
                    config::RunConfig c = variant_configs[v];
                    c.env = spec.env;
                    c.gamma = env->gamma();
                    c.seed = seed;
                    const bool uses_cache = c.variant != critic::Variant::no_reg;
                    if (uses_cache && !cache) throw TrainingError(stage1_error);
                    auto stage = std::make_shared<const pipeline::PolicyStage>(
                        pipeline::train_policy_stage(c, dataset, uses_cache ? &*cache : nullptr, env->bounds()));
                    const auto actor = pipeline::make_run_policy("actor", stage, dataset, c.knn_k);
                    const auto knn = pipeline::make_run_policy("knn", stage, dataset, c.knn_k);
                    cell.actor_score = pipeline::evaluate_policy(*env, *actor, config.eval_trajectories, seed, random_score, expert_score).normalized_mean;
                    cell.knn_score = pipeline::evaluate_policy(*env, *knn, config.eval_trajectories, seed, random_score, expert_score).normalized_mean;
                    cell.ok = true;
                } catch (const std::exception& e) {
                    cell.error = e.what();
                }
                if (log != nullptr) {
                    *log << spec.label << " seed " << seed << ' ' << cell.variant << ": "
                         << (cell.ok ? "actor " + std::to_string(cell.actor_score) + " knn " + std::to_string(cell.knn_score)
                                     : "failed (" + cell.error + ")")
                         << '\n';
                }
                grid.cells.push_back(std::move(cell));
            }
        }
    }
    return grid;
}

}  // namespace yoeo::diagnostics
