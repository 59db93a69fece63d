#include "yoeo/value/ensemble.hpp"

#include <ostream>

#include "yoeo/errors.hpp"

namespace yoeo::value {

namespace {

constexpr std::size_t kMeanGrid = 16;
constexpr std::size_t kCacheChunk = 4096;

Vector aggregate_columns(const Matrix& per_member, Aggregate aggregate) {
    if (aggregate == Aggregate::mean) return per_member.rowwise().mean();
    return per_member.rowwise().minCoeff();
}

}  // namespace

Vector StateValueSource::expected(const Matrix& states, std::size_t grid, Aggregate aggregate) const {
    if (grid == 0) throw UsageError("expected value needs a positive grid size");
    Vector total = Vector::Zero(states.rows());
    for (std::size_t i = 0; i < grid; ++i) {
        total += quantile(states, (static_cast<double>(i) + 0.5) / static_cast<double>(grid), aggregate);
    }
    return total / static_cast<double>(grid);
}

Vector FunctionValueSource::quantile(const Matrix& states, double tau, Aggregate) const {
    Vector out(states.rows());
    for (Eigen::Index r = 0; r < states.rows(); ++r) out[r] = fn_(states.row(r).transpose(), tau);
    return out;
}

ValueEnsemble::ValueEnsemble(std::size_t members, std::size_t state_dim, const IqnConfig& config,
                             const nn::AdamwConfig& optimizer, std::uint64_t seed) {
    if (members == 0) throw ConfigError("value ensemble needs at least one member");
    for (std::size_t m = 0; m < members; ++m) {
        nn::RngStream init(seed, 0x1000 + m);
        members_.emplace_back(state_dim, config, init);
        optimizers_.emplace_back(optimizer, members_.back().parameters());
        member_rngs_.emplace_back(seed, 0x2000 + m);
    }
}

std::size_t ValueEnsemble::state_dim() const {
    if (members_.empty()) throw UsageError("empty value ensemble");
    return members_.front().state_dim();
}

Vector ValueEnsemble::quantile(const Matrix& states, double tau, Aggregate aggregate) const {
    if (members_.empty()) throw UsageError("value model queried before stage 1 produced one");
    Matrix per_member(states.rows(), static_cast<Eigen::Index>(members_.size()));
    for (std::size_t m = 0; m < members_.size(); ++m) {
        per_member.col(static_cast<Eigen::Index>(m)) = members_[m].quantile(states, tau, query_net_);
    }
    return aggregate_columns(per_member, aggregate);
}

std::vector<double> ValueEnsemble::train_step(const data::TransitionDataset& dataset, const ValueTrainConfig& config,
                                              nn::RngStream& batch_rng) {
    const data::NStepBatch batch = data::sample_nstep(dataset, config.batch, config.n_step, config.gamma, batch_rng);
    std::vector<double> losses;
    for (std::size_t m = 0; m < members_.size(); ++m) {
        try {
            losses.push_back(train_value_step(members_[m], optimizers_[m], batch, config, member_rngs_[m]));
        } catch (const TrainingError& e) {
            throw TrainingError("value member " + std::to_string(m) + ": " + e.what());
        }
    }
    return losses;
}

void ValueEnsemble::train(const data::TransitionDataset& dataset, const ValueTrainConfig& config, std::size_t steps,
                          nn::RngStream& batch_rng, std::ostream* csv, std::size_t log_every) {
    const Matrix probe = dataset.states().topRows(1);
    if (csv != nullptr) *csv << "step,member,loss,q10,q50,q90\n";
    for (std::size_t step = 1; step <= steps; ++step) {
        const auto losses = train_step(dataset, config, batch_rng);
        if (csv != nullptr && log_every > 0 && (step % log_every == 0 || step == steps)) {
            for (std::size_t m = 0; m < members_.size(); ++m) {
                *csv << step << ',' << m << ',' << losses[m] << ',' << members_[m].quantile(probe, 0.1)[0] << ','
                     << members_[m].quantile(probe, 0.5)[0] << ',' << members_[m].quantile(probe, 0.9)[0] << '\n';
            }
        }
    }
}

void ValueEnsemble::save(nn::Checkpoint& checkpoint) const {
    checkpoint.add_scalar("value.members", static_cast<double>(members_.size()));
    checkpoint.add_scalar("value.state_dim", static_cast<double>(state_dim()));
    for (std::size_t m = 0; m < members_.size(); ++m) members_[m].save(checkpoint, "value." + std::to_string(m));
}

ValueEnsemble ValueEnsemble::load(const nn::Checkpoint& checkpoint) {
    const auto members = static_cast<std::size_t>(checkpoint.scalar("value.members"));
    const auto state_dim = static_cast<std::size_t>(checkpoint.scalar("value.state_dim"));
    ValueEnsemble ens;
    for (std::size_t m = 0; m < members; ++m) {
        const std::string prefix = "value." + std::to_string(m);
        IqnConfig config;
        config.feature_dim = static_cast<std::size_t>(checkpoint.scalar(prefix + ".feature_dim"));
        config.hidden = static_cast<std::size_t>(checkpoint.scalar(prefix + ".hidden"));
        config.depth = static_cast<std::size_t>(checkpoint.scalar(prefix + ".depth"));
        auto model = QuantileValueModel::zeros(state_dim, config);
        model.load(checkpoint, prefix);
        ens.members_.push_back(std::move(model));
    }
    return ens;
}

ValueCache build_value_cache(const StateValueSource& source, const data::TransitionDataset& dataset, double tau1,
                             double tau2, BootstrapMode mode) {
    const auto N = static_cast<Eigen::Index>(dataset.size());
    ValueCache cache{Vector(N), Vector(N), Vector(N)};
    for (Eigen::Index begin = 0; begin < N; begin += static_cast<Eigen::Index>(kCacheChunk)) {
        const Eigen::Index len = std::min<Eigen::Index>(static_cast<Eigen::Index>(kCacheChunk), N - begin);
        const Matrix states = dataset.states().middleRows(begin, len);
        const Matrix next = dataset.next_states().middleRows(begin, len);
        cache.bootstrap.segment(begin, len) = mode == BootstrapMode::median
                                                  ? source.quantile(next, 0.5, Aggregate::mean)
                                                  : source.expected(next, kMeanGrid, Aggregate::mean);
        cache.upper.segment(begin, len) = source.quantile(states, tau1, Aggregate::min);
        cache.lower.segment(begin, len) = source.quantile(states, tau2, Aggregate::min);
    }
    return cache;
}

BootstrapMode bootstrap_mode_from_string(const std::string& text) {
    if (text == "median") return BootstrapMode::median;
    if (text == "mean") return BootstrapMode::mean;
    throw ConfigError("unknown bootstrap mode '" + text + "' (expected median or mean)");
}

std::string to_string(BootstrapMode mode) { return mode == BootstrapMode::median ? "median" : "mean"; }

}  // namespace yoeo::value
