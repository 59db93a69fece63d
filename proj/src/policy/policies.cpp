#include "yoeo/policy/policies.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "yoeo/errors.hpp"

namespace yoeo::policy {

ActorPolicy::ActorPolicy(std::size_t state_dim, envs::ActionBounds bounds, const ActorConfig& config,
                         std::uint64_t seed)
    : bounds_(std::move(bounds)), config_(config) {
    if (state_dim == 0 || bounds_.low.size() == 0) throw ConfigError("actor dimensions must be positive");
    if (config.noise < 0.0 || config.noise_clip < 0.0) throw ConfigError("actor noise must be non-negative");
    nn::RngStream rng(seed, 0x5000);
    net_ = nn::Mlp::make(state_dim, config.hidden, config.depth, static_cast<std::size_t>(bounds_.low.size()),
                         nn::Activation::swish, rng);
}

Matrix ActorPolicy::forward(const Matrix& states) const {
    const Matrix z = net_.forward(states);
    const Vector c = bounds_.center();
    const Vector h = bounds_.half_range();
    Matrix out(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        out.row(i) = (c.array() + h.array() * z.row(i).transpose().array().tanh()).transpose();
    }
    return out;
}

Vector ActorPolicy::act(const Vector& state) const {
    Matrix s(1, state.size());
    s.row(0) = state.transpose();
    return forward(s).row(0).transpose();
}

Matrix ActorPolicy::sample_noisy(const Matrix& states, double sigma, double clip, nn::RngStream& rng) const {
    Matrix a = forward(states);
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            const double eps = std::clamp(rng.normal(0.0, sigma), -clip, clip);
            a(i, j) = std::clamp(a(i, j) + eps, bounds_.low(j), bounds_.high(j));
        }
    }
    return a;
}

Matrix ActorPolicy::propose(const Matrix& states, nn::RngStream& rng) const {
    return sample_noisy(states, config_.noise, config_.noise_clip, rng);
}

double ActorPolicy::objective_gradient(const critic::ActionValueFunction& q, const Matrix& states,
                                       nn::MlpGrad& grad) const {
    nn::MlpTape tape;
    const Matrix z = net_.forward(states, tape);
    const Vector c = bounds_.center();
    const Vector h = bounds_.half_range();
    const Matrix t = z.array().tanh().matrix();
    Matrix a(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) a.row(i) = (c.array() + h.array() * t.row(i).transpose().array()).transpose();

    Vector values;
    const Matrix da = q.action_gradient(states, a, &values);
    const double n = static_cast<double>(states.rows());
    Matrix dz(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        for (Eigen::Index j = 0; j < z.cols(); ++j) {
            dz(i, j) = -da(i, j) * h(j) * (1.0 - t(i, j) * t(i, j)) / n;
        }
    }
    grad.set_zero();
    net_.backward(tape, dz, grad);
    return values.mean();
}

void ActorPolicy::save(nn::Checkpoint& checkpoint) const {
    checkpoint.add_mlp("actor", net_);
    checkpoint.add_scalar("actor.state_dim", static_cast<double>(state_dim()));
    checkpoint.add_scalar("actor.hidden", static_cast<double>(config_.hidden));
    checkpoint.add_scalar("actor.depth", static_cast<double>(config_.depth));
    checkpoint.add_scalar("actor.noise", config_.noise);
    checkpoint.add_scalar("actor.noise_clip", config_.noise_clip);
    checkpoint.add({"actor.low", {static_cast<std::size_t>(bounds_.low.size())},
                    std::vector<double>(bounds_.low.data(), bounds_.low.data() + bounds_.low.size())});
    checkpoint.add({"actor.high", {static_cast<std::size_t>(bounds_.high.size())},
                    std::vector<double>(bounds_.high.data(), bounds_.high.data() + bounds_.high.size())});
}

ActorPolicy ActorPolicy::load(const nn::Checkpoint& checkpoint) {
    ActorConfig config;
    config.hidden = static_cast<std::size_t>(checkpoint.scalar("actor.hidden"));
    config.depth = static_cast<std::size_t>(checkpoint.scalar("actor.depth"));
    config.noise = checkpoint.scalar("actor.noise");
    config.noise_clip = checkpoint.scalar("actor.noise_clip");
    const auto& low = checkpoint.get("actor.low").data;
    const auto& high = checkpoint.get("actor.high").data;
    envs::ActionBounds bounds{Eigen::Map<const Vector>(low.data(), static_cast<Eigen::Index>(low.size())),
                              Eigen::Map<const Vector>(high.data(), static_cast<Eigen::Index>(high.size()))};
    ActorPolicy actor(static_cast<std::size_t>(checkpoint.scalar("actor.state_dim")), bounds, config, 0);
    checkpoint.load_mlp("actor", actor.net_);
    return actor;
}

double actor_update_step(ActorPolicy& actor, const critic::ActionValueFunction& q, const Matrix& states,
                         nn::Adamw& optimizer) {
    nn::MlpGrad grad = actor.network().make_grad();
    const double objective = actor.objective_gradient(q, states, grad);
    if (!std::isfinite(objective)) throw TrainingError("actor objective is not finite");
    optimizer.step(actor.network().parameters(), std::as_const(grad).tensors());
    return objective;
}

KnnActionIndex::KnnActionIndex(Matrix states, Matrix actions, std::size_t k)
    : states_(std::move(states)), actions_(std::move(actions)), k_(k) {
    if (states_.rows() == 0) throw UsageError("k-NN index needs at least one state");
    if (states_.rows() != actions_.rows()) throw UsageError("k-NN states and actions differ in length");
    if (k_ == 0) throw ConfigError("k-NN needs K >= 1");
    squared_norms_ = states_.rowwise().squaredNorm();
}

KnnActionIndex KnnActionIndex::from_dataset(const data::TransitionDataset& dataset, std::size_t k) {
    return KnnActionIndex(dataset.states(), dataset.actions(), k);
}

std::vector<std::size_t> KnnActionIndex::neighbors(const Vector& state) const {
    if (state.size() != states_.cols()) throw UsageError("k-NN query has the wrong state dimension");
    const Vector d = (states_.rowwise() - state.transpose()).rowwise().squaredNorm();
    std::vector<std::size_t> order(size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t k = std::min(k_, order.size());
    auto closer = [&](std::size_t a, std::size_t b) { return d(a) < d(b) || (d(a) == d(b) && a < b); };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), closer);
    order.resize(k);
    return order;
}

Vector knn_policy(const KnnActionIndex& index, const critic::ActionValueFunction& q, const Vector& state) {
    const auto nb = index.neighbors(state);
    std::vector<std::size_t> by_index = nb;
    std::sort(by_index.begin(), by_index.end());
    Matrix s(by_index.size(), state.size());
    Matrix a(by_index.size(), index.actions().cols());
    for (std::size_t i = 0; i < by_index.size(); ++i) {
        s.row(i) = state.transpose();
        a.row(i) = index.actions().row(by_index[i]);
    }
    const Vector values = q.evaluate(s, a);
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < values.size(); ++i) {
        if (values(i) > values(best)) best = i;
    }
    return a.row(best).transpose();
}

}  // namespace yoeo::policy
