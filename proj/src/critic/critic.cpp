#include "yoeo/critic/critic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "yoeo/errors.hpp"

namespace yoeo::critic {

namespace {

Matrix repeat_rows(const Matrix& x, std::size_t times) {
    const auto n = static_cast<Eigen::Index>(times);
    Matrix out(x.rows() * n, x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) out.middleRows(r * n, n) = x.row(r).replicate(n, 1);
    return out;
}

void check_finite(const CriticLoss& loss, std::size_t member) {
    if (!std::isfinite(loss.total)) {
        throw TrainingError("critic member " + std::to_string(member) + " produced a non-finite loss (supervised " +
                            std::to_string(loss.supervised) + ", regularizer " + std::to_string(loss.regularizer) +
                            ")");
    }
}

}  // namespace

std::string to_string(Variant variant) {
    switch (variant) {
        case Variant::full: return "full";
        case Variant::no_reg: return "no_reg";
        case Variant::no_mu: return "no_mu";
        case Variant::sarsa_target: return "sarsa_target";
    }
    return "?";
}

Variant variant_from_string(const std::string& text) {
    std::string t = text;
    std::replace(t.begin(), t.end(), '-', '_');
    for (Variant v : {Variant::full, Variant::no_reg, Variant::no_mu, Variant::sarsa_target}) {
        if (t == to_string(v)) return v;
    }
    throw ConfigError("unknown variant '" + text + "' (expected full, no-reg, no-mu, sarsa-target)");
}

Matrix UniformActionSampler::propose(const Matrix& states, nn::RngStream& rng) const {
    Matrix out(states.rows(), static_cast<Eigen::Index>(bounds_.dim()));
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) = rng.uniform(bounds_.low[c], bounds_.high[c]);
    }
    return out;
}

Matrix concat_inputs(const Matrix& states, const Matrix& actions) {
    if (states.rows() != actions.rows()) throw ConfigError("state and action batches differ in length");
    Matrix x(states.rows(), states.cols() + actions.cols());
    x << states, actions;
    return x;
}

CriticEnsemble::CriticEnsemble(std::size_t members, std::size_t state_dim, std::size_t action_dim, std::size_t hidden,
                               std::size_t depth, std::uint64_t seed)
    : state_dim_(state_dim), action_dim_(action_dim) {
    if (members == 0) throw ConfigError("critic ensemble needs at least one member");
    if (state_dim == 0 || action_dim == 0) throw ConfigError("critic dimensions must be positive");
    for (std::size_t m = 0; m < members; ++m) {
        nn::RngStream rng(seed, 0x3000 + m);
        members_.push_back(nn::Mlp::make(state_dim + action_dim, hidden, depth, 1, nn::Activation::swish, rng));
    }
    sync_targets();
}

Matrix CriticEnsemble::all_q(const Matrix& states, const Matrix& actions) const {
    const Matrix x = concat_inputs(states, actions);
    Matrix q(states.rows(), static_cast<Eigen::Index>(members_.size()));
    for (std::size_t m = 0; m < members_.size(); ++m) q.col(static_cast<Eigen::Index>(m)) = members_[m].forward(x).col(0);
    return q;
}

Vector CriticEnsemble::member_q(std::size_t m, const Matrix& states, const Matrix& actions) const {
    return members_.at(m).forward(concat_inputs(states, actions)).col(0);
}

Vector CriticEnsemble::target_q(std::size_t m, const Matrix& states, const Matrix& actions) const {
    return targets_.at(m).forward(concat_inputs(states, actions)).col(0);
}

Vector CriticEnsemble::ensemble_min(const Matrix& states, const Matrix& actions) const {
    if (members_.empty()) throw UsageError("empty critic ensemble");
    return all_q(states, actions).rowwise().minCoeff();
}

Matrix CriticEnsemble::min_action_gradient(const Matrix& states, const Matrix& actions, Vector* values) const {
    if (members_.empty()) throw UsageError("empty critic ensemble");
    const Matrix x = concat_inputs(states, actions);
    const auto B = x.rows();
    std::vector<nn::MlpTape> tapes(members_.size());
    Matrix q(B, static_cast<Eigen::Index>(members_.size()));
    for (std::size_t m = 0; m < members_.size(); ++m) {
        q.col(static_cast<Eigen::Index>(m)) = members_[m].forward(x, tapes[m]).col(0);
    }
    Matrix grad_actions = Matrix::Zero(B, static_cast<Eigen::Index>(action_dim_));
    if (values != nullptr) values->resize(B);
    for (std::size_t m = 0; m < members_.size(); ++m) {
        Matrix upstream = Matrix::Zero(B, 1);
        bool any = false;
        for (Eigen::Index r = 0; r < B; ++r) {
            Eigen::Index arg = 0;
            const double lo = q.row(r).minCoeff(&arg);
            if (values != nullptr) (*values)[r] = lo;
            if (static_cast<std::size_t>(arg) == m) {
                upstream(r, 0) = 1.0;
                any = true;
            }
        }
        if (!any) continue;
        auto scratch = members_[m].make_grad();
        const Matrix dx = members_[m].backward(tapes[m], upstream, scratch);
        grad_actions += dx.rightCols(static_cast<Eigen::Index>(action_dim_));
    }
    return grad_actions;
}

void CriticEnsemble::update_targets(double decay) {
    for (std::size_t m = 0; m < members_.size(); ++m) nn::ema_update(targets_[m], members_[m], decay);
}

void CriticEnsemble::sync_targets() { targets_ = members_; }

void CriticEnsemble::save(nn::Checkpoint& checkpoint) const {
    checkpoint.add_scalar("critic.members", static_cast<double>(members_.size()));
    checkpoint.add_scalar("critic.state_dim", static_cast<double>(state_dim_));
    checkpoint.add_scalar("critic.action_dim", static_cast<double>(action_dim_));
    checkpoint.add_scalar("critic.hidden", static_cast<double>(members_.front().layers().front().weight.rows()));
    checkpoint.add_scalar("critic.depth", static_cast<double>(members_.front().depth() - 1));
    for (std::size_t m = 0; m < members_.size(); ++m) {
        checkpoint.add_mlp("critic." + std::to_string(m), members_[m]);
        checkpoint.add_mlp("critic_target." + std::to_string(m), targets_[m]);
    }
}

CriticEnsemble CriticEnsemble::load(const nn::Checkpoint& checkpoint) {
    const auto members = static_cast<std::size_t>(checkpoint.scalar("critic.members"));
    const auto state_dim = static_cast<std::size_t>(checkpoint.scalar("critic.state_dim"));
    const auto action_dim = static_cast<std::size_t>(checkpoint.scalar("critic.action_dim"));
    const auto hidden = static_cast<std::size_t>(checkpoint.scalar("critic.hidden"));
    const auto depth = static_cast<std::size_t>(checkpoint.scalar("critic.depth"));
    CriticEnsemble ens(members, state_dim, action_dim, hidden, depth, 0);
    for (std::size_t m = 0; m < members; ++m) {
        checkpoint.load_mlp("critic." + std::to_string(m), ens.members_[m]);
        checkpoint.load_mlp("critic_target." + std::to_string(m), ens.targets_[m]);
    }
    return ens;
}

LogSumExp log_sum_exp(double y, const Vector& q, double temperature) {
    if (!(temperature > 0.0)) throw UsageError("log-sum-exp temperature must be positive");
    const double inv_t = 1.0 / temperature;
    double peak = y * inv_t;
    for (Eigen::Index j = 0; j < q.size(); ++j) peak = std::max(peak, q[j] * inv_t);
    double total = std::exp(y * inv_t - peak);
    LogSumExp out;
    out.weights.resize(q.size());
    for (Eigen::Index j = 0; j < q.size(); ++j) {
        out.weights[j] = std::exp(q[j] * inv_t - peak);
        total += out.weights[j];
    }
    out.weights /= total;
    out.value = temperature * (peak + std::log(total));
    if (!std::isfinite(out.value)) {
        throw TrainingError("log-sum-exp regularizer overflowed (y " + std::to_string(y) + ", temperature " +
                            std::to_string(temperature) + ")");
    }
    return out;
}

Vector supervised_target(const data::NStepBatch& batch, const value::ValueCache& cache) {
    Vector y(static_cast<Eigen::Index>(batch.size()));
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto i = static_cast<Eigen::Index>(b);
        const double boot = batch.terminal[b] ? 0.0 : batch.discount[i] * cache.bootstrap[static_cast<Eigen::Index>(batch.last_index[b])];
        y[i] = batch.returns[i] + boot;
    }
    return y;
}

Vector supervised_target(const data::NStepBatch& batch, const value::StateValueSource* source) {
    if (source == nullptr) throw UsageError("supervised targets need a trained stage-1 value model");
    const Vector median = source->quantile(batch.bootstrap_states, 0.5, value::Aggregate::mean);
    Vector y(static_cast<Eigen::Index>(batch.size()));
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto i = static_cast<Eigen::Index>(b);
        y[i] = batch.returns[i] + (batch.terminal[b] ? 0.0 : batch.discount[i] * median[i]);
    }
    return y;
}

Vector sarsa_td_target(const data::SarsaBatch& batch, const nn::Mlp& target_critic, double gamma) {
    const Vector next = target_critic.forward(concat_inputs(batch.next_states, batch.next_actions)).col(0);
    Vector y(batch.rewards.size());
    for (Eigen::Index b = 0; b < y.size(); ++b) {
        y[b] = batch.rewards[b] + (batch.terminal[static_cast<std::size_t>(b)] ? 0.0 : gamma * next[b]);
    }
    return y;
}

namespace {

// Shared forward of data rows, actor rows and mu rows through one member.
struct StackedForward {
    nn::MlpTape tape;
    Vector q;
    Eigen::Index data_rows = 0;
    Eigen::Index actor_rows = 0;
    Eigen::Index mu_rows = 0;
};

StackedForward stacked_forward(const nn::Mlp& critic, const CriticLossInputs& in, bool with_data, bool record) {
    StackedForward f;
    f.data_rows = with_data ? in.states.rows() : 0;
    f.actor_rows = in.actor_actions.rows();
    f.mu_rows = in.mu_actions.rows();
    const auto dim = static_cast<Eigen::Index>(critic.input_dim());
    Matrix x(f.data_rows + f.actor_rows + f.mu_rows, dim);
    if (with_data) x.topRows(f.data_rows) = concat_inputs(in.states, in.actions);
    if (f.actor_rows > 0) x.middleRows(f.data_rows, f.actor_rows) = concat_inputs(in.actor_states, in.actor_actions);
    if (f.mu_rows > 0) x.bottomRows(f.mu_rows) = concat_inputs(in.actor_states, in.mu_actions);
    f.q = record ? critic.forward(x, f.tape).col(0) : critic.forward(x).col(0);
    return f;
}

void check_samples(const CriticLossInputs& in) {
    const auto B = in.states.rows();
    const auto expect = B * static_cast<Eigen::Index>(in.samples);
    if (in.actor_actions.rows() > 0 || in.mu_actions.rows() > 0) {
        if (in.samples == 0) throw UsageError("regularizer needs n_b >= 1");
        if (in.actor_states.rows() != expect) throw UsageError("regularizer states must hold n_b rows per batch row");
        if (in.actor_actions.rows() > 0 && in.actor_actions.rows() != expect) throw UsageError("actor samples must hold n_b rows per batch row");
        if (in.mu_actions.rows() > 0 && in.mu_actions.rows() != expect) throw UsageError("mu samples must hold n_b rows per batch row");
        if (in.upper.size() != B || in.lower.size() != B) throw UsageError("regularizer needs Y(s; tau) for every batch row");
    }
}

// Adds R(s) per row into `r`; fills d R / d q per sample row into `dq` (same row layout as the stacked forward).
void regularizer_terms(const StackedForward& f, const CriticLossInputs& in, Vector& r, Vector* dq) {
    const auto B = in.states.rows();
    const auto nb = static_cast<Eigen::Index>(in.samples);
    r.setZero(B);
    for (Eigen::Index b = 0; b < B; ++b) {
        if (f.actor_rows > 0) {
            const auto lse = log_sum_exp(in.upper[b], f.q.segment(f.data_rows + b * nb, nb), in.temperature);
            r[b] += lse.value;
            if (dq != nullptr) dq->segment(f.data_rows + b * nb, nb) = lse.weights;
        }
        if (f.mu_rows > 0) {
            const auto lse = log_sum_exp(in.lower[b], f.q.segment(f.data_rows + f.actor_rows + b * nb, nb), in.temperature);
            r[b] += lse.value;
            if (dq != nullptr) dq->segment(f.data_rows + f.actor_rows + b * nb, nb) = lse.weights;
        }
    }
}

}  // namespace

Vector pessimistic_regularizer(const nn::Mlp& critic, const CriticLossInputs& in) {
    check_samples(in);
    const StackedForward f = stacked_forward(critic, in, false, false);
    Vector r;
    regularizer_terms(f, in, r, nullptr);
    return r;
}

CriticLoss critic_loss(const nn::Mlp& critic, const CriticLossInputs& in, nn::MlpGrad* grad) {
    if (in.targets.size() != in.states.rows() || in.actions.rows() != in.states.rows()) {
        throw UsageError("critic loss needs one target and one action per state");
    }
    if (in.lambda < 0.0) throw UsageError("lambda must be non-negative");
    const bool regularize = in.lambda > 0.0 && (in.actor_actions.rows() > 0 || in.mu_actions.rows() > 0);
    CriticLossInputs trimmed;
    const CriticLossInputs* use = &in;
    if (!regularize && (in.actor_actions.rows() > 0 || in.mu_actions.rows() > 0)) {
        trimmed.states = in.states;
        trimmed.actions = in.actions;
        trimmed.targets = in.targets;
        use = &trimmed;
    }
    if (regularize) check_samples(in);
    const StackedForward f = stacked_forward(critic, *use, true, grad != nullptr);
    const auto B = in.states.rows();
    const double inv_b = 1.0 / static_cast<double>(B);
    const Vector residual = f.q.head(B) - in.targets;

    CriticLoss loss;
    loss.supervised = 0.5 * residual.squaredNorm() * inv_b;
    Vector dq = Vector::Zero(f.q.size());
    if (regularize) {
        Vector r;
        regularizer_terms(f, in, r, grad != nullptr ? &dq : nullptr);
        loss.regularizer = r.mean();
        dq.tail(f.q.size() - B) *= in.lambda * inv_b;
    }
    loss.total = loss.supervised + in.lambda * loss.regularizer;
    if (grad != nullptr) {
        dq.head(B) = residual * inv_b;
        critic.backward(f.tape, dq, *grad);
    }
    return loss;
}

void CriticConfig::validate() const {
    if (members == 0) throw ConfigError("critic ensemble size must be at least 1");
    if (lambda < 0.0) throw ConfigError("lambda must be non-negative");
    if (!(tau1 > 0.0 && tau1 < 1.0) || !(tau2 > 0.0 && tau2 < 1.0)) throw ConfigError("tau1 and tau2 must lie in (0, 1)");
    if (samples == 0) throw ConfigError("n_b must be at least 1");
    if (temperature && !(*temperature > 0.0)) throw ConfigError("temperature must be positive");
    if (batch == 0 || n_step == 0) throw ConfigError("batch and n_step must be positive");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
}

double dataset_return_range(const data::TransitionDataset& dataset, double gamma) {
    const Vector g = dataset.returns_to_go(gamma);
    const double range = g.maxCoeff() - g.minCoeff();
    return range > 1e-12 ? range : 1.0;
}

CriticTrainer::CriticTrainer(CriticEnsemble& critics, const CriticConfig& config,
                             const data::TransitionDataset& dataset, const value::ValueCache* cache,
                             envs::ActionBounds bounds, std::uint64_t seed)
    : critics_(critics), config_(config), dataset_(dataset), cache_(cache), mu_(std::move(bounds)) {
    config_.validate();
    if (critics_.size() == 0) throw UsageError("critic trainer needs a non-empty ensemble");
    if (config_.variant != Variant::no_reg && cache_ == nullptr) {
        throw UsageError("variant " + to_string(config_.variant) + " needs the frozen stage-1 value model");
    }
    if (cache_ != nullptr && static_cast<std::size_t>(cache_->upper.size()) != dataset_.size()) {
        throw UsageError("value cache does not match the dataset");
    }
    temperature_ = config_.temperature.value_or(dataset_return_range(dataset_, config_.gamma));
    for (std::size_t m = 0; m < critics_.size(); ++m) {
        optimizers_.emplace_back(config_.optimizer, critics_.member(m).parameters());
        member_rngs_.emplace_back(seed, 0x4000 + m);
    }
    critics_.sync_targets();
}

void CriticTrainer::set_learning_rate(double lr) {
    for (auto& opt : optimizers_) opt.set_learning_rate(lr);
}

bool CriticTrainer::uses_regularizer() const { return config_.variant != Variant::no_reg && config_.lambda > 0.0; }

bool CriticTrainer::uses_sarsa() const {
    return config_.variant == Variant::no_reg || config_.variant == Variant::sarsa_target;
}

std::vector<CriticLoss> CriticTrainer::step(const ActionProposal* actor, nn::RngStream& batch_rng) {
    CriticLossInputs in;
    std::vector<std::size_t> index;
    data::SarsaBatch sarsa;
    if (uses_sarsa()) {
        sarsa = data::sample_sarsa(dataset_, config_.batch, batch_rng);
        in.states = sarsa.states;
        in.actions = sarsa.actions;
        index = sarsa.index;
    } else {
        const data::NStepBatch nstep = data::sample_nstep(dataset_, config_.batch, config_.n_step, config_.gamma, batch_rng);
        in.states = nstep.states;
        in.actions = nstep.actions;
        in.targets = supervised_target(nstep, *cache_);
        index = nstep.index;
    }
    const bool regularize = uses_regularizer();
    if (regularize) {
        if (actor == nullptr) throw UsageError("the regularizer needs an actor to propose actions");
        const auto B = static_cast<Eigen::Index>(index.size());
        in.upper.resize(B);
        in.lower.resize(B);
        for (Eigen::Index b = 0; b < B; ++b) {
            in.upper[b] = cache_->upper[static_cast<Eigen::Index>(index[static_cast<std::size_t>(b)])];
            in.lower[b] = cache_->lower[static_cast<Eigen::Index>(index[static_cast<std::size_t>(b)])];
        }
        in.actor_states = repeat_rows(in.states, config_.samples);
        in.samples = config_.samples;
        in.lambda = config_.lambda;
        in.temperature = temperature_;
    }

    std::vector<CriticLoss> losses;
    for (std::size_t m = 0; m < critics_.size(); ++m) {
        if (uses_sarsa()) in.targets = sarsa_td_target(sarsa, critics_.target(m), config_.gamma);
        if (regularize) {
            in.actor_actions = actor->propose(in.actor_states, member_rngs_[m]);
            if (config_.variant != Variant::no_mu) in.mu_actions = mu_.propose(in.actor_states, member_rngs_[m]);
        }
        auto grad = critics_.member(m).make_grad();
        const CriticLoss loss = critic_loss(critics_.member(m), in, &grad);
        check_finite(loss, m);
        try {
            optimizers_[m].step(critics_.member(m).parameters(), std::as_const(grad).tensors());
        } catch (const TrainingError& e) {
            throw TrainingError("critic member " + std::to_string(m) + ": " + e.what());
        }
        losses.push_back(loss);
    }
    if (uses_sarsa()) critics_.update_targets(config_.target_decay);
    return losses;
}

}  // namespace yoeo::critic
