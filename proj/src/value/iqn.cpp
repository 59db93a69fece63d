#include "yoeo/value/iqn.hpp"

#include <cmath>
#include <numbers>

#include "yoeo/errors.hpp"

namespace yoeo::value {

namespace {

void check_tau(double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw UsageError("quantile level must lie in (0, 1), got " + std::to_string(tau));
}

struct Shapes {
    std::vector<std::size_t> embed, cosine, head;
    std::vector<nn::Activation> embed_act, cosine_act, head_act;
};

Shapes shapes(std::size_t state_dim, const IqnConfig& c) {
    if (state_dim == 0 || c.feature_dim == 0 || c.hidden == 0 || c.depth == 0) {
        throw ConfigError("IQN dimensions must be positive");
    }
    Shapes s;
    s.embed.push_back(state_dim);
    s.head.push_back(c.feature_dim);
    for (std::size_t i = 0; i < c.depth; ++i) {
        s.embed.push_back(c.hidden);
        s.head.push_back(c.hidden);
        s.embed_act.push_back(nn::Activation::relu);
        s.head_act.push_back(nn::Activation::relu);
    }
    s.embed.push_back(c.feature_dim);
    s.head.push_back(1);
    s.embed_act.push_back(nn::Activation::identity);
    s.head_act.push_back(nn::Activation::identity);
    s.cosine = {kCosineBasisSize, c.feature_dim};
    s.cosine_act = {nn::Activation::relu};
    return s;
}

Vector flatten_rows(const Matrix& taus) {
    Vector flat(taus.size());
    Eigen::Index k = 0;
    for (Eigen::Index r = 0; r < taus.rows(); ++r) {
        for (Eigen::Index c = 0; c < taus.cols(); ++c) flat[k++] = taus(r, c);
    }
    return flat;
}

Matrix repeat_rows(const Matrix& x, Eigen::Index times) {
    Matrix out(x.rows() * times, x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) out.middleRows(r * times, times) = x.row(r).replicate(times, 1);
    return out;
}

void check_shapes(const QuantileValueModel& m, const Matrix& states, const Matrix& taus) {
    if (static_cast<std::size_t>(states.cols()) != m.state_dim()) {
        throw ConfigError("state dimension " + std::to_string(states.cols()) + " does not match the value model (" +
                          std::to_string(m.state_dim()) + ")");
    }
    if (taus.rows() != states.rows() || taus.cols() == 0) throw ConfigError("quantile matrix must be B x K with K >= 1");
    for (Eigen::Index i = 0; i < taus.size(); ++i) check_tau(taus.data()[i]);
}

}  // namespace

Matrix cosine_basis(const Vector& taus) {
    Matrix basis(taus.size(), static_cast<Eigen::Index>(kCosineBasisSize));
    // Chebyshev recurrence: cos(i x) = 2 cos(x) cos((i - 1) x) - cos((i - 2) x).
    basis.col(0).setOnes();
    basis.col(1) = (std::numbers::pi * taus.array()).cos().matrix();
    const Eigen::ArrayXd two_c = 2.0 * basis.col(1).array();
    for (Eigen::Index i = 2; i < basis.cols(); ++i) {
        basis.col(i) = (two_c * basis.col(i - 1).array() - basis.col(i - 2).array()).matrix();
    }
    return basis;
}

double quantile_huber_loss(const Vector& predicted, const Vector& targets, const Vector& taus, double kappa,
                           Vector* grad) {
    if (predicted.size() == 0 || targets.size() == 0) throw UsageError("quantile-Huber loss needs non-empty samples");
    if (taus.size() != predicted.size()) throw UsageError("one quantile level per prediction is required");
    if (!(kappa > 0.0)) throw UsageError("kappa must be positive");
    for (Eigen::Index i = 0; i < taus.size(); ++i) check_tau(taus[i]);
    const double inv_targets = 1.0 / static_cast<double>(targets.size());
    if (grad != nullptr) grad->setZero(predicted.size());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < predicted.size(); ++i) {
        for (Eigen::Index j = 0; j < targets.size(); ++j) {
            const double u = targets[j] - predicted[i];
            const double au = std::abs(u);
            const double weight = std::abs(taus[i] - (u < 0.0 ? 1.0 : 0.0));
            const double huber = au <= kappa ? 0.5 * u * u : kappa * (au - 0.5 * kappa);
            loss += weight * huber / kappa * inv_targets;
            if (grad != nullptr) {
                const double dhuber_du = au <= kappa ? u : kappa * (u < 0.0 ? -1.0 : 1.0);
                (*grad)[i] -= weight * dhuber_du / kappa * inv_targets;
            }
        }
    }
    return loss;
}

void QuantileValueModel::Grad::set_zero() {
    embed.set_zero();
    cosine.set_zero();
    head.set_zero();
}

std::vector<std::span<const double>> QuantileValueModel::Grad::tensors() const {
    auto out = embed.tensors();
    for (auto t : cosine.tensors()) out.push_back(t);
    for (auto t : head.tensors()) out.push_back(t);
    return out;
}

QuantileValueModel::QuantileValueModel(std::size_t state_dim, const IqnConfig& config, nn::RngStream& rng)
    : config_(config) {
    const Shapes s = shapes(state_dim, config);
    embed_ = nn::Mlp::uniform_init(s.embed, s.embed_act, rng);
    cosine_ = nn::Mlp::uniform_init(s.cosine, s.cosine_act, rng);
    head_ = nn::Mlp::uniform_init(s.head, s.head_act, rng);
    sync_target();
}

QuantileValueModel QuantileValueModel::zeros(std::size_t state_dim, const IqnConfig& config) {
    const Shapes s = shapes(state_dim, config);
    QuantileValueModel m;
    m.config_ = config;
    m.embed_ = nn::Mlp(s.embed, s.embed_act);
    m.cosine_ = nn::Mlp(s.cosine, s.cosine_act);
    m.head_ = nn::Mlp(s.head, s.head_act);
    m.sync_target();
    return m;
}

Matrix QuantileValueModel::evaluate(const nn::Mlp& embed, const nn::Mlp& cosine, const nn::Mlp& head,
                                    const Matrix& states, const Matrix& taus) const {
    check_shapes(*this, states, taus);
    const Matrix e = repeat_rows(embed.forward(states), taus.cols());
    const Matrix t = cosine.forward(cosine_basis(flatten_rows(taus)));
    const Matrix out = head.forward(e.cwiseProduct(t));
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        out.data(), taus.rows(), taus.cols());
}

Matrix QuantileValueModel::forward(const Matrix& states, const Matrix& taus, Net net) const {
    if (net == Net::online) return evaluate(embed_, cosine_, head_, states, taus);
    return evaluate(target_embed_, target_cosine_, target_head_, states, taus);
}

Vector QuantileValueModel::quantile(const Matrix& states, double tau, Net net) const {
    check_tau(tau);
    return forward(states, Matrix::Constant(states.rows(), 1, tau), net).col(0);
}

double QuantileValueModel::query(const Vector& state, double tau, Net net) const {
    check_tau(tau);
    return quantile(state.transpose(), tau, net)[0];
}

Matrix QuantileValueModel::forward(const Matrix& states, const Matrix& taus, Tape& tape) const {
    check_shapes(*this, states, taus);
    tape.batch = static_cast<std::size_t>(taus.rows());
    tape.per_state = static_cast<std::size_t>(taus.cols());
    tape.embed_rows = repeat_rows(embed_.forward(states, tape.embed), taus.cols());
    tape.cosine_rows = cosine_.forward(cosine_basis(flatten_rows(taus)), tape.cosine);
    const Matrix out = head_.forward(tape.embed_rows.cwiseProduct(tape.cosine_rows), tape.head);
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        out.data(), taus.rows(), taus.cols());
}

void QuantileValueModel::backward(const Tape& tape, const Matrix& upstream, Grad& grad) const {
    if (tape.head.empty()) throw UsageError("value model backward called without a recorded forward pass");
    const auto B = static_cast<Eigen::Index>(tape.batch);
    const auto K = static_cast<Eigen::Index>(tape.per_state);
    if (upstream.rows() != B || upstream.cols() != K) throw UsageError("upstream gradient shape does not match the tape");
    Matrix d_out(B * K, 1);
    for (Eigen::Index b = 0; b < B; ++b) {
        for (Eigen::Index k = 0; k < K; ++k) d_out(b * K + k, 0) = upstream(b, k);
    }
    const Matrix d_product = head_.backward(tape.head, d_out, grad.head);
    cosine_.backward(tape.cosine, d_product.cwiseProduct(tape.embed_rows), grad.cosine);
    const Matrix d_embed_rows = d_product.cwiseProduct(tape.cosine_rows);
    Matrix d_embed(B, d_embed_rows.cols());
    for (Eigen::Index b = 0; b < B; ++b) d_embed.row(b) = d_embed_rows.middleRows(b * K, K).colwise().sum();
    embed_.backward(tape.embed, d_embed, grad.embed);
}

QuantileValueModel::Grad QuantileValueModel::make_grad() const {
    return {embed_.make_grad(), cosine_.make_grad(), head_.make_grad()};
}

std::vector<std::span<double>> QuantileValueModel::parameters() {
    auto out = embed_.parameters();
    for (auto p : cosine_.parameters()) out.push_back(p);
    for (auto p : head_.parameters()) out.push_back(p);
    return out;
}

std::vector<std::span<const double>> QuantileValueModel::parameters() const {
    auto out = embed_.parameters();
    for (auto p : cosine_.parameters()) out.push_back(p);
    for (auto p : head_.parameters()) out.push_back(p);
    return out;
}

void QuantileValueModel::update_target(double decay) {
    nn::ema_update(target_embed_, embed_, decay);
    nn::ema_update(target_cosine_, cosine_, decay);
    nn::ema_update(target_head_, head_, decay);
}

void QuantileValueModel::sync_target() {
    target_embed_ = embed_;
    target_cosine_ = cosine_;
    target_head_ = head_;
}

void QuantileValueModel::save(nn::Checkpoint& checkpoint, const std::string& prefix) const {
    checkpoint.add_scalar(prefix + ".feature_dim", static_cast<double>(config_.feature_dim));
    checkpoint.add_scalar(prefix + ".hidden", static_cast<double>(config_.hidden));
    checkpoint.add_scalar(prefix + ".depth", static_cast<double>(config_.depth));
    checkpoint.add_mlp(prefix + ".embed", embed_);
    checkpoint.add_mlp(prefix + ".cosine", cosine_);
    checkpoint.add_mlp(prefix + ".head", head_);
    checkpoint.add_mlp(prefix + ".target_embed", target_embed_);
    checkpoint.add_mlp(prefix + ".target_cosine", target_cosine_);
    checkpoint.add_mlp(prefix + ".target_head", target_head_);
}

void QuantileValueModel::load(const nn::Checkpoint& checkpoint, const std::string& prefix) {
    checkpoint.load_mlp(prefix + ".embed", embed_);
    checkpoint.load_mlp(prefix + ".cosine", cosine_);
    checkpoint.load_mlp(prefix + ".head", head_);
    checkpoint.load_mlp(prefix + ".target_embed", target_embed_);
    checkpoint.load_mlp(prefix + ".target_cosine", target_cosine_);
    checkpoint.load_mlp(prefix + ".target_head", target_head_);
}

double value_loss(const QuantileValueModel& model, const data::NStepBatch& batch, const Matrix& taus,
                  const Matrix& target_taus, double kappa, QuantileValueModel::Grad* grad) {
    const auto B = static_cast<Eigen::Index>(batch.size());
    if (B == 0) throw UsageError("value loss on an empty batch");
    const Matrix next = model.forward(batch.bootstrap_states, target_taus, Net::target);
    Matrix targets = next;
    for (Eigen::Index b = 0; b < B; ++b) {
        const double boot = batch.terminal[static_cast<std::size_t>(b)] ? 0.0 : batch.discount[b];
        targets.row(b) = (boot * next.row(b).array() + batch.returns[b]).matrix();
    }
    QuantileValueModel::Tape tape;
    const Matrix pred = grad != nullptr ? model.forward(batch.states, taus, tape) : model.forward(batch.states, taus);
    Matrix upstream(pred.rows(), pred.cols());
    double loss = 0.0;
    Vector row_grad;
    for (Eigen::Index b = 0; b < B; ++b) {
        loss += quantile_huber_loss(pred.row(b).transpose(), targets.row(b).transpose(), taus.row(b).transpose(), kappa,
                                    grad != nullptr ? &row_grad : nullptr);
        if (grad != nullptr) upstream.row(b) = row_grad.transpose() / static_cast<double>(B);
    }
    loss /= static_cast<double>(B);
    if (grad != nullptr) model.backward(tape, upstream, *grad);
    return loss;
}

double train_value_step(QuantileValueModel& model, nn::Adamw& optimizer, const data::NStepBatch& batch,
                        const ValueTrainConfig& config, nn::RngStream& rng) {
    if (config.n_tau == 0 || config.n_tau_target == 0) throw ConfigError("N and N' must be positive");
    const auto B = static_cast<Eigen::Index>(batch.size());
    Matrix taus(B, static_cast<Eigen::Index>(config.n_tau));
    Matrix target_taus(B, static_cast<Eigen::Index>(config.n_tau_target));
    for (Eigen::Index i = 0; i < taus.size(); ++i) taus.data()[i] = rng.uniform_open();
    for (Eigen::Index i = 0; i < target_taus.size(); ++i) target_taus.data()[i] = rng.uniform_open();
    auto grad = model.make_grad();
    const double loss = value_loss(model, batch, taus, target_taus, config.kappa, &grad);
    if (!std::isfinite(loss)) {
        throw TrainingError("value loss became non-finite at optimizer step " + std::to_string(optimizer.step_count()));
    }
    optimizer.step(model.parameters(), grad.tensors());
    model.update_target(config.ema_decay);
    return loss;
}

double train_value_step(QuantileValueModel& model, nn::Adamw& optimizer, const data::TransitionDataset& dataset,
                        const ValueTrainConfig& config, nn::RngStream& rng) {
    const data::NStepBatch batch = data::sample_nstep(dataset, config.batch, config.n_step, config.gamma, rng);
    return train_value_step(model, optimizer, batch, config, rng);
}

}  // namespace yoeo::value
