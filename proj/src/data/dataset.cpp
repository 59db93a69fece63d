#include "yoeo/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "yoeo/errors.hpp"
#include "yoeo/nn/binary_io.hpp"

namespace yoeo::data {

namespace io = nn::io;

TransitionDataset::TransitionDataset(Matrix states, Matrix actions, Vector rewards, Matrix next_states,
                                     std::vector<EndKind> ends, std::vector<std::size_t> episode_starts,
                                     nlohmann::json metadata)
    : states_(std::move(states)),
      actions_(std::move(actions)),
      rewards_(std::move(rewards)),
      next_states_(std::move(next_states)),
      ends_(std::move(ends)),
      episode_starts_(std::move(episode_starts)),
      metadata_(std::move(metadata)) {
    validate();
    index();
}

void TransitionDataset::validate() const {
    const auto n = static_cast<Eigen::Index>(rewards_.size());
    if (n < 1) {
        throw LoadError("dataset is empty (rewards has 0 entries)");
    }
    auto check_rows = [n](const char* name, Eigen::Index rows) {
        if (rows != n) {
            throw LoadError(std::string(name) + " has " + std::to_string(rows) + " rows, expected " +
                            std::to_string(n) + " (length of rewards)");
        }
    };
    check_rows("states", states_.rows());
    check_rows("actions", actions_.rows());
    check_rows("next_states", next_states_.rows());
    check_rows("done", static_cast<Eigen::Index>(ends_.size()));
    if (next_states_.cols() != states_.cols()) {
        throw LoadError("next_states has " + std::to_string(next_states_.cols()) + " columns, states has " +
                        std::to_string(states_.cols()));
    }
    if (states_.cols() < 1 || actions_.cols() < 1) {
        throw LoadError("state and action dimensions must be positive");
    }
    if (episode_starts_.empty() || episode_starts_.front() != 0) {
        throw LoadError("episode_starts must begin with 0");
    }
    for (std::size_t e = 1; e < episode_starts_.size(); ++e) {
        if (episode_starts_[e] <= episode_starts_[e - 1]) {
            throw LoadError("episode_starts not strictly increasing at entry " + std::to_string(e));
        }
    }
    if (episode_starts_.back() >= static_cast<std::size_t>(n)) {
        throw LoadError("episode start " + std::to_string(episode_starts_.back()) + " is past the last record");
    }
    for (Eigen::Index t = 0; t < n; ++t) {
        if (!std::isfinite(rewards_[t]) || !states_.row(t).allFinite() || !actions_.row(t).allFinite() ||
            !next_states_.row(t).allFinite()) {
            throw LoadError("record " + std::to_string(t) + " contains a non-finite value");
        }
        if (static_cast<std::uint8_t>(ends_[static_cast<std::size_t>(t)]) > 2) {
            throw LoadError("record " + std::to_string(t) + " has an invalid done code");
        }
    }
    for (std::size_t e = 0; e < episode_starts_.size(); ++e) {
        const std::size_t begin = episode_starts_[e];
        const std::size_t end = e + 1 < episode_starts_.size() ? episode_starts_[e + 1] : static_cast<std::size_t>(n);
        for (std::size_t t = begin; t + 1 < end; ++t) {
            if (ends_[t] != EndKind::none) {
                throw LoadError("record " + std::to_string(t) + " ends episode " + std::to_string(e) +
                                " but the episode continues");
            }
            if (next_states_.row(static_cast<Eigen::Index>(t)) != states_.row(static_cast<Eigen::Index>(t + 1))) {
                throw LoadError("record " + std::to_string(t) + ": next_state differs from the state of record " +
                                std::to_string(t + 1) + " (non-contiguous episode " + std::to_string(e) + ")");
            }
        }
    }
}

void TransitionDataset::index() {
    sarsa_rows_.clear();
    for (std::size_t t = 0; t < size(); ++t) {
        const bool has_successor = ends_[t] == EndKind::none && t + 1 < episode_end(t);
        if (has_successor || ends_[t] == EndKind::terminal) {
            sarsa_rows_.push_back(t);
        }
    }
}

std::size_t TransitionDataset::episode_of(std::size_t t) const {
    const auto it = std::upper_bound(episode_starts_.begin(), episode_starts_.end(), t);
    return static_cast<std::size_t>(it - episode_starts_.begin()) - 1;
}

std::size_t TransitionDataset::episode_end(std::size_t t) const {
    const std::size_t e = episode_of(t);
    return e + 1 < episode_starts_.size() ? episode_starts_[e + 1] : size();
}

Vector TransitionDataset::returns_to_go(double gamma) const {
    Vector out(rewards_.size());
    double running = 0.0;
    for (std::size_t t = size(); t-- > 0;) {
        if (t + 1 == episode_end(t)) running = 0.0;
        running = rewards_[static_cast<Eigen::Index>(t)] + gamma * running;
        out[static_cast<Eigen::Index>(t)] = running;
    }
    return out;
}

bool TransitionDataset::operator==(const TransitionDataset& other) const {
    return states_ == other.states_ && actions_ == other.actions_ && rewards_ == other.rewards_ &&
           next_states_ == other.next_states_ && ends_ == other.ends_ && episode_starts_ == other.episode_starts_ &&
           metadata_ == other.metadata_;
}

DatasetBuilder::DatasetBuilder(std::size_t state_dim, std::size_t action_dim)
    : state_dim_(state_dim), action_dim_(action_dim) {}

void DatasetBuilder::begin_episode() {
    if (starts_.empty() || starts_.back() != rewards_.size()) {
        starts_.push_back(rewards_.size());
    }
}

void DatasetBuilder::add(const Vector& state, const Vector& action, double reward, const Vector& next_state,
                         EndKind end) {
    if (static_cast<std::size_t>(state.size()) != state_dim_ ||
        static_cast<std::size_t>(next_state.size()) != state_dim_ ||
        static_cast<std::size_t>(action.size()) != action_dim_) {
        throw ConfigError("transition dimensions do not match the dataset builder");
    }
    if (starts_.empty()) begin_episode();
    states_.insert(states_.end(), state.data(), state.data() + state.size());
    actions_.insert(actions_.end(), action.data(), action.data() + action.size());
    rewards_.push_back(reward);
    next_states_.insert(next_states_.end(), next_state.data(), next_state.data() + next_state.size());
    ends_.push_back(end);
}

TransitionDataset DatasetBuilder::build(nlohmann::json metadata) const {
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const auto n = static_cast<Eigen::Index>(rewards_.size());
    const auto ds = static_cast<Eigen::Index>(state_dim_);
    const auto da = static_cast<Eigen::Index>(action_dim_);
    Matrix states = Eigen::Map<const RowMajor>(states_.data(), n, ds);
    Matrix actions = Eigen::Map<const RowMajor>(actions_.data(), n, da);
    Matrix next_states = Eigen::Map<const RowMajor>(next_states_.data(), n, ds);
    Vector rewards = Eigen::Map<const Vector>(rewards_.data(), n);
    return TransitionDataset(std::move(states), std::move(actions), std::move(rewards), std::move(next_states), ends_,
                             starts_, std::move(metadata));
}

// ---------------------------------------------------------------------------------------------
// Binary container

namespace {

void write_column(std::ostream& out, const double* data, std::size_t count) {
    io::write<std::uint64_t>(out, count);
    for (std::size_t i = 0; i < count; ++i) io::write<double>(out, data[i]);
}

Matrix read_matrix(std::istream& in, const std::string& name, std::uint64_t rows, std::uint64_t cols) {
    const auto count = io::read<std::uint64_t>(in, name + " length");
    if (count != rows * cols) {
        throw LoadError(name + " has " + std::to_string(count) + " values, expected " + std::to_string(rows * cols));
    }
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::uint64_t i = 0; i < count; ++i) m.data()[i] = io::read<double>(in, name);
    return m;
}

}  // namespace

std::string serialize_dataset(const TransitionDataset& d) {
    std::ostringstream out(std::ios::binary);
    io::write_bytes(out, "YOED");
    io::write<std::uint32_t>(out, 1);
    io::write<std::uint64_t>(out, d.state_dim());
    io::write<std::uint64_t>(out, d.action_dim());
    io::write<std::uint64_t>(out, d.size());
    write_column(out, d.states().data(), static_cast<std::size_t>(d.states().size()));
    write_column(out, d.actions().data(), static_cast<std::size_t>(d.actions().size()));
    write_column(out, d.rewards().data(), static_cast<std::size_t>(d.rewards().size()));
    write_column(out, d.next_states().data(), static_cast<std::size_t>(d.next_states().size()));
    io::write<std::uint64_t>(out, d.size());
    for (auto e : d.ends()) io::write<std::uint8_t>(out, static_cast<std::uint8_t>(e));
    io::write<std::uint64_t>(out, d.episode_starts().size());
    for (auto s : d.episode_starts()) io::write<std::uint64_t>(out, s);
    const std::string meta = d.metadata().dump();
    io::write<std::uint64_t>(out, meta.size());
    io::write_bytes(out, meta);
    return out.str();
}

TransitionDataset deserialize_dataset(const std::string& bytes) {
    std::istringstream in(bytes, std::ios::binary);
    if (io::read_bytes(in, 4, "magic") != "YOED") {
        throw LoadError("malformed header: bad magic bytes");
    }
    const auto version = io::read<std::uint32_t>(in, "header version");
    if (version != 1) {
        throw LoadError("malformed header: unsupported version " + std::to_string(version));
    }
    const auto ds = io::read<std::uint64_t>(in, "header dS");
    const auto da = io::read<std::uint64_t>(in, "header dA");
    const auto n = io::read<std::uint64_t>(in, "header N");
    if (ds == 0 || da == 0 || n == 0 || (n * (2 * ds + da + 1)) * sizeof(double) > bytes.size()) {
        throw LoadError("malformed header: dS=" + std::to_string(ds) + " dA=" + std::to_string(da) +
                        " N=" + std::to_string(n) + " inconsistent with file size");
    }
    Matrix states = read_matrix(in, "states", n, ds);
    Matrix actions = read_matrix(in, "actions", n, da);
    Vector rewards = read_matrix(in, "rewards", n, 1).col(0);
    Matrix next_states = read_matrix(in, "next_states", n, ds);
    const auto done_count = io::read<std::uint64_t>(in, "done length");
    if (done_count != n) {
        throw LoadError("done has " + std::to_string(done_count) + " values, expected " + std::to_string(n));
    }
    std::vector<EndKind> ends(n);
    for (auto& e : ends) {
        const auto code = io::read<std::uint8_t>(in, "done");
        if (code > 2) throw LoadError("done contains invalid code " + std::to_string(code));
        e = static_cast<EndKind>(code);
    }
    const auto start_count = io::read<std::uint64_t>(in, "episode_starts length");
    if (start_count == 0 || start_count > n) {
        throw LoadError("episode_starts has implausible length " + std::to_string(start_count));
    }
    std::vector<std::size_t> starts(start_count);
    for (auto& s : starts) s = io::read<std::uint64_t>(in, "episode_starts");
    const auto meta_length = io::read<std::uint64_t>(in, "metadata length");
    if (meta_length > bytes.size()) {
        throw LoadError("metadata length exceeds file size");
    }
    const std::string meta = io::read_bytes(in, meta_length, "metadata");
    nlohmann::json metadata;
    try {
        metadata = nlohmann::json::parse(meta);
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(std::string("metadata is not valid JSON: ") + e.what());
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw LoadError("trailing bytes after metadata");
    }
    return TransitionDataset(std::move(states), std::move(actions), std::move(rewards), std::move(next_states),
                             std::move(ends), std::move(starts), std::move(metadata));
}

void save_dataset(const TransitionDataset& dataset, const std::string& path) {
    io::atomic_write(path, serialize_dataset(dataset));
}

TransitionDataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw LoadError("cannot open dataset " + path);
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    try {
        return deserialize_dataset(buffer.str());
    } catch (const LoadError& e) {
        throw LoadError(path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------------------------
// Sampling

NStepBatch nstep_at(const TransitionDataset& d, const std::vector<std::size_t>& starts, std::size_t n, double gamma) {
    if (n < 1) throw UsageError("n-step sampling needs n >= 1");
    const auto b = static_cast<Eigen::Index>(starts.size());
    NStepBatch batch;
    batch.states.resize(b, static_cast<Eigen::Index>(d.state_dim()));
    batch.actions.resize(b, static_cast<Eigen::Index>(d.action_dim()));
    batch.bootstrap_states.resize(b, static_cast<Eigen::Index>(d.state_dim()));
    batch.returns.resize(b);
    batch.discount.resize(b);
    batch.steps.resize(starts.size());
    batch.terminal.resize(starts.size());
    batch.index = starts;
    batch.last_index.resize(starts.size());
    for (Eigen::Index row = 0; row < b; ++row) {
        const std::size_t t = starts[static_cast<std::size_t>(row)];
        if (t >= d.size()) throw UsageError("n-step start index out of range");
        const std::size_t end = d.episode_end(t);
        double sum = 0.0;
        double weight = 1.0;
        std::size_t k = 0;
        bool terminal = false;
        while (k < n && t + k < end) {
            const std::size_t i = t + k;
            sum += weight * d.rewards()[static_cast<Eigen::Index>(i)];
            weight *= gamma;
            ++k;
            if (d.ends()[i] != EndKind::none) {
                terminal = d.ends()[i] == EndKind::terminal;
                break;
            }
        }
        const std::size_t last = t + k - 1;
        batch.states.row(row) = d.states().row(static_cast<Eigen::Index>(t));
        batch.actions.row(row) = d.actions().row(static_cast<Eigen::Index>(t));
        batch.bootstrap_states.row(row) = d.next_states().row(static_cast<Eigen::Index>(last));
        batch.returns[row] = sum;
        batch.discount[row] = weight;
        batch.steps[static_cast<std::size_t>(row)] = k;
        batch.terminal[static_cast<std::size_t>(row)] = terminal;
        batch.last_index[static_cast<std::size_t>(row)] = last;
    }
    return batch;
}

NStepBatch sample_nstep(const TransitionDataset& d, std::size_t batch, std::size_t n, double gamma,
                        nn::RngStream& rng) {
    if (d.size() == 0) throw UsageError("cannot sample from an empty dataset");
    if (batch < 1) throw UsageError("batch size must be >= 1");
    std::vector<std::size_t> starts(batch);
    for (auto& s : starts) s = rng.index(d.size());
    return nstep_at(d, starts, n, gamma);
}

SarsaBatch sarsa_at(const TransitionDataset& d, const std::vector<std::size_t>& rows) {
    const auto b = static_cast<Eigen::Index>(rows.size());
    SarsaBatch batch;
    batch.states.resize(b, static_cast<Eigen::Index>(d.state_dim()));
    batch.actions.resize(b, static_cast<Eigen::Index>(d.action_dim()));
    batch.next_states.resize(b, static_cast<Eigen::Index>(d.state_dim()));
    batch.next_actions = Matrix::Zero(b, static_cast<Eigen::Index>(d.action_dim()));
    batch.rewards.resize(b);
    batch.terminal.resize(rows.size());
    batch.index = rows;
    for (Eigen::Index row = 0; row < b; ++row) {
        const std::size_t t = rows[static_cast<std::size_t>(row)];
        const auto ti = static_cast<Eigen::Index>(t);
        const bool terminal = d.ends()[t] == EndKind::terminal;
        if (!terminal && !(d.ends()[t] == EndKind::none && t + 1 < d.episode_end(t))) {
            throw UsageError("record " + std::to_string(t) + " has no successor action for a SARSA row");
        }
        batch.states.row(row) = d.states().row(ti);
        batch.actions.row(row) = d.actions().row(ti);
        batch.rewards[row] = d.rewards()[ti];
        batch.next_states.row(row) = d.next_states().row(ti);
        batch.terminal[static_cast<std::size_t>(row)] = terminal;
        if (!terminal) batch.next_actions.row(row) = d.actions().row(ti + 1);
    }
    return batch;
}

SarsaBatch sample_sarsa(const TransitionDataset& d, std::size_t batch, nn::RngStream& rng) {
    if (d.sarsa_rows().empty()) throw UsageError("dataset has no valid SARSA rows");
    if (batch < 1) throw UsageError("batch size must be >= 1");
    std::vector<std::size_t> rows(batch);
    for (auto& r : rows) r = d.sarsa_rows()[rng.index(d.sarsa_rows().size())];
    return sarsa_at(d, rows);
}

}  // namespace yoeo::data
