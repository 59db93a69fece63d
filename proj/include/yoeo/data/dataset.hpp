#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "yoeo/nn/rng.hpp"

namespace yoeo::data {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// How a transition closes an episode. Stored as one byte per transition.
enum class EndKind : std::uint8_t {
    none = 0,      // episode continues at t + 1
    terminal = 1,  // true termination: bootstrap value is 0
    timeout = 2,   // horizon truncation: bootstrapping from next_state is allowed
};

/// Offline dataset of (s, a, r, s', end) records grouped into contiguous episodes.
///
/// Invariants (checked by validate()):
///   - every column has N >= 1 rows;
///   - episode_starts begins with 0 and is strictly increasing;
///   - only the last record of an episode may carry an EndKind other than none;
///   - within an episode next_states[t] == states[t + 1].
/// A final record with EndKind::none is treated as a timeout.
class TransitionDataset {
public:
    TransitionDataset() = default;
    TransitionDataset(Matrix states, Matrix actions, Vector rewards, Matrix next_states, std::vector<EndKind> ends,
                      std::vector<std::size_t> episode_starts, nlohmann::json metadata = nlohmann::json::object());

    std::size_t size() const noexcept { return static_cast<std::size_t>(rewards_.size()); }
    std::size_t state_dim() const noexcept { return static_cast<std::size_t>(states_.cols()); }
    std::size_t action_dim() const noexcept { return static_cast<std::size_t>(actions_.cols()); }
    std::size_t episode_count() const noexcept { return episode_starts_.size(); }

    const Matrix& states() const noexcept { return states_; }
    const Matrix& actions() const noexcept { return actions_; }
    const Vector& rewards() const noexcept { return rewards_; }
    const Matrix& next_states() const noexcept { return next_states_; }
    const std::vector<EndKind>& ends() const noexcept { return ends_; }
    const std::vector<std::size_t>& episode_starts() const noexcept { return episode_starts_; }
    const nlohmann::json& metadata() const noexcept { return metadata_; }
    nlohmann::json& metadata() noexcept { return metadata_; }

    /// Index of the episode containing record t.
    std::size_t episode_of(std::size_t t) const;
    /// One past the last record of the episode containing t.
    std::size_t episode_end(std::size_t t) const;
    /// Records usable as SARSA rows: a successor action exists, or the record is terminal.
    const std::vector<std::size_t>& sarsa_rows() const noexcept { return sarsa_rows_; }

    /// Discounted return-to-go of every record, truncated at the episode end.
    Vector returns_to_go(double gamma) const;

    /// Throws LoadError naming the first violated invariant.
    void validate() const;

    bool operator==(const TransitionDataset& other) const;

private:
    void index();

    Matrix states_;
    Matrix actions_;
    Vector rewards_;
    Matrix next_states_;
    std::vector<EndKind> ends_;
    std::vector<std::size_t> episode_starts_;
    nlohmann::json metadata_ = nlohmann::json::object();
    std::vector<std::size_t> sarsa_rows_;
};

/// Appends whole episodes; build() validates.
class DatasetBuilder {
public:
    DatasetBuilder(std::size_t state_dim, std::size_t action_dim);

    void begin_episode();
    void add(const Vector& state, const Vector& action, double reward, const Vector& next_state, EndKind end);
    TransitionDataset build(nlohmann::json metadata = nlohmann::json::object()) const;

    std::size_t size() const noexcept { return rewards_.size(); }

private:
    std::size_t state_dim_;
    std::size_t action_dim_;
    std::vector<double> states_;
    std::vector<double> actions_;
    std::vector<double> rewards_;
    std::vector<double> next_states_;
    std::vector<EndKind> ends_;
    std::vector<std::size_t> starts_;
};

/// Binary dataset container.
///
/// Byte layout (all integers little-endian, reals IEEE-754 f64):
///   "YOED"                         magic, 4 bytes
///   u32                            format version (1)
///   u64 dS, u64 dA, u64 N
///   u64 count = N*dS, f64[count]   states, column-major (all rows of dim 0, then dim 1, ...)
///   u64 count = N*dA, f64[count]   actions, column-major
///   u64 count = N,    f64[count]   rewards
///   u64 count = N*dS, f64[count]   next_states, column-major
///   u64 count = N,    u8[count]    end kind (0 none, 1 terminal, 2 timeout)
///   u64 count,        u64[count]   episode start indices
///   u64 length,       bytes        UTF-8 JSON metadata
std::string serialize_dataset(const TransitionDataset& dataset);
TransitionDataset deserialize_dataset(const std::string& bytes);
void save_dataset(const TransitionDataset& dataset, const std::string& path);
TransitionDataset load_dataset(const std::string& path);

/// (s_t, a_t, sum_{i<k} gamma^i r_{t+i}, s_{t+k}) samples.
struct NStepBatch {
    Matrix states;
    Matrix actions;
    Vector returns;
    Matrix bootstrap_states;
    std::vector<std::size_t> steps;       // k <= n
    std::vector<bool> terminal;           // true termination inside the window
    std::vector<std::size_t> index;       // t
    std::vector<std::size_t> last_index;  // t + k - 1; bootstrap state is next_states[last_index]
    Vector discount;                      // gamma^k

    std::size_t size() const noexcept { return index.size(); }
};

struct SarsaBatch {
    Matrix states;
    Matrix actions;
    Vector rewards;
    Matrix next_states;
    Matrix next_actions;  // rows of terminal records are zero and never read
    std::vector<bool> terminal;
    std::vector<std::size_t> index;

    std::size_t size() const noexcept { return index.size(); }
};

/// Uniform start indices; the reward sum stops at the episode end (terminal flag set on true termination).
NStepBatch sample_nstep(const TransitionDataset& dataset, std::size_t batch, std::size_t n, double gamma,
                        nn::RngStream& rng);
/// Deterministic n-step window at the given start indices.
NStepBatch nstep_at(const TransitionDataset& dataset, const std::vector<std::size_t>& starts, std::size_t n,
                    double gamma);

/// Uniform over sarsa_rows().
SarsaBatch sample_sarsa(const TransitionDataset& dataset, std::size_t batch, nn::RngStream& rng);
SarsaBatch sarsa_at(const TransitionDataset& dataset, const std::vector<std::size_t>& rows);

}  // namespace yoeo::data
