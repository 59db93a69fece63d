#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "yoeo/data/dataset.hpp"
#include "yoeo/errors.hpp"

using namespace yoeo;
using namespace yoeo::data;

namespace {

// Episodes of the given lengths on a 1-D line; state = global step counter so contiguity holds.
TransitionDataset line_dataset(const std::vector<std::size_t>& lengths, const std::vector<EndKind>& last_end,
                               const std::function<double(std::size_t episode, std::size_t t)>& reward) {
    DatasetBuilder builder(1, 1);
    double x = 0.0;
    for (std::size_t e = 0; e < lengths.size(); ++e) {
        builder.begin_episode();
        x += 1000.0;
        for (std::size_t t = 0; t < lengths[e]; ++t) {
            Vector s(1), a(1), s2(1);
            s << x;
            a << static_cast<double>(e) + 0.01 * static_cast<double>(t);
            s2 << x + 1.0;
            const bool last = t + 1 == lengths[e];
            builder.add(s, a, reward(e, t), s2, last ? last_end[e] : EndKind::none);
            x += 1.0;
        }
    }
    return builder.build({{"env", "line"}, {"behavior", "test"}, {"gamma", 0.99}});
}

double geometric(double gamma, std::size_t k) {
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += std::pow(gamma, static_cast<double>(i));
    return s;
}

}  // namespace

TEST_CASE("save_dataset / load_dataset reproduce every array bitwise") {
    const auto d = line_dataset({5, 3, 7}, {EndKind::terminal, EndKind::timeout, EndKind::none},
                                [](std::size_t e, std::size_t t) { return std::sin(double(e * 10 + t)); });
    const auto path = (std::filesystem::temp_directory_path() / "yoeo_roundtrip.yoed").string();
    save_dataset(d, path);
    const auto back = load_dataset(path);
    CHECK(back == d);
    CHECK(serialize_dataset(back) == serialize_dataset(d));
    std::filesystem::remove(path);
}

TEST_CASE("load_dataset: rewards column one element short is reported by name") {
    const auto d = line_dataset({4}, {EndKind::terminal}, [](auto, auto) { return 1.0; });
    std::string bytes = serialize_dataset(d);
    const std::size_t n = d.size();
    const std::size_t header = 4 + 4 + 3 * 8;
    const std::size_t rewards_at = header + (8 + n * 8) + (8 + n * 8);
    std::uint64_t short_count = n - 1;
    std::memcpy(bytes.data() + rewards_at, &short_count, 8);
    bytes.erase(rewards_at + 8, 8);
    try {
        deserialize_dataset(bytes);
        FAIL("expected a load error");
    } catch (const LoadError& e) {
        CHECK(std::string(e.what()).find("rewards") != std::string::npos);
    }
}

TEST_CASE("load_dataset: structural validation names the offending record") {
    const auto d = line_dataset({3, 3}, {EndKind::timeout, EndKind::terminal}, [](auto, auto) { return 0.0; });

    Matrix next = d.next_states();
    next(1, 0) += 0.5;
    try {
        TransitionDataset(d.states(), d.actions(), d.rewards(), next, d.ends(), d.episode_starts());
        FAIL("expected a load error");
    } catch (const LoadError& e) {
        CHECK(std::string(e.what()).find("record 1") != std::string::npos);
    }

    CHECK_THROWS_AS(TransitionDataset(d.states(), d.actions(), d.rewards(), d.next_states(), d.ends(), {1, 3}),
                    LoadError);
    CHECK_THROWS_AS(TransitionDataset(d.states(), d.actions(), d.rewards(), d.next_states(), d.ends(), {0, 3, 3}),
                    LoadError);
    auto ends = d.ends();
    ends[0] = EndKind::terminal;
    CHECK_THROWS_AS(TransitionDataset(d.states(), d.actions(), d.rewards(), d.next_states(), ends, {0, 3}),
                    LoadError);
    CHECK_THROWS_AS(deserialize_dataset("YOEX" + serialize_dataset(d).substr(4)), LoadError);
}

TEST_CASE("sample_nstep: zero and constant rewards") {
    nn::RngStream rng(1, 0);
    const auto zero = line_dataset({30, 40}, {EndKind::terminal, EndKind::timeout}, [](auto, auto) { return 0.0; });
    const auto zb = sample_nstep(zero, 64, 10, 0.99, rng);
    CHECK(zb.returns.isZero(0.0));

    const auto ones = line_dataset({500}, {EndKind::timeout}, [](auto, auto) { return 1.0; });
    const auto ob = nstep_at(ones, {0, 17, 480}, 10, 0.99);
    // geometric oracle: sum_{i=0}^{9} 0.99^i = (1 - 0.99^10) / (1 - 0.99)
    CHECK(ob.returns[0] == doctest::Approx((1.0 - std::pow(0.99, 10)) / 0.01).epsilon(1e-12));
    CHECK(ob.returns[0] == doctest::Approx(9.5618).epsilon(1e-4));
    CHECK(ob.steps[0] == 10);
    CHECK_FALSE(ob.terminal[0]);
    CHECK(ob.discount[0] == doctest::Approx(std::pow(0.99, 10)).epsilon(1e-14));
    CHECK(ob.bootstrap_states(1, 0) == ones.states()(27, 0));
    // window truncated by a timeout: bootstrap allowed
    CHECK(ob.steps[2] == 10);
    const auto tail = nstep_at(ones, {495}, 10, 0.99);
    CHECK(tail.steps[0] == 5);
    CHECK_FALSE(tail.terminal[0]);
    CHECK(tail.returns[0] == doctest::Approx(geometric(0.99, 5)).epsilon(1e-12));
}

TEST_CASE("sample_nstep: terminal inside the window truncates and sets the flag") {
    const auto d = line_dataset({6, 6}, {EndKind::terminal, EndKind::timeout}, [](auto, auto) { return 2.0; });
    const auto b = nstep_at(d, {2, 8}, 10, 0.5);
    CHECK(b.steps[0] == 4);
    CHECK(b.terminal[0]);
    CHECK(b.returns[0] == doctest::Approx(2.0 * (1 + 0.5 + 0.25 + 0.125)));
    CHECK(b.last_index[0] == 5);
    CHECK(b.steps[1] == 4);
    CHECK_FALSE(b.terminal[1]);
}

TEST_CASE("sample_nstep: n = 1 reduces to the raw reward") {
    nn::RngStream rng(2, 0);
    const auto d = line_dataset({20, 15}, {EndKind::terminal, EndKind::timeout},
                                [](std::size_t e, std::size_t t) { return 0.3 * double(t) - double(e); });
    const auto b = sample_nstep(d, 200, 1, 0.9, rng);
    for (std::size_t i = 0; i < b.size(); ++i) {
        CHECK(b.returns[static_cast<Eigen::Index>(i)] == d.rewards()[static_cast<Eigen::Index>(b.index[i])]);
        CHECK(b.steps[i] == 1);
    }
}

TEST_CASE("sample_nstep: rows never mix rewards from two episodes") {
    nn::RngStream rng(3, 0);
    // Episode e pays 4^e on every step; with gamma = 1 the sum is k * 4^e iff no other episode leaks in.
    const std::vector<std::size_t> lengths{3, 7, 2, 12, 5};
    const auto d = line_dataset(lengths, std::vector<EndKind>(5, EndKind::timeout),
                                [](std::size_t e, auto) { return std::pow(4.0, double(e)); });
    const auto b = sample_nstep(d, 2000, 10, 1.0, rng);
    for (std::size_t i = 0; i < b.size(); ++i) {
        const double code = std::pow(4.0, double(d.episode_of(b.index[i])));
        CHECK(b.returns[static_cast<Eigen::Index>(i)] == double(b.steps[i]) * code);
        CHECK(d.episode_of(b.last_index[i]) == d.episode_of(b.index[i]));
    }
}

TEST_CASE("sample_nstep / sample_sarsa: empty dataset is a usage error") {
    nn::RngStream rng(4, 0);
    TransitionDataset empty;
    CHECK_THROWS_AS(sample_nstep(empty, 4, 10, 0.99, rng), UsageError);
    CHECK_THROWS_AS(sample_sarsa(empty, 4, rng), UsageError);
}

TEST_CASE("sample_sarsa: a single two-step episode has exactly one valid row") {
    nn::RngStream rng(5, 0);
    const auto d = line_dataset({2}, {EndKind::timeout}, [](auto, auto t) { return double(t); });
    CHECK(d.sarsa_rows() == std::vector<std::size_t>{0});
    const auto b = sample_sarsa(d, 50, rng);
    for (std::size_t i = 0; i < b.size(); ++i) {
        CHECK(b.index[i] == 0);
        CHECK(b.next_actions(static_cast<Eigen::Index>(i), 0) == d.actions()(1, 0));
    }
}

TEST_CASE("sample_sarsa: successor action and terminal rows") {
    nn::RngStream rng(6, 0);
    const auto d = line_dataset({4, 5}, {EndKind::terminal, EndKind::timeout}, [](auto, auto) { return 1.0; });
    CHECK(d.sarsa_rows() == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7});
    const auto b = sample_sarsa(d, 500, rng);
    for (std::size_t i = 0; i < b.size(); ++i) {
        const auto t = static_cast<Eigen::Index>(b.index[i]);
        if (b.index[i] == 3) {
            CHECK(b.terminal[i]);
        } else {
            CHECK_FALSE(b.terminal[i]);
            CHECK(b.next_actions(static_cast<Eigen::Index>(i), 0) == d.actions()(t + 1, 0));
        }
    }
}

TEST_CASE("sample_sarsa: uniform over rows (binomial 5-sigma band)") {
    nn::RngStream rng(7, 0);
    std::vector<std::size_t> lengths(10, 10);
    const auto d = line_dataset(lengths, std::vector<EndKind>(10, EndKind::terminal), [](auto, auto) { return 0.0; });
    REQUIRE(d.sarsa_rows().size() == 100);
    std::vector<std::size_t> counts(100, 0);
    const std::size_t draws = 1'000'000;
    for (std::size_t done = 0; done < draws; done += 10'000) {
        const auto b = sample_sarsa(d, 10'000, rng);
        for (auto t : b.index) ++counts[t];
    }
    const double p = 0.01;
    const double sigma = std::sqrt(draws * p * (1 - p));
    for (auto c : counts) {
        CHECK(std::abs(double(c) - draws * p) < 5.0 * sigma);
    }
}

TEST_CASE("returns_to_go restarts at every episode boundary") {
    const auto d = line_dataset({3, 2}, {EndKind::terminal, EndKind::terminal}, [](auto, auto) { return 1.0; });
    const Vector g = d.returns_to_go(0.5);
    CHECK(g[0] == doctest::Approx(1.75));
    CHECK(g[2] == doctest::Approx(1.0));
    CHECK(g[3] == doctest::Approx(1.5));
    CHECK(g[4] == doctest::Approx(1.0));
}
