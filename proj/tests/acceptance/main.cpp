#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <exception>
#include <vector>

#include "acceptance.hpp"

using namespace yoeo::acceptance;

namespace {

struct Entry {
    int id;
    const char* name;
    Outcome (*run)();
};

const std::vector<Entry>& entries() {
    static const std::vector<Entry> list = {
        {1, "gradient suite", gradient_suite},
        {2, "DP/MC oracle cross-check", dp_mc_cross_check},
        {3, "stage-1 value convergence", value_convergence},
        {4, "theorem conditions", theorem_conditions},
        {5, "greedy behavioral policy recovery", behavior_greedy_recovery},
        {6, "ablation orderings", ablation_orderings},
        {7, "calibration contrast", calibration_contrast},
        {8, "CLI determinism", cli_determinism},
        {9, "SARSA-target convergence", sarsa_target_convergence},
    };
    return list;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria; one pass/fail line per criterion"};
    std::vector<int> selected;
    app.add_option("--criterion", selected, "Criteria to run (default: all)")->check(CLI::Range(1, 9));
    CLI11_PARSE(app, argc, argv);

    bool all_pass = true;
    for (const auto& e : entries()) {
        if (!selected.empty() && std::find(selected.begin(), selected.end(), e.id) == selected.end()) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = e.run();
        } catch (const std::exception& ex) {
            outcome = {false, std::string("error: ") + ex.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("criterion %d %s: %s [%.1f s] %s\n", e.id, outcome.pass ? "PASS" : "FAIL", e.name, seconds,
                    outcome.detail.c_str());
        std::fflush(stdout);
        all_pass = all_pass && outcome.pass;
    }
    return all_pass ? 0 : 1;
}
