#pragma once

#include <cstdint>
#include <string>

#include "yoeo/config/run_config.hpp"
#include "yoeo/data/dataset.hpp"
#include "yoeo/envs/environment.hpp"

namespace yoeo::acceptance {

struct Outcome {
    bool pass = false;
    std::string detail;
};

Outcome gradient_suite();           // 1
Outcome dp_mc_cross_check();        // 2
Outcome value_convergence();        // 3
Outcome theorem_conditions();       // 4
Outcome behavior_greedy_recovery(); // 5
Outcome ablation_orderings();       // 6
Outcome calibration_contrast();     // 7
Outcome cli_determinism();          // 8
Outcome sarsa_target_convergence(); // 9

/// Desk-scale run: narrow networks, one value member, short schedules.
config::RunConfig desk_config(const envs::Environment& env, std::uint64_t seed);

/// printf-style formatting into a std::string.
std::string format(const char* fmt, ...);

}  // namespace yoeo::acceptance
