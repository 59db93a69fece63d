#include <cstdarg>
#include <vector>

#include "acceptance.hpp"

namespace yoeo::acceptance {

config::RunConfig desk_config(const envs::Environment& env, std::uint64_t seed) {
    config::RunConfig c;
    c.env = env.name();
    c.gamma = env.gamma();
    c.seed = seed;
    c.value_members = 1;
    c.value_hidden = 32;
    c.feature_dim = 32;
    c.value_steps = 5000;
    c.critic_members = 5;
    c.critic_hidden = 32;
    c.critic_steps = 3000;
    c.actor_hidden = 32;
    return c;
}

std::string format(const char* fmt, ...) {
    va_list args;
    va_start(args, fmt);
    va_list copy;
    va_copy(copy, args);
    const int n = std::vsnprintf(nullptr, 0, fmt, copy);
    va_end(copy);
    std::vector<char> buf(static_cast<std::size_t>(n) + 1);
    std::vsnprintf(buf.data(), buf.size(), fmt, args);
    va_end(args);
    return std::string(buf.data(), static_cast<std::size_t>(n));
}

}  // namespace yoeo::acceptance
