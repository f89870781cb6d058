#pragma once

#include <fmt/core.h>

#include <cstdio>
#include <utility>

namespace dmseg::log
{

enum class Level
{
    quiet,
    info,
    debug,
};

void set_level(Level level);
[[nodiscard]] Level level();

template <typename... Args>
void info(fmt::format_string<Args...> format, Args&&... args)
{
    if (level() >= Level::info)
    {
        fmt::print(stderr, "[dmseg] ");
        fmt::print(stderr, format, std::forward<Args>(args)...);
        fmt::print(stderr, "\n");
    }
}

template <typename... Args>
void debug(fmt::format_string<Args...> format, Args&&... args)
{
    if (level() >= Level::debug)
    {
        fmt::print(stderr, "[dmseg:debug] ");
        fmt::print(stderr, format, std::forward<Args>(args)...);
        fmt::print(stderr, "\n");
    }
}

}  // namespace dmseg::log
