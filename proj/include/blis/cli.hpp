#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace blis::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;  // usage or config error
inline constexpr int kExitRuntime = 2;

/// "1,2,5-8" -> {1,2,5,6,7,8}. Throws Error(ConfigError).
std::vector<std::uint64_t> parse_seed_list(std::string_view text);

/// Sorted glob matches; a path without wildcards matches itself if it exists.
std::vector<std::string> expand_glob(const std::string& pattern);

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace blis::cli
