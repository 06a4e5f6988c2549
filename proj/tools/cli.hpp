#pragma once

#include <ostream>
#include <string_view>
#include <vector>

#include "hvsinglet/simulator.hpp"

namespace hv::cli {

inline constexpr int kExitPass = 0;
inline constexpr int kExitFail = 1;
inline constexpr int kExitInconclusive = 2;
inline constexpr int kExitUsage = 64;
inline constexpr int kExitInternal = 70;

/// Entry point of the hvsim tool; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// One setting pair per line, "ax ay az bx by bz" separated by spaces or
/// commas; '#' starts a comment. Throws ModelSpecError naming the line.
std::vector<SettingPair> parse_settings_text(std::string_view text);

}  // namespace hv::cli
