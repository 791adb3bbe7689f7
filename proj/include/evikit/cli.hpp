#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>

namespace evikit::cli {

inline constexpr std::string_view kVersion = "0.1.0";

// Runs the evikit command line. args[0] is the program name. Returns the
// process exit code: 0 on success, 1 on data or configuration errors, 2 on
// usage errors.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace evikit::cli
