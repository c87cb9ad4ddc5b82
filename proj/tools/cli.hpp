#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace ecomail::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

// args excludes the program name. JSON results go to `out`, human-readable
// notes and errors to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// "4MB", "512KiB", "1000" -> bytes.
std::uint64_t parse_size(const std::string& s);

}  // namespace ecomail::cli
