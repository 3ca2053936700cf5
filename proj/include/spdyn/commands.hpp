#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace spdyn::cli {

// Runs one invocation; args excludes the program name. Returns the exit code:
// 0 success, 1 estimation failure, 2 input or configuration failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string sha256_file(const std::filesystem::path& path);

}  // namespace spdyn::cli
