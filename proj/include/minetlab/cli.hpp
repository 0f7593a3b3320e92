#pragma once

// Command-line front end. Exit codes: 0 success, 1 configuration or usage
// error, 2 data error, 3 numeric failure (non-finite loss, gradient check
// outside tolerance).

#include <iosfwd>
#include <string>
#include <vector>

namespace minetlab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main(int argc, char** argv);

}  // namespace minetlab::cli
