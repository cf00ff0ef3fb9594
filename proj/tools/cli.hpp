#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ovr::cli {

inline constexpr int kReportSchemaVersion = 1;

enum ExitCode : int { ok = 0, usage = 2, data_error = 3, numeric_failure = 4 };

// Runs one "ovr" invocation; args excludes the program name. Reports and
// diagnostics go to out / err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args);

}  // namespace ovr::cli
