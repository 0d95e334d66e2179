#pragma once

#include <iosfwd>
#include <string>

#include "otplug/core/geometry.hpp"

namespace otplug {

/// Points from a CSV file, one per row, uniform weights. Blank lines and
/// lines starting with '#' are skipped; a first row that does not parse as
/// numbers is taken as a header. Throws ConfigError on ragged or
/// unreadable input.
WeightedCloud read_cloud_csv(const std::string& path, Domain domain);

/// Entry point of otplug_cli. Subcommands: w2, map, ci, rates, coverage,
/// stability. Returns 0 on success, 2 on usage or configuration errors,
/// 3 on numerical failures.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace otplug
