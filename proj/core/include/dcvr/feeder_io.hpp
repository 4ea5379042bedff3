#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "dcvr/network.hpp"

namespace dcvr {

// Feeder text format: '#' comments, sections [feeder], [bus], [branch],
// [inverter] and [boundary], each followed by `key = value` lines. Phase
// vectors are written as three numbers (a b c); impedances as nine r/x pairs
// in row-major phase order. All values per-unit on the feeder bases.

void write_feeder(std::ostream& out, const Feeder& feeder);
std::string feeder_to_string(const Feeder& feeder);
void save_feeder(const std::filesystem::path& path, const Feeder& feeder);

/// Throws ConfigError with a line number on malformed input.
Feeder read_feeder(std::istream& in);
Feeder feeder_from_string(const std::string& text);
Feeder load_feeder(const std::filesystem::path& path);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double value);

}  // namespace dcvr
