#pragma once

#include <string>

namespace cfl {

/// Shortest decimal text that round-trips to exactly `value`.
std::string format_number(double value);

}  // namespace cfl
