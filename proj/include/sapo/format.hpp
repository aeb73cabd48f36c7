#pragma once

#include <string>

namespace sapo {

/// Shortest round-trip decimal form ("%.17g"); "nan"/"inf" spelled out.
std::string format_double(double x);

}  // namespace sapo
