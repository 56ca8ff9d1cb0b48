#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace aircal {

using Complex = std::complex<double>;
using CVec = std::vector<Complex>;
using RVec = std::vector<double>;

/// Bad inputs: mismatched shapes, out-of-range parameters, malformed configs.
struct validation_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// File-level problems: missing files, bad magic, truncated payloads.
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numerical breakdown: non-finite values, unsolvable systems.
struct numerical_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw validation_error(msg);
}

} // namespace aircal
