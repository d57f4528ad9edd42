#pragma once

#include <stdexcept>
#include <string>

namespace dpl {

// Malformed or truncated files, unwritable paths.
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape mismatches and violated call preconditions.
struct shape_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

}  // namespace dpl
