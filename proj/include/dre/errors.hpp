#pragma once

#include <stdexcept>
#include <string>

namespace dre {

// Base for everything this library throws on purpose.
struct error : std::runtime_error {
  explicit error(const std::string& what) : std::runtime_error(what) {}
};

// Violated call-site contract: bad shapes, out-of-domain arguments, tape misuse.
struct precondition_error : error {
  explicit precondition_error(const std::string& what) : error(what) {}
};

// A value that must be finite is NaN/Inf (exp overflow in a loss, exploding
// gradients). The trainer maps this to a divergence stop, everything else
// treats it as fatal.
struct non_finite_error : error {
  explicit non_finite_error(const std::string& what) : error(what) {}
};

// Unusable user configuration (CLI exit code 2).
struct config_error : error {
  explicit config_error(const std::string& what) : error(what) {}
};

// File system / serialization failure (CLI exit code 3).
struct io_error : error {
  explicit io_error(const std::string& what) : error(what) {}
};

}  // namespace dre
