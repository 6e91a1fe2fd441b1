#pragma once

#include <stdexcept>
#include <string>

namespace xhm {

/// Error categories. Callers that need to react to a specific failure
/// (corrupt weight file vs. truncated file, degenerate explanation, ...)
/// switch on the code instead of parsing the message.
enum class Errc {
  invalid_argument,
  shape_mismatch,
  unsupported,
  not_differentiable,
  detached,
  non_finite,
  bad_magic,
  truncated,
  spec_mismatch,
  count_mismatch,
  io,
  degenerate_explanation,
  degenerate_ensemble,
  undefined_correlation,
  config,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace xhm
