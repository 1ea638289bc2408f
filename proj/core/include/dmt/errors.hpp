#pragma once

#include <stdexcept>
#include <string>

namespace dmt {

// Invalid configuration or input artifacts (bad keys, missing files,
// malformed corpora). The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values produced during training or evaluation (divergence,
// undefined statistics). The CLI maps this to exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dmt
