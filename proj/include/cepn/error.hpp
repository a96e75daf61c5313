#pragma once

#include <stdexcept>
#include <string>

namespace cepn {

// Base class for everything thrown by this library.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor/layer contract violations (dimension or extent mismatch).
struct shape_error : error {
  using error::error;
};

// Bad configuration: unknown keys, out-of-range values, invalid variants.
struct config_error : error {
  using error::error;
};

// Dataset and file problems: missing files, corrupt headers, bad labels.
struct data_error : error {
  using error::error;
};

// Numerical failures: singular information matrix, undefined metrics,
// divergence during training.
struct numeric_error : error {
  using error::error;
};

// Not a failure: a minibatch cannot contribute to the active loss (e.g. the
// survival term with zero events) and should be skipped by the caller.
struct skip_batch : error {
  using error::error;
};

}  // namespace cepn
