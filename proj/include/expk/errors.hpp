#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace expk {

// Base class for all library errors.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A pivot fell below the singularity threshold during factorization.
struct singular_matrix_error : error {
  using error::error;
};

// An operation produced non-finite values.
struct overflow_error : error {
  using error::error;
};

// A starting vector required to be nonzero had zero norm.
struct zero_vector_error : error {
  using error::error;
};

struct dimension_error : error {
  using error::error;
};

// Unknown method/variant name or an invalid scheme request.
struct scheme_error : error {
  using error::error;
};

// An iterative process hit its size or iteration cap before meeting tolerance.
struct convergence_error : error {
  using error::error;
};

// The time integration produced a non-finite (or otherwise invalid) state.
// Carries the 0-based index of the offending step.
struct instability_error : error {
  std::size_t step;
  instability_error(const std::string& msg, std::size_t step_index)
      : error(msg), step(step_index) {}
};

// Malformed configuration or serialized input.
struct config_error : error {
  using error::error;
};

// A series argument violated a required normalization (e.g. empty-tree
// coefficient must be 1 for composition with f).
struct normalization_error : error {
  using error::error;
};

// A right-hand side was evaluated at a physically invalid state (e.g.
// non-positive fluid height). The driver rewraps this as instability_error.
struct invalid_state_error : error {
  using error::error;
};

}  // namespace expk
