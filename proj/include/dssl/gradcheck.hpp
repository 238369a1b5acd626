#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dssl/autograd.hpp"
#include "dssl/tensor.hpp"

namespace dssl {

/// Builds a scalar loss from leaves holding the current parameter values.
/// Must be deterministic: any randomness has to come from a fixed seed.
using LossBuilder = std::function<Var(Graph&, std::span<const Var>)>;

struct GradCheckOptions {
  double h = 1e-5;
  std::size_t max_coords_per_block = 200;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
};

/// Compares backward() against central differences on a random sample of at
/// most `max_coords_per_block` coordinates per parameter tensor. The error of
/// one coordinate is |analytic - fd| / (|fd| + 1e-8). Throws NumericError if
/// the loss is not finite.
GradCheckResult finite_diff_check(const LossBuilder& f, std::vector<Tensor> params,
                                  const GradCheckOptions& opts = {});

}  // namespace dssl
