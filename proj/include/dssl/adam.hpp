#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dssl/tensor.hpp"

namespace dssl {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;
};

/// Zero moments shaped like `params`.
AdamState make_adam_state(std::span<Tensor* const> params, AdamConfig config);

/// One bias-corrected Adam update applied in place. Throws UsageError when
/// shapes disagree with the state.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state);
/// Same update reading gradients in place.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
               AdamState& state);

}  // namespace dssl
