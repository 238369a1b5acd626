#include "dssl/adam.hpp"

#include <cmath>

#include "dssl/error.hpp"

namespace dssl {

AdamState make_adam_state(std::span<Tensor* const> params, AdamConfig config) {
  AdamState s;
  s.config = config;
  for (const Tensor* p : params) {
    s.first_moment.emplace_back(p->rows(), p->cols());
    s.second_moment.emplace_back(p->rows(), p->cols());
  }
  return s;
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state) {
  std::vector<const Tensor*> ptrs;
  ptrs.reserve(grads.size());
  for (const Tensor& g : grads) ptrs.push_back(&g);
  adam_step(params, ptrs, state);
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
               AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size())
    throw UsageError("adam_step: parameter, gradient and state counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(*grads[i]) || !params[i]->same_shape(state.first_moment[i]))
      throw UsageError("adam_step: shape mismatch at parameter " + std::to_string(i));
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::size_t n = params[i]->size();
    double* __restrict p = params[i]->data().data();
    const double* __restrict g = grads[i]->data().data();
    double* __restrict m = state.first_moment[i].data().data();
    double* __restrict v = state.second_moment[i].data().data();
    for (std::size_t k = 0; k < n; ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p[k] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

}  // namespace dssl
