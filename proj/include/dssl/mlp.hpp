#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dssl/autograd.hpp"
#include "dssl/rng.hpp"
#include "dssl/tensor.hpp"

namespace dssl {

struct DenseLayer {
  Tensor weight;  // d_in x d_out
  Tensor bias;    // 1 x d_out
};

/// Fully connected network with rectifiers between layers and a linear output.
class Mlp {
 public:
  Mlp() = default;
  /// dims = {d_in, hidden..., d_out}. Weights are Glorot-uniform in
  /// +-sqrt(6 / (d_in + d_out)), biases zero.
  Mlp(std::span<const std::size_t> dims, Rng& init);
  /// Takes ownership of explicit layers; throws ConfigError if they do not chain.
  explicit Mlp(std::vector<DenseLayer> layers);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t depth() const noexcept { return layers_.size(); }

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }

  /// weight0, bias0, weight1, bias1, ...
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;

 private:
  std::vector<DenseLayer> layers_;
};

/// Graph-free forward pass. Throws ConfigError on an input width mismatch.
Tensor mlp_forward(const Mlp& m, const Tensor& x);

/// Copies the parameters of `m` into `g` as leaves, in parameters() order.
std::vector<Var> bind_parameters(Graph& g, const Mlp& m, bool trainable);

/// Graph forward pass over parameters previously bound with bind_parameters.
Var mlp_forward(std::span<const Var> params, Var x);

}  // namespace dssl
