#include "dssl/mlp.hpp"

#include <cmath>
#include <string>

#include "dssl/error.hpp"

namespace dssl {

Mlp::Mlp(std::span<const std::size_t> dims, Rng& init) {
  if (dims.size() < 2) throw ConfigError("Mlp: need at least input and output dimensions");
  for (std::size_t d : dims)
    if (d == 0) throw ConfigError("Mlp: zero-width layer");
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t din = dims[l];
    const std::size_t dout = dims[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(din + dout));
    DenseLayer layer{Tensor(din, dout), Tensor(1, dout)};
    for (double& w : layer.weight.data()) w = init.uniform_open(-limit, limit);
    layers_.push_back(std::move(layer));
  }
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ConfigError("Mlp: no layers");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    if (L.bias.rows() != 1 || L.bias.cols() != L.weight.cols())
      throw ConfigError("Mlp: bias shape does not match layer " + std::to_string(l));
    if (l > 0 && layers_[l - 1].weight.cols() != L.weight.rows())
      throw ConfigError("Mlp: layer " + std::to_string(l) + " does not chain");
  }
}

std::size_t Mlp::input_dim() const { return layers_.empty() ? 0 : layers_.front().weight.rows(); }
std::size_t Mlp::output_dim() const { return layers_.empty() ? 0 : layers_.back().weight.cols(); }

std::vector<Tensor*> Mlp::parameters() {
  std::vector<Tensor*> out;
  for (auto& L : layers_) {
    out.push_back(&L.weight);
    out.push_back(&L.bias);
  }
  return out;
}

std::vector<const Tensor*> Mlp::parameters() const {
  std::vector<const Tensor*> out;
  for (const auto& L : layers_) {
    out.push_back(&L.weight);
    out.push_back(&L.bias);
  }
  return out;
}

Tensor mlp_forward(const Mlp& m, const Tensor& x) {
  if (m.depth() == 0) throw ConfigError("mlp_forward: empty network");
  if (x.cols() != m.input_dim()) {
    throw ConfigError("mlp_forward: input has " + std::to_string(x.cols()) +
                      " columns, network expects " + std::to_string(m.input_dim()));
  }
  Tensor h = x;
  const auto& layers = m.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    h = add_row_bias(matmul(h, layers[l].weight), layers[l].bias);
    if (l + 1 < layers.size()) h = relu(h);
  }
  return h;
}

std::vector<Var> bind_parameters(Graph& g, const Mlp& m, bool trainable) {
  std::vector<Var> out;
  for (const Tensor* p : m.parameters()) out.push_back(g.leaf(*p, trainable));
  return out;
}

Var mlp_forward(std::span<const Var> params, Var x) {
  if (params.empty() || params.size() % 2 != 0)
    throw ConfigError("mlp_forward: parameter list must hold weight/bias pairs");
  if (x.cols() != params[0].rows()) {
    throw ConfigError("mlp_forward: input has " + std::to_string(x.cols()) +
                      " columns, network expects " + std::to_string(params[0].rows()));
  }
  const std::size_t depth = params.size() / 2;
  Var h = x;
  for (std::size_t l = 0; l < depth; ++l) {
    h = add_row_bias(matmul(h, params[2 * l]), params[2 * l + 1]);
    if (l + 1 < depth) h = relu(h);
  }
  return h;
}

}  // namespace dssl
