#include "dssl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dssl/error.hpp"
#include "dssl/rng.hpp"

namespace dssl {

namespace {

double evaluate(const LossBuilder& f, const std::vector<Tensor>& params) {
  Graph g;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const Tensor& p : params) leaves.push_back(g.leaf(p, false));
  const double v = f(g, leaves).value().item();
  if (!std::isfinite(v)) throw NumericError("finite_diff_check: loss is not finite");
  return v;
}

}  // namespace

GradCheckResult finite_diff_check(const LossBuilder& f, std::vector<Tensor> params,
                                  const GradCheckOptions& opts) {
  std::vector<Tensor> analytic;
  {
    Graph g;
    std::vector<Var> leaves;
    for (const Tensor& p : params) leaves.push_back(g.leaf(p, true));
    Var loss = f(g, leaves);
    if (!std::isfinite(loss.value().item()))
      throw NumericError("finite_diff_check: loss is not finite");
    g.backward(loss);
    for (const Var& v : leaves) analytic.push_back(v.grad());
  }

  Rng rng = Rng::stream(opts.seed, "gradcheck");
  GradCheckResult result;
  for (std::size_t b = 0; b < params.size(); ++b) {
    std::vector<std::size_t> coords(params[b].size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    rng.shuffle(coords);
    coords.resize(std::min(coords.size(), opts.max_coords_per_block));
    for (std::size_t k : coords) {
      const double orig = params[b][k];
      params[b][k] = orig + opts.h;
      const double up = evaluate(f, params);
      params[b][k] = orig - opts.h;
      const double down = evaluate(f, params);
      params[b][k] = orig;
      const double fd = (up - down) / (2.0 * opts.h);
      const double err = std::abs(analytic[b][k] - fd) / (std::abs(fd) + 1e-8);
      result.max_rel_error = std::max(result.max_rel_error, err);
      ++result.coords_checked;
    }
  }
  return result;
}

}  // namespace dssl
