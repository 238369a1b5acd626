#include "dssl/losses.hpp"

#include <cmath>

#include "dssl/error.hpp"
#include "dssl/mlp.hpp"

namespace dssl {

void LossConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
  if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (!(kappa > 0.0)) throw ConfigError("kappa must be > 0");
}

Var info_nce(Var za, Var zb, double tau) {
  if (za.rows() == 0) throw UsageError("info_nce: empty batch");
  if (!za.value().same_shape(zb.value())) throw UsageError("info_nce: za and zb differ in shape");
  Var sim = scale(matmul_nt(za, zb), 1.0 / tau);
  Var pos = diag(sim);
  Var a_to_b = mean_all(logsumexp_rows(sim) - pos);
  Var b_to_a = mean_all(logsumexp_rows(transpose(sim)) - pos);
  return scale(a_to_b + b_to_a, 0.5);
}

Var alignment(Var mu1, Var mu2) { return mean_all(row_dot(mu1, mu2)); }

Var orthogonal_loss(Var zs, Var zc) {
  if (zs.rows() < 2) throw UsageError("orthogonal_loss: needs a batch of at least 2");
  if (zs.rows() != zc.rows()) throw UsageError("orthogonal_loss: batch sizes differ");
  return frobenius_norm(matmul_tn(l2_normalize_cols(zs), l2_normalize_cols(zc)));
}

Step1Terms step1_objective(Var mu1, Var mu2, const LossConfig& cfg, Rng* vmf_rng) {
  Var z1 = mu1;
  Var z2 = mu2;
  if (cfg.vmf_sampling) {
    if (vmf_rng == nullptr) throw UsageError("step1_objective: vmf_sampling needs an rng");
    z1 = vmf_sample(mu1, cfg.kappa, *vmf_rng);
    z2 = vmf_sample(mu2, cfg.kappa, *vmf_rng);
  }
  Step1Terms t;
  t.info_nce = info_nce(z1, z2, cfg.tau);
  t.alignment = alignment(mu1, mu2);
  t.loss = t.info_nce - cfg.beta * t.alignment;
  return t;
}

Step1Terms step1_loss(std::span<const Var> enc1, std::span<const Var> enc2, Var x1, Var x2,
                      const LossConfig& cfg, Rng* vmf_rng) {
  Var mu1 = l2_normalize_rows(mlp_forward(enc1, x1));
  Var mu2 = l2_normalize_rows(mlp_forward(enc2, x2));
  return step1_objective(mu1, mu2, cfg, vmf_rng);
}

Step2Terms step2_loss(const View& a, const View& b, std::span<const Var> spec1,
                      std::span<const Var> spec2, double tau, double lambda) {
  Step2Terms t;
  t.zs1_a = mlp_forward(spec1, concat_cols(a.x1, a.zc1));
  t.zs2_a = mlp_forward(spec2, concat_cols(a.x2, a.zc2));
  t.zs1_b = mlp_forward(spec1, concat_cols(b.x1, b.zc1));
  t.zs2_b = mlp_forward(spec2, concat_cols(b.x2, b.zc2));

  Var joint1 = info_nce(l2_normalize_rows(concat_cols(t.zs1_a, a.zc2)),
                        l2_normalize_rows(concat_cols(t.zs1_b, b.zc2)), tau);
  Var joint2 = info_nce(l2_normalize_rows(concat_cols(t.zs2_a, a.zc1)),
                        l2_normalize_rows(concat_cols(t.zs2_b, b.zc1)), tau);
  t.info_nce = joint1 + joint2;

  Var orth = orthogonal_loss(t.zs1_a, a.zc1) + orthogonal_loss(t.zs2_a, a.zc2) +
             orthogonal_loss(t.zs1_b, b.zc1) + orthogonal_loss(t.zs2_b, b.zc2);
  t.orthogonal = scale(orth, 0.5);
  t.loss = t.info_nce + lambda * t.orthogonal;
  return t;
}

namespace {

// Marsaglia-Tsang; shape < 1 handled with the u^(1/shape) boost.
double sample_gamma(double shape, Rng& rng) {
  if (shape < 1.0) {
    double u = 0.0;
    do {
      u = rng.uniform();
    } while (u == 0.0);
    return sample_gamma(shape + 1.0, rng) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

}  // namespace

double sample_vmf_cosine(double kappa, std::size_t dim, Rng& rng) {
  if (dim < 2) throw UsageError("vmf: dimension must be >= 2");
  const double m1 = static_cast<double>(dim) - 1.0;
  const double b = (-2.0 * kappa + std::sqrt(4.0 * kappa * kappa + m1 * m1)) / m1;
  const double x0 = (1.0 - b) / (1.0 + b);
  const double c = kappa * x0 + m1 * std::log(1.0 - x0 * x0);
  for (;;) {
    const double g1 = sample_gamma(0.5 * m1, rng);
    const double g2 = sample_gamma(0.5 * m1, rng);
    const double z = g1 / (g1 + g2);
    const double w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
    const double u = rng.uniform();
    if (u > 0.0 && kappa * w + m1 * std::log(1.0 - x0 * w) - c >= std::log(u)) return w;
  }
}

Var vmf_sample(Var mu, double kappa, Rng& rng) {
  Graph& g = mu.graph();
  const std::size_t rows = mu.rows();
  const std::size_t dim = mu.cols();
  Tensor w(rows, 1);
  Tensor s(rows, 1);
  Tensor v(rows, dim);
  for (std::size_t r = 0; r < rows; ++r) {
    w[r] = sample_vmf_cosine(kappa, dim, rng);
    s[r] = std::sqrt(std::max(0.0, 1.0 - w[r] * w[r]));
    for (double& e : v.row(r)) e = rng.normal();
  }
  Var vc = g.constant(std::move(v));
  // Tangent direction: v with its component along mu removed.
  Var tangent = l2_normalize_rows(vc - mul_rows(mu, row_dot(vc, mu)));
  return mul_rows(mu, g.constant(std::move(w))) + mul_rows(tangent, g.constant(std::move(s)));
}

}  // namespace dssl
