#pragma once

#include <span>

#include "dssl/autograd.hpp"
#include "dssl/rng.hpp"

namespace dssl {

struct LossConfig {
  double tau = 0.1;
  double beta = 0.0;
  double lambda = 0.0;
  /// vMF concentration. Only read when vmf_sampling is on; in the default
  /// deterministic limit it is absorbed into beta.
  double kappa = 64.0;
  bool vmf_sampling = false;

  void validate() const;
};

/// Symmetrized in-batch InfoNCE over unit rows: row i of `za` and `zb` is the
/// positive pair, the other rows of the opposite side are negatives. Averaged
/// over rows and both retrieval directions. Throws UsageError for an empty batch.
Var info_nce(Var za, Var zb, double tau);

/// Mean over rows of mu1_i . mu2_i.
Var alignment(Var mu1, Var mu2);

/// Frobenius norm of the d_s x d_c matrix of cosine similarities between
/// latent dimensions (columns) across the batch. Throws UsageError for B < 2.
Var orthogonal_loss(Var zs, Var zc);

struct Step1Terms {
  Var loss;       // info_nce - beta * alignment (minimized)
  Var info_nce;
  Var alignment;
};

/// Step-1 objective from unit-normalized shared codes. With vmf_sampling on,
/// InfoNCE sees vMF(mu, kappa) draws from `vmf_rng` while alignment stays on mu.
Step1Terms step1_objective(Var mu1, Var mu2, const LossConfig& cfg, Rng* vmf_rng = nullptr);

/// Encodes both modalities with the given shared encoders, normalizes and
/// evaluates step1_objective.
Step1Terms step1_loss(std::span<const Var> enc1, std::span<const Var> enc2, Var x1, Var x2,
                      const LossConfig& cfg, Rng* vmf_rng = nullptr);

/// One augmented view: observations and their unit shared codes.
struct View {
  Var x1, x2;
  Var zc1, zc2;
};

struct Step2Terms {
  Var loss;        // info_nce + lambda * orthogonal (minimized)
  Var info_nce;    // summed over both modalities
  Var orthogonal;  // 1/2 * sum over views and modalities
  Var zs1_a, zs2_a, zs1_b, zs2_b;
};

/// Step-2 objective. The specific encoder of modality i reads
/// concat(x^i, zc^i); its output is concatenated with the other modality's
/// shared code, normalized as one vector, and contrasted across the two views.
Step2Terms step2_loss(const View& a, const View& b, std::span<const Var> spec1,
                      std::span<const Var> spec2, double tau, double lambda);

/// Draws one vMF(mu_i, kappa) sample per row (Wood's rejection scheme for the
/// mean-direction component). Differentiable with respect to `mu`.
Var vmf_sample(Var mu, double kappa, Rng& rng);

/// Wood's sampler for w = mu . z under vMF(mu, kappa) on the sphere in R^dim.
double sample_vmf_cosine(double kappa, std::size_t dim, Rng& rng);

}  // namespace dssl
