#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dssl/mlp.hpp"
#include "dssl/synthdata.hpp"
#include "dssl/tensor.hpp"
#include "dssl/training.hpp"

namespace dssl {

struct ProbeConfig {
  double reg = 1e-4;
  std::size_t steps = 2000;
  double lr = 0.5;
};

struct ProbeResult {
  std::string label;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double weight_norm = 0.0;
  ProbeConfig config;
};

/// L2-regularized logistic regression fitted by full-batch gradient descent on
/// features standardized with train statistics (constant columns become 0).
/// Prediction is 1 when the fitted probability exceeds 0.5. Throws
/// DegenerateInputError for single-class training labels, UsageError for
/// mismatched sizes.
ProbeResult linear_probe(const Tensor& z_train, std::span<const int> y_train, const Tensor& z_test,
                         std::span<const int> y_test, const ProbeConfig& cfg = {},
                         std::string label = {});

struct RetrievalResult {
  std::vector<std::size_t> ns;
  std::vector<double> top_n;  // aligned with ns
  double mrr = 0.0;
  std::size_t gallery_size = 0;

  /// top-N accuracy for an N present in `ns`.
  double top(std::size_t n) const;
};

/// Row i of `zq` is the query whose partner is row i of `zk`. Gallery rows are
/// ranked by cosine similarity, ties going to the lower index.
RetrievalResult retrieval(const Tensor& zq, const Tensor& zk,
                          std::vector<std::size_t> ns = {1, 5, 10, 20, 30});

/// 1-based rank of the true partner of every query.
std::vector<std::size_t> partner_ranks(const Tensor& zq, const Tensor& zk);

struct DecoderConfig {
  std::size_t hidden = 256;
  std::size_t epochs = 40;
  std::size_t batch_size = 256;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct RgResult {
  double r2_shared = 0.0;
  double r2_specific = 0.0;
  double r2_concat = 0.0;
  double rg = 0.0;  // r2_concat - max(r2_shared, r2_specific)
  std::size_t excluded_columns = 0;
};

/// Mean over target columns of 1 - SSE/SST. Columns with zero variance are
/// skipped and counted in `excluded`.
double r_squared(const Tensor& pred, const Tensor& target, std::size_t* excluded = nullptr);

/// Trains a 2-layer MLP decoder (in -> hidden -> out, Adam on MSE over
/// standardized inputs and targets) and returns test-split predictions in the
/// original target scale.
Tensor fit_decoder_predict(const Tensor& z_train, const Tensor& x_train, const Tensor& z_test,
                           const DecoderConfig& cfg);

/// Three decoders with identical budgets: shared only, specific only, both.
RgResult reconstruction_gain(const Tensor& shared_train, const Tensor& specific_train,
                             const Tensor& x_train, const Tensor& shared_test,
                             const Tensor& specific_test, const Tensor& x_test,
                             const DecoderConfig& cfg = {});

/// Mean first-layer input energy (row sums of W∘W) over the trailing
/// `pure_dims` inputs divided by the mean over the leading ones.
double weight_energy_ratio(const Mlp& encoder, std::size_t pure_dims = kPureDim);

/// Probe accuracies of one representation on all three labels.
struct LabelAccuracies {
  double yc = 0.0, ys1 = 0.0, ys2 = 0.0;
};

LabelAccuracies probe_all_labels(const SynthDataset& ds, const Tensor& z,
                                 const ProbeConfig& cfg = {});

/// [encode_shared(X1), encode_shared(X2)] over all rows.
Tensor shared_representation(const SynthDataset& ds, const Step1Model& m);

struct SweepConfig {
  Step1Config step1;
  Step2Config step2;
  std::vector<double> betas;
  std::vector<double> lambdas;  // empty: step 1 only
  std::vector<std::uint64_t> seeds;
  ProbeConfig probe;
  std::size_t threads = 1;

  void validate() const;
};

struct FrontierPoint {
  Variant variant = Variant::Plain;
  std::uint64_t seed = 0;
  double beta = 0.0;
  double lambda = std::numeric_limits<double>::quiet_NaN();  // NaN for step-1 rows
  std::string rep;    // zc | zs1 | zs2
  std::string label;  // yc | ys1 | ys2
  double accuracy = 0.0;
};

/// For each (seed, beta): step 1 and probes of [Zc1, Zc2]. For each
/// (seed, beta, lambda): step 2 on that step-1 model and probes of Zs1, Zs2.
/// Grid points run on `threads` workers; output order does not depend on it.
std::vector<FrontierPoint> sweep(const SynthDataset& ds, const SweepConfig& cfg);

/// Header `variant,seed,beta,lambda,rep,label,accuracy`; NaN lambda is empty.
std::string frontier_csv(std::span<const FrontierPoint> points);

nlohmann::json to_json(const ProbeResult& r);
nlohmann::json to_json(const RetrievalResult& r);
nlohmann::json to_json(const RgResult& r);

}  // namespace dssl
