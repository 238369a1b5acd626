#include "dssl/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dssl/bundle.hpp"
#include "dssl/error.hpp"

namespace dssl {

namespace {

Tensor gaussian(std::size_t rows, std::size_t cols, double variance, Rng& rng) {
  Tensor t(rows, cols);
  const double sd = std::sqrt(variance);
  for (double& v : t.data()) v = sd * rng.normal();
  return t;
}

Tensor uniform_transform(std::size_t dim, Rng& rng) {
  Tensor t(dim, dim);
  for (double& v : t.data()) v = rng.uniform_open(-1.0, 1.0);
  return t;
}

std::vector<int> median_split(const Tensor& z, Rng& rng) {
  std::vector<double> w(z.cols());
  double norm = 0.0;
  for (double& v : w) {
    v = rng.normal();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (double& v : w) v /= norm;

  std::vector<double> score(z.rows());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    score[r] = std::inner_product(row.begin(), row.end(), w.begin(), 0.0);
  }
  std::vector<double> sorted = score;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const double median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);

  std::vector<int> y(z.rows());
  for (std::size_t r = 0; r < z.rows(); ++r) y[r] = score[r] > median ? 1 : 0;
  return y;
}

Tensor labels_to_tensor(const std::vector<int>& y) {
  Tensor t(y.size(), 1);
  for (std::size_t i = 0; i < y.size(); ++i) t[i] = y[i];
  return t;
}

std::vector<int> tensor_to_labels(const Tensor& t) {
  std::vector<int> y(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) y[i] = static_cast<int>(t[i]);
  return y;
}

Tensor indices_to_tensor(const std::vector<std::size_t>& idx) {
  Tensor t(idx.size(), 1);
  for (std::size_t i = 0; i < idx.size(); ++i) t[i] = static_cast<double>(idx[i]);
  return t;
}

std::vector<std::size_t> tensor_to_indices(const Tensor& t) {
  std::vector<std::size_t> idx(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) idx[i] = static_cast<std::size_t>(t[i]);
  return idx;
}

}  // namespace

std::string_view to_string(Variant v) { return v == Variant::Plain ? "plain" : "mixed"; }

Variant parse_variant(std::string_view s) {
  if (s == "plain") return Variant::Plain;
  if (s == "mixed") return Variant::Mixed;
  throw ConfigError("unknown variant '" + std::string(s) + "' (expected plain|mixed)");
}

void AugmentConfig::validate() const {
  if (!(noise_sigma >= 0.0)) throw ConfigError("augment: noise_sigma must be >= 0");
  if (!(dropout_rate >= 0.0 && dropout_rate <= 1.0))
    throw ConfigError("augment: dropout_rate must lie in [0, 1]");
}

Tensor observe(const Tensor& zs, const Tensor& zc, const Tensor& t, Variant variant) {
  if (variant == Variant::Plain) return matmul_nt(concat_cols(zs, zc), t);
  const Tensor mixed = matmul_nt(concat_cols(zs, slice_cols(zc, 0, kMixedSharedDim)), t);
  return concat_cols(mixed, slice_cols(zc, kMixedSharedDim, zc.cols()));
}

Labels make_labels(const TrueLatents& latents, std::uint64_t seed) {
  Rng r1 = Rng::stream(seed, "labels.ys1");
  Rng r2 = Rng::stream(seed, "labels.ys2");
  Rng rc = Rng::stream(seed, "labels.yc");
  return Labels{median_split(latents.zs1, r1), median_split(latents.zs2, r2),
                median_split(latents.zc, rc)};
}

SynthDataset generate(std::size_t n, std::uint64_t seed, Variant variant) {
  if (n < 100) throw ConfigError("generate: n must be at least 100, got " + std::to_string(n));
  SynthDataset ds;
  ds.variant = variant;
  ds.seed = seed;

  Rng rs1 = Rng::stream(seed, "latents.zs1");
  Rng rs2 = Rng::stream(seed, "latents.zs2");
  Rng rc = Rng::stream(seed, "latents.zc");
  ds.latents.zs1 = gaussian(n, kLatentDim, kLatentVariance, rs1);
  ds.latents.zs2 = gaussian(n, kLatentDim, kLatentVariance, rs2);
  ds.latents.zc = gaussian(n, kLatentDim, kLatentVariance, rc);

  const std::size_t mix_dim = variant == Variant::Plain ? kObsDim : kLatentDim + kMixedSharedDim;
  Rng rt1 = Rng::stream(seed, "transforms.t1");
  Rng rt2 = Rng::stream(seed, "transforms.t2");
  ds.transforms.t1 = uniform_transform(mix_dim, rt1);
  ds.transforms.t2 = uniform_transform(mix_dim, rt2);

  ds.x1 = observe(ds.latents.zs1, ds.latents.zc, ds.transforms.t1, variant);
  ds.x2 = observe(ds.latents.zs2, ds.latents.zc, ds.transforms.t2, variant);
  ds.labels = make_labels(ds.latents, seed);

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rsplit = Rng::stream(seed, "split");
  rsplit.shuffle(perm);
  const std::size_t n_train = (n * 4) / 5;
  ds.train.assign(perm.begin(), perm.begin() + static_cast<long>(n_train));
  ds.test.assign(perm.begin() + static_cast<long>(n_train), perm.end());
  std::sort(ds.train.begin(), ds.train.end());
  std::sort(ds.test.begin(), ds.test.end());
  return ds;
}

Tensor augment(const Tensor& x, const AugmentConfig& cfg, Rng& rng, std::size_t cols) {
  cfg.validate();
  Tensor out = x;
  const std::size_t w = std::min(cols, x.cols());
  if (cfg.noise_sigma > 0.0)
    for (std::size_t i = 0; i < out.rows(); ++i)
      for (std::size_t c = 0; c < w; ++c) out(i, c) += cfg.noise_sigma * rng.normal();
  if (cfg.dropout_rate > 0.0)
    for (std::size_t i = 0; i < out.rows(); ++i)
      for (std::size_t c = 0; c < w; ++c)
        if (rng.uniform() < cfg.dropout_rate) out(i, c) = 0.0;
  return out;
}

std::size_t augmented_cols(Variant variant) {
  return variant == Variant::Plain ? kObsDim : kObsDim - kPureDim;
}

void save_dataset(const SynthDataset& ds, const std::filesystem::path& manifest_path) {
  Bundle b;
  b.kind = "dataset";
  b.meta = {{"variant", std::string(to_string(ds.variant))},
            {"seed", ds.seed},
            {"n", ds.size()}};
  b.tensors = {{"x1", ds.x1},
               {"x2", ds.x2},
               {"zs1", ds.latents.zs1},
               {"zs2", ds.latents.zs2},
               {"zc", ds.latents.zc},
               {"t1", ds.transforms.t1},
               {"t2", ds.transforms.t2},
               {"ys1", labels_to_tensor(ds.labels.ys1)},
               {"ys2", labels_to_tensor(ds.labels.ys2)},
               {"yc", labels_to_tensor(ds.labels.yc)},
               {"train", indices_to_tensor(ds.train)},
               {"test", indices_to_tensor(ds.test)}};
  write_bundle(manifest_path, b);
}

SynthDataset load_dataset(const std::filesystem::path& manifest_path) {
  const Bundle b = read_bundle(manifest_path);
  if (b.kind != "dataset")
    throw ConfigError(manifest_path.string() + " is a '" + b.kind + "' bundle, not a dataset");
  SynthDataset ds;
  ds.variant = parse_variant(b.meta.at("variant").get<std::string>());
  ds.seed = b.meta.at("seed").get<std::uint64_t>();
  ds.x1 = b.get("x1");
  ds.x2 = b.get("x2");
  ds.latents = {b.get("zs1"), b.get("zs2"), b.get("zc")};
  ds.transforms = {b.get("t1"), b.get("t2")};
  ds.labels = {tensor_to_labels(b.get("ys1")), tensor_to_labels(b.get("ys2")),
               tensor_to_labels(b.get("yc"))};
  ds.train = tensor_to_indices(b.get("train"));
  ds.test = tensor_to_indices(b.get("test"));
  return ds;
}

}  // namespace dssl
