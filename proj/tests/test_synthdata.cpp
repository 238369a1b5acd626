#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "dssl/error.hpp"
#include "dssl/synthdata.hpp"

using namespace dssl;

namespace {

double corr(const Tensor& a, std::size_t ca, const Tensor& b, std::size_t cb) {
  const std::size_t n = a.rows();
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a(i, ca);
    mb += b(i, cb);
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a(i, ca) - ma, db = b(i, cb) - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("generate: 90,000-row shapes and split sizes") {
  const SynthDataset ds = generate(90000, 3, Variant::Plain);
  CHECK(ds.x1.rows() == 90000);
  CHECK(ds.x1.cols() == 100);
  CHECK(ds.x2.cols() == 100);
  CHECK(ds.train.size() == 72000);
  CHECK(ds.test.size() == 18000);

  SUBCASE("split is disjoint and exhaustive") {
    std::vector<std::size_t> all = ds.train;
    all.insert(all.end(), ds.test.begin(), ds.test.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < all.size(); ++i) REQUIRE(all[i] == i);
  }
  SUBCASE("cross-modality dependence only through the shared latent") {
    double worst = 0.0;
    for (std::size_t c = 0; c < 100; c += 7)
      for (std::size_t z = 0; z < 50; z += 7) worst = std::max(worst, std::abs(corr(ds.x1, c, ds.latents.zs2, z)));
    CHECK(worst < 0.05);
  }
}

TEST_CASE("generate: latent moments and transform range") {
  const SynthDataset ds = generate(10000, 4, Variant::Plain);
  for (const Tensor* z : {&ds.latents.zs1, &ds.latents.zs2, &ds.latents.zc}) {
    for (std::size_t c = 0; c < kLatentDim; ++c) {
      double m = 0, v = 0;
      for (std::size_t i = 0; i < z->rows(); ++i) m += (*z)(i, c);
      m /= z->rows();
      for (std::size_t i = 0; i < z->rows(); ++i) v += ((*z)(i, c) - m) * ((*z)(i, c) - m);
      v /= z->rows() - 1;
      CHECK(std::abs(m) < 4.0 * std::sqrt(0.5 / z->rows()));
      CHECK(v >= 0.4);
      CHECK(v <= 0.6);
    }
  }
  for (double t : ds.transforms.t1.data()) {
    CHECK(t > -1.0);
    CHECK(t < 1.0);
  }
}

TEST_CASE("generate: observation equals the linear mix of latents") {
  const SynthDataset ds = generate(200, 5, Variant::Plain);
  const std::size_t r = 17, c = 42;
  double s = 0.0;
  for (std::size_t k = 0; k < 50; ++k) s += ds.transforms.t1(c, k) * ds.latents.zs1(r, k);
  for (std::size_t k = 0; k < 50; ++k) s += ds.transforms.t1(c, 50 + k) * ds.latents.zc(r, k);
  CHECK(ds.x1(r, c) == doctest::Approx(s).epsilon(1e-12));
}

TEST_CASE("generate: linearity in the latents") {
  const SynthDataset a = generate(150, 6, Variant::Plain);
  const SynthDataset b = generate(150, 7, Variant::Plain);
  const Tensor& t = a.transforms.t1;
  const Tensor sum = observe(add(a.latents.zs1, b.latents.zs1), add(a.latents.zc, b.latents.zc), t, Variant::Plain);
  const Tensor parts = add(observe(a.latents.zs1, a.latents.zc, t, Variant::Plain),
                           observe(b.latents.zs1, b.latents.zc, t, Variant::Plain));
  for (std::size_t i = 0; i < sum.size(); ++i) CHECK(std::abs(sum[i] - parts[i]) < 1e-12);
}

TEST_CASE("generate: deterministic under a fixed seed") {
  const SynthDataset a = generate(500, 8, Variant::Mixed);
  const SynthDataset b = generate(500, 8, Variant::Mixed);
  CHECK(a.x1 == b.x1);
  CHECK(a.x2 == b.x2);
  CHECK(a.labels.yc == b.labels.yc);
  CHECK(a.train == b.train);
  const SynthDataset c = generate(500, 9, Variant::Mixed);
  CHECK_FALSE(a.x1 == c.x1);
}

TEST_CASE("generate: mixed variant carries the pure shared block verbatim") {
  const SynthDataset ds = generate(300, 10, Variant::Mixed);
  CHECK(ds.transforms.t1.rows() == 85);
  CHECK(ds.x1.cols() == 100);
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t c = 85; c < 100; ++c) {
      REQUIRE(ds.x1(i, c) == ds.x2(i, c));
      REQUIRE(ds.x1(i, c) == ds.latents.zc(i, c - 50));
    }
}

TEST_CASE("generate: n < 100 is a configuration error") {
  CHECK_THROWS_AS(generate(99, 1, Variant::Plain), ConfigError);
  CHECK_THROWS_AS(parse_variant("other"), ConfigError);
}

TEST_CASE("make_labels: exact median balance") {
  for (std::size_t n : {1000u, 1001u}) {
    const SynthDataset ds = generate(n, 11, Variant::Plain);
    for (const auto* y : {&ds.labels.ys1, &ds.labels.ys2, &ds.labels.yc}) {
      const auto ones = static_cast<std::size_t>(std::count(y->begin(), y->end(), 1));
      CHECK(ones == n / 2);
    }
  }
}

TEST_CASE("augment: identity, full dropout and dropout rate") {
  Rng data(12);
  Tensor x(100, 1000);
  for (double& v : x.data()) v = data.normal() + 5.0;
  Rng r1(13);
  CHECK(augment(x, {0.0, 0.0}, r1) == x);
  Rng r2(14);
  for (double v : augment(x, {0.3, 1.0}, r2).data()) REQUIRE(v == 0.0);
  Rng r3(15);
  const Tensor y = augment(x, {0.0, 0.3}, r3);
  const auto zeros = std::count(y.data().begin(), y.data().end(), 0.0);
  const double frac = static_cast<double>(zeros) / 1e5;
  CHECK(frac >= 0.29);
  CHECK(frac <= 0.31);
  Rng r4(16);
  CHECK_THROWS_AS(augment(x, {-1.0, 0.0}, r4), ConfigError);
}

TEST_CASE("augment: mixed variant leaves the pure block untouched") {
  CHECK(augmented_cols(Variant::Plain) == kObsDim);
  CHECK(augmented_cols(Variant::Mixed) == kObsDim - kPureDim);
  const SynthDataset ds = generate(200, 4, Variant::Mixed);
  Rng r(17);
  const Tensor y = augment(ds.x1, {0.5, 0.5}, r, augmented_cols(ds.variant));
  CHECK(slice_cols(y, 85, 100) == slice_cols(ds.x1, 85, 100));
  std::size_t changed = 0;
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t c = 0; c < 85; ++c) changed += y(i, c) != ds.x1(i, c);
  CHECK(changed == 200 * 85);
}

TEST_CASE("dataset save/load round-trips") {
  const auto dir = std::filesystem::temp_directory_path() / "dssl_tests" / "dataset";
  std::filesystem::remove_all(dir);
  const SynthDataset ds = generate(250, 17, Variant::Mixed);
  save_dataset(ds, dir / "d.json");
  const SynthDataset r = load_dataset(dir / "d.json");
  CHECK(r.variant == Variant::Mixed);
  CHECK(r.seed == 17);
  CHECK(r.x1 == ds.x1);
  CHECK(r.x2 == ds.x2);
  CHECK(r.latents.zc == ds.latents.zc);
  CHECK(r.transforms.t2 == ds.transforms.t2);
  CHECK(r.labels.ys2 == ds.labels.ys2);
  CHECK(r.test == ds.test);
}
