#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "dssl/error.hpp"
#include "dssl/eval.hpp"

using namespace dssl;

namespace {

Tensor gaussian(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t(r, c);
  for (double& v : t.data()) v = rng.normal();
  return t;
}

std::vector<int> coin_flips(std::size_t n, Rng& rng) {
  std::vector<int> y(n);
  for (int& v : y) v = rng.uniform() < 0.5 ? 1 : 0;
  return y;
}

// Rank by explicit comparison against every gallery row.
std::vector<std::size_t> brute_ranks(const Tensor& q, const Tensor& k) {
  std::vector<std::size_t> out(q.rows());
  for (std::size_t i = 0; i < q.rows(); ++i) {
    auto sim = [&](std::size_t j) {
      double d = 0.0;
      for (std::size_t c = 0; c < q.cols(); ++c) d += q(i, c) * k(j, c);
      return d;
    };
    const double own = sim(i);
    std::size_t rank = 1;
    for (std::size_t j = 0; j < k.rows(); ++j)
      if (sim(j) > own || (j < i && sim(j) == own)) ++rank;
    out[i] = rank;
  }
  return out;
}

Tensor random_rotation(std::size_t d, Rng& rng) {
  // Gram-Schmidt on a Gaussian matrix.
  Tensor m = gaussian(d, d, rng);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += m(i, c) * m(j, c);
      for (std::size_t c = 0; c < d; ++c) m(i, c) -= dot * m(j, c);
    }
    double n = 0.0;
    for (std::size_t c = 0; c < d; ++c) n += m(i, c) * m(i, c);
    for (std::size_t c = 0; c < d; ++c) m(i, c) /= std::sqrt(n);
  }
  return m;
}

SweepConfig tiny_sweep() {
  SweepConfig s;
  s.step1.latent_dim = 4;
  s.step1.hidden = 16;
  s.step1.epochs = 2;
  s.step1.batch_size = 100;
  s.step2.latent_dim = 4;
  s.step2.hidden = 16;
  s.step2.epochs = 1;
  s.step2.batch_size = 100;
  s.betas = {0.0, 1.0};
  s.lambdas = {0.0, 1.0, 10.0};
  s.seeds = {1, 2};
  s.probe.steps = 200;
  return s;
}

}  // namespace

TEST_CASE("linear_probe: separated 1-D clusters are classified perfectly") {
  Tensor ztr(200, 1), zte(100, 1);
  std::vector<int> ytr(200), yte(100);
  for (std::size_t i = 0; i < 200; ++i) {
    ytr[i] = static_cast<int>(i % 2);
    ztr(i, 0) = ytr[i] ? 3.0 + 0.01 * i : -3.0 - 0.01 * i;
  }
  for (std::size_t i = 0; i < 100; ++i) {
    yte[i] = static_cast<int>((i / 3) % 2);
    zte(i, 0) = yte[i] ? 2.5 : -2.5;
  }
  const ProbeResult r = linear_probe(ztr, ytr, zte, yte, {}, "sep");
  CHECK(r.train_accuracy == 1.0);
  CHECK(r.test_accuracy == 1.0);
  CHECK(r.label == "sep");
  CHECK(r.weight_norm > 0.0);
}

TEST_CASE("linear_probe: labels independent of features stay near chance") {
  Rng rng(4);
  const Tensor ztr = gaussian(5000, 10, rng), zte = gaussian(5000, 10, rng);
  const ProbeResult r = linear_probe(ztr, coin_flips(5000, rng), zte, coin_flips(5000, rng));
  CHECK(r.test_accuracy >= 0.47);
  CHECK(r.test_accuracy <= 0.53);
}

TEST_CASE("linear_probe: constant features give the majority-class rate") {
  const Tensor ztr(100, 3, 2.0), zte(50, 3, 2.0);
  std::vector<int> ytr(100, 0), yte(50, 0);
  for (std::size_t i = 0; i < 70; ++i) ytr[i] = 1;
  for (std::size_t i = 0; i < 30; ++i) yte[i] = 1;
  CHECK(linear_probe(ztr, ytr, zte, yte).test_accuracy == doctest::Approx(0.6));
}

TEST_CASE("linear_probe: degenerate and mismatched inputs") {
  const Tensor z(10, 2, 1.0);
  CHECK_THROWS_AS(linear_probe(z, std::vector<int>(10, 1), z, std::vector<int>(10, 0)), DegenerateInputError);
  std::vector<int> y(10, 0);
  y[0] = 1;
  CHECK_THROWS_AS(linear_probe(z, std::vector<int>(9, 0), z, y), UsageError);
  CHECK_THROWS_AS(linear_probe(z, y, Tensor(10, 3, 1.0), y), UsageError);
}

TEST_CASE("linear_probe: invertible linear maps of the features barely change accuracy") {
  Rng rng(8);
  Tensor ztr = gaussian(2000, 6, rng), zte = gaussian(1000, 6, rng);
  auto label = [](const Tensor& z) {
    std::vector<int> y(z.rows());
    for (std::size_t i = 0; i < z.rows(); ++i) y[i] = z(i, 0) - 0.5 * z(i, 3) + 0.3 * z(i, 5) > 0.1 ? 1 : 0;
    return y;
  };
  Tensor a = random_rotation(6, rng);
  for (std::size_t c = 0; c < 6; ++c) a(0, c) *= 3.0;
  const double base = linear_probe(ztr, label(ztr), zte, label(zte)).test_accuracy;
  const double mapped = linear_probe(matmul(ztr, a), label(ztr), matmul(zte, a), label(zte)).test_accuracy;
  CHECK(std::abs(base - mapped) <= 0.02);
}

TEST_CASE("retrieval: identical representations are retrieved perfectly") {
  Rng rng(1);
  const Tensor z = l2_normalize_rows(gaussian(300, 16, rng));
  const RetrievalResult r = retrieval(z, z);
  CHECK(r.top(1) == 1.0);
  CHECK(r.mrr == 1.0);
  CHECK(r.gallery_size == 300);
}

TEST_CASE("retrieval: hand case with partner ranks 1, 2, 3") {
  const Tensor zq = Tensor::from_rows({{1.0, 0.0, 0.0}, {0.8, 0.6, 0.0}, {0.6, 0.64, 0.48}});
  const Tensor zk = Tensor::identity(3);
  CHECK(partner_ranks(zq, zk) == std::vector<std::size_t>{1, 2, 3});
  const RetrievalResult r = retrieval(zq, zk, {1, 2, 3});
  CHECK(r.top(1) == doctest::Approx(1.0 / 3.0));
  CHECK(r.top(2) == doctest::Approx(2.0 / 3.0));
  CHECK(r.top(3) == 1.0);
  CHECK(r.mrr == doctest::Approx(0.6111).epsilon(1e-4));
}

TEST_CASE("retrieval: ties go to the lower gallery index") {
  const Tensor z(4, 2, 1.0 / std::sqrt(2.0));
  CHECK(partner_ranks(z, z) == std::vector<std::size_t>{1, 2, 3, 4});
}

TEST_CASE("retrieval: random vectors follow the N/M baseline") {
  Rng rng(12);
  const Tensor q = l2_normalize_rows(gaussian(1000, 32, rng));
  const Tensor k = l2_normalize_rows(gaussian(1000, 32, rng));
  const RetrievalResult r = retrieval(q, k);
  CHECK(std::abs(r.top(10) - 0.01) <= 0.007);
  for (std::size_t i = 1; i < r.ns.size(); ++i) CHECK(r.top_n[i] >= r.top_n[i - 1]);
  CHECK(r.mrr >= r.top(1));
  CHECK(r.mrr > 0.0);
  CHECK(r.mrr <= 1.0);
}

TEST_CASE("partner_ranks: block ranking matches brute force across block edges") {
  Rng rng(2);
  const Tensor q = l2_normalize_rows(gaussian(1100, 3, rng));
  Tensor k = l2_normalize_rows(add(q, scale(gaussian(1100, 3, rng), 0.7)));
  // Exact duplicates exercise the tie rule.
  for (std::size_t c = 0; c < 3; ++c) k(700, c) = k(20, c);
  CHECK(partner_ranks(q, k) == brute_ranks(q, k));
}

TEST_CASE("retrieval: invariant to a common rotation; size mismatch rejected") {
  Rng rng(3);
  const Tensor q = l2_normalize_rows(gaussian(400, 8, rng));
  const Tensor k = l2_normalize_rows(add(q, scale(gaussian(400, 8, rng), 0.8)));
  const Tensor rot = random_rotation(8, rng);
  const RetrievalResult a = retrieval(q, k), b = retrieval(matmul(q, rot), matmul(k, rot));
  CHECK(a.top_n == b.top_n);
  CHECK(a.mrr == doctest::Approx(b.mrr).epsilon(1e-12));
  CHECK_THROWS_AS(retrieval(q, Tensor(399, 8, 0.1)), UsageError);
  CHECK_THROWS_AS(a.top(7), UsageError);
}

TEST_CASE("r_squared: perfect, mean and constant-column cases") {
  const Tensor t = Tensor::from_rows({{1.0, 5.0, 2.0}, {2.0, 5.0, 4.0}, {3.0, 5.0, 9.0}});
  std::size_t excluded = 0;
  CHECK(r_squared(t, t, &excluded) == 1.0);
  CHECK(excluded == 1);
  const Tensor mean = Tensor::from_rows({{2.0, 0.0, 5.0}, {2.0, 0.0, 5.0}, {2.0, 0.0, 5.0}});
  CHECK(std::abs(r_squared(mean, t)) < 1e-15);
}

TEST_CASE("reconstruction_gain: cheating input and a noise-only specific latent") {
  Rng rng(6);
  const std::size_t ntr = 2000, nte = 500, d = 8;
  const Tensor xtr = gaussian(ntr, d, rng), xte = gaussian(nte, d, rng);
  const Tensor ntr_noise = gaussian(ntr, 4, rng), nte_noise = gaussian(nte, 4, rng);
  DecoderConfig dc;
  dc.seed = 3;
  const RgResult r = reconstruction_gain(xtr, ntr_noise, xtr, xte, nte_noise, xte, dc);
  CHECK(r.r2_shared >= 0.99);
  CHECK(std::abs(r.r2_concat - r.r2_shared) <= 0.02);
  CHECK(std::abs(r.rg) <= 0.02);
  CHECK(r.r2_concat >= std::max(r.r2_shared, r.r2_specific) - 0.02);
  CHECK(r.r2_specific < 0.05);
}

TEST_CASE("reconstruction_gain: complementary halves gain over either alone") {
  Rng rng(7);
  const Tensor xtr = gaussian(2000, 6, rng), xte = gaussian(500, 6, rng);
  DecoderConfig dc;
  dc.seed = 4;
  const RgResult r = reconstruction_gain(slice_cols(xtr, 0, 3), slice_cols(xtr, 3, 6), xtr,
                                         slice_cols(xte, 0, 3), slice_cols(xte, 3, 6), xte, dc);
  CHECK(r.r2_shared == doctest::Approx(0.5).epsilon(0.06));
  CHECK(r.r2_specific == doctest::Approx(0.5).epsilon(0.06));
  CHECK(r.rg > 0.4);
}

TEST_CASE("weight_energy_ratio: hand-built first layer") {
  Tensor w(100, 3, 1.0);
  for (std::size_t i = 85; i < 100; ++i)
    for (std::size_t c = 0; c < 3; ++c) w(i, c) = 2.0;
  std::vector<DenseLayer> layers{{w, Tensor(1, 3, 0.0)}, {Tensor(3, 2, 0.5), Tensor(1, 2, 0.0)}};
  const Mlp m(std::move(layers));
  CHECK(weight_energy_ratio(m) == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(weight_energy_ratio(m, 50) == doctest::Approx((15.0 * 4 + 35.0) / 50.0).epsilon(1e-14));
}

TEST_CASE("sweep: row counts, CSV schema, thread independence, single-run agreement") {
  const SynthDataset ds = generate(500, 9, Variant::Plain);
  SweepConfig cfg = tiny_sweep();
  const std::vector<FrontierPoint> pts = sweep(ds, cfg);
  const std::size_t nb = cfg.betas.size(), nl = cfg.lambdas.size(), ns = cfg.seeds.size();
  CHECK(pts.size() == ns * 3 * (nb + 2 * nb * nl));
  std::size_t step1_rows = 0;
  for (const FrontierPoint& p : pts) {
    CHECK(p.accuracy >= 0.0);
    CHECK(p.accuracy <= 1.0);
    if (p.rep == "zc") {
      ++step1_rows;
      CHECK(std::isnan(p.lambda));
    }
  }
  CHECK(step1_rows == ns * nb * 3);

  const std::string csv = frontier_csv(pts);
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  CHECK(line == "variant,seed,beta,lambda,rep,label,accuracy");
  std::size_t rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == pts.size());
  CHECK(csv.find("\nplain,1,0,,zc,yc,") != std::string::npos);

  cfg.threads = 3;
  CHECK(frontier_csv(sweep(ds, cfg)) == csv);

  Step1Config single = cfg.step1;
  single.seed = 2;
  single.beta = 0.0;
  const LabelAccuracies acc = probe_all_labels(ds, shared_representation(ds, train_step1(ds, single)), cfg.probe);
  const auto row = std::find_if(pts.begin(), pts.end(), [](const FrontierPoint& p) {
    return p.seed == 2 && p.beta == 0.0 && p.rep == "zc" && p.label == "ys1";
  });
  REQUIRE(row != pts.end());
  CHECK(std::abs(row->accuracy - acc.ys1) <= 1e-12);
}

TEST_CASE("sweep: configuration checks") {
  const SynthDataset ds = generate(200, 1, Variant::Plain);
  SweepConfig cfg = tiny_sweep();
  cfg.betas.clear();
  CHECK_THROWS_AS(sweep(ds, cfg), ConfigError);
  cfg = tiny_sweep();
  cfg.lambdas = {-1.0};
  CHECK_THROWS_AS(sweep(ds, cfg), ConfigError);
}
