// End-to-end acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [--cache DIR] [--output FILE] [--only 1,2,...]
//
// --cache keeps trained models between invocations (development only; the
// registered test always trains from scratch).

#include <malloc.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dssl/cli.hpp"
#include "dssl/error.hpp"
#include "dssl/eval.hpp"
#include "dssl/gradcheck.hpp"
#include "dssl/losses.hpp"
#include "dssl/oracle.hpp"
#include "dssl/rng.hpp"
#include "dssl/training.hpp"

using namespace dssl;
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kN = 20000;
constexpr std::uint64_t kDataSeed = 0;
const std::vector<std::uint64_t> kSeeds{0, 1, 2};
const std::vector<double> kBetas{0.0, 0.1, 1.0, 10.0, 100.0};
const std::vector<double> kLambdas{0.0, 0.01, 1.0, 100.0};
constexpr double kMidBeta = 1.0;
constexpr double kCollapseYc = 0.6;

double now() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

class Log {
 public:
  explicit Log(std::optional<fs::path> file) {
    if (file) file_.open(*file);
  }

  void note(const std::string& s) { emit("    " + s); }

  void result(int id, const std::string& name, bool pass, const std::string& detail, double secs,
              bool soft = false) {
    const char* tag = pass ? "PASS" : (soft ? "SOFT-FAIL" : "FAIL");
    emit(fmt("[%s] criterion %d: %s | %s | %.1f s", tag, id, name.c_str(), detail.c_str(), secs));
    if (!pass && !soft) failed_ = true;
  }

  bool failed() const { return failed_; }

 private:
  void emit(const std::string& s) {
    std::cout << s << std::endl;
    if (file_) file_ << s << std::endl;
  }

  std::ofstream file_;
  bool failed_ = false;
};

// Trained models keyed by their settings, optionally persisted in a cache dir.
class Models {
 public:
  explicit Models(std::optional<fs::path> cache) : cache_(std::move(cache)) {
    if (cache_) fs::create_directories(*cache_);
  }

  const SynthDataset& data(Variant v) {
    auto it = data_.find(v);
    if (it == data_.end()) it = data_.emplace(v, generate(kN, kDataSeed, v)).first;
    return it->second;
  }

  const Step1Model& step1(Variant v, std::uint64_t seed, double beta) {
    const std::string key = fmt("step1_%s_s%llu_b%g", std::string(to_string(v)).c_str(),
                                static_cast<unsigned long long>(seed), beta);
    return get(step1_, key, load_step1, save_step1, [&] {
      Step1Config c;
      c.beta = beta;
      c.seed = seed;
      return train_step1(data(v), c);
    });
  }

  const Step2Model& step2(std::uint64_t seed, double beta, double lambda) {
    const std::string key =
        fmt("step2_s%llu_b%g_l%g", static_cast<unsigned long long>(seed), beta, lambda);
    const Step1Model& m1 = step1(Variant::Plain, seed, beta);
    return get(step2_, key, load_step2, save_step2, [&] {
      Step2Config c;
      c.lambda = lambda;
      c.seed = seed;
      return train_step2(data(Variant::Plain), m1, c);
    });
  }

  const JointOptModel& jointopt(std::uint64_t seed) {
    const std::string key = fmt("jointopt_s%llu", static_cast<unsigned long long>(seed));
    return get(joint_, key, load_jointopt, save_jointopt, [&] {
      JointOptConfig c;
      c.a = 1.0;
      c.lambda = 1.0;
      c.seed = seed;
      return train_jointopt(data(Variant::Plain), c);
    });
  }

  bool any_cached() const { return cache_hits_ > 0; }

 private:
  template <class M, class Load, class Save, class Train>
  const M& get(std::map<std::string, M>& store, const std::string& key, Load load, Save save,
               Train train) {
    if (auto it = store.find(key); it != store.end()) return it->second;
    std::optional<fs::path> path;
    if (cache_) path = *cache_ / (key + ".json");
    if (path && fs::exists(*path)) {
      ++cache_hits_;
      return store.emplace(key, load(*path)).first->second;
    }
    const M& m = store.emplace(key, train()).first->second;
    if (path) save(m, *path);
    return m;
  }

  std::optional<fs::path> cache_;
  std::size_t cache_hits_ = 0;
  std::map<Variant, SynthDataset> data_;
  std::map<std::string, Step1Model> step1_;
  std::map<std::string, Step2Model> step2_;
  std::map<std::string, JointOptModel> joint_;
};

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t(r, c);
  for (double& v : t.data()) v = rng.normal();
  return t;
}

std::vector<Tensor> params_of(std::initializer_list<const Mlp*> nets) {
  std::vector<Tensor> out;
  for (const Mlp* m : nets)
    for (const Tensor* p : m->parameters()) out.push_back(*p);
  return out;
}

DiscreteJoint random_full_support(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w(r, c);
  for (double& v : w.data()) v = 0.05 + rng.uniform();
  return DiscreteJoint::normalized(w);
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxx == 0.0 || syy == 0.0 ? 0.0 : sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------

void gradients(Log& log) {
  const double t0 = now();
  double worst = 0.0;
  std::map<std::string, double> per_loss;
  auto record = [&](const std::string& name, const GradCheckResult& r) {
    per_loss[name] = std::max(per_loss[name], r.max_rel_error);
    worst = std::max(worst, r.max_rel_error);
  };
  for (std::size_t b : {2, 8}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng rng(1000 * b + seed);
      const LossBuilder nce = [](Graph&, std::span<const Var> p) {
        return info_nce(l2_normalize_rows(p[0]), l2_normalize_rows(p[1]), 0.1);
      };
      record("info_nce", finite_diff_check(nce, {random_tensor(b, 4, rng), random_tensor(b, 4, rng)},
                                           {.seed = seed}));
      const LossBuilder al = [](Graph&, std::span<const Var> p) {
        return alignment(l2_normalize_rows(p[0]), l2_normalize_rows(p[1]));
      };
      record("alignment", finite_diff_check(al, {random_tensor(b, 4, rng), random_tensor(b, 4, rng)},
                                            {.seed = seed}));
      const LossBuilder orth = [](Graph&, std::span<const Var> p) { return orthogonal_loss(p[0], p[1]); };
      record("orthogonal_loss", finite_diff_check(orth, {random_tensor(b, 3, rng), random_tensor(b, 2, rng)},
                                                  {.seed = seed}));

      const std::vector<std::size_t> d1{6, 8, 8, 4};
      const Mlp e1(d1, rng), e2(d1, rng);
      const Tensor x1 = random_tensor(b, 6, rng), x2 = random_tensor(b, 6, rng);
      LossConfig cfg;
      cfg.beta = 0.7;
      const LossBuilder s1 = [&](Graph& g, std::span<const Var> p) {
        return step1_loss(p.subspan(0, 6), p.subspan(6, 6), g.constant(x1), g.constant(x2), cfg).loss;
      };
      record("step1_loss", finite_diff_check(s1, params_of({&e1, &e2}), {.seed = seed}));

      const Tensor x1a = random_tensor(b, 4, rng), x2a = random_tensor(b, 4, rng);
      const Tensor x1b = random_tensor(b, 4, rng), x2b = random_tensor(b, 4, rng);
      const Tensor c1a = l2_normalize_rows(random_tensor(b, 3, rng));
      const Tensor c2a = l2_normalize_rows(random_tensor(b, 3, rng));
      const Tensor c1b = l2_normalize_rows(random_tensor(b, 3, rng));
      const Tensor c2b = l2_normalize_rows(random_tensor(b, 3, rng));
      const std::vector<std::size_t> d2{7, 6, 2};
      const Mlp sp1(d2, rng), sp2(d2, rng);
      const LossBuilder s2 = [&](Graph& g, std::span<const Var> p) {
        const View a{g.constant(x1a), g.constant(x2a), g.constant(c1a), g.constant(c2a)};
        const View v{g.constant(x1b), g.constant(x2b), g.constant(c1b), g.constant(c2b)};
        return step2_loss(a, v, p.subspan(0, 4), p.subspan(4, 4), 0.1, 2.0).loss;
      };
      record("step2_loss", finite_diff_check(s2, params_of({&sp1, &sp2}), {.seed = seed}));
    }
  }
  const double secs = now() - t0;
  std::string detail;
  for (const auto& [k, v] : per_loss) detail += fmt("%s %.1e, ", k.c_str(), v);
  detail += fmt("max %.2e (< 1e-4), B in {2, 8}, 5 seeds", worst);
  log.result(1, "gradient correctness", worst < 1e-4 && secs < 30.0, detail, secs);
}

void prop1(Log& log) {
  const double t0 = now();
  const std::vector<double> px{0.05, 0.2, 0.1, 0.15, 0.08, 0.12, 0.2, 0.1};
  Tensor p(8, 4, 0.0);
  for (std::size_t i = 0; i < 8; ++i) p(i, i % 4) = px[i];
  const DiscreteJoint j(p);
  const double target = mutual_info(j);
  double worst = 0.0;
  for (double beta : {0.5, 1.0, 5.0}) {
    CebOptions o;
    o.restarts = 20;
    o.seed = 1;
    const CebResult r = ceb_optimize(j, beta, 8, o);
    worst = std::max({worst, std::abs(r.coords.i_z_x1 - target), std::abs(r.coords.i_z_x2 - target)});
  }
  const double secs = now() - t0;
  log.result(2, "CEB reaches MNI on a deterministic forward joint", worst < 1e-3 && secs < 10.0,
             fmt("I(X1;X2) = %.6f, max deviation %.2e nats (< 1e-3)", target, worst), secs);
}

void prop2(Log& log) {
  const double t0 = now();
  std::vector<double> betas;
  for (int k = 0; k < 12; ++k) betas.push_back(std::pow(10.0, -2.0 + 4.0 * k / 11.0));
  const IbCurve c = ib_curve(random_full_support(4, 4, 42), betas, 4);
  double worst_mono = 0.0;
  for (std::size_t k = 1; k < c.points.size(); ++k) {
    worst_mono = std::max(worst_mono, c.points[k].coords.i_z_x1 - c.points[k - 1].coords.i_z_x1);
    worst_mono = std::max(worst_mono, c.points[k].coords.i_z_x2 - c.points[k - 1].coords.i_z_x2);
  }
  const std::vector<double> s = chord_slopes(c.hull);
  double worst_slope = 0.0;
  for (std::size_t k = 1; k < s.size(); ++k) worst_slope = std::max(worst_slope, s[k] - s[k - 1]);
  const double secs = now() - t0;
  log.note(fmt("I(Z;X1) from %.4f to %.4f, I(Z;X2) from %.4f to %.4f over beta 0.01..100",
               c.points.front().coords.i_z_x1, c.points.back().coords.i_z_x1,
               c.points.front().coords.i_z_x2, c.points.back().coords.i_z_x2));
  log.result(3, "IB trade-off on a full-support joint",
             worst_mono <= 1e-6 && worst_slope <= 1e-6 && secs < 30.0,
             fmt("largest increase along beta %.1e, largest hull slope increase %.1e (slack 1e-6)",
                 worst_mono, worst_slope),
             secs);
}

void prop4(Log& log) {
  const double t0 = now();
  const Prop4Report full = verify_prop4(random_full_support(3, 3, 13), 1.0, 3, 100, 1);
  Tensor p(4, 2, 0.0);
  const double px[4]{0.1, 0.2, 0.3, 0.4};
  for (std::size_t i = 0; i < 4; ++i) p(i, i % 2) = px[i];
  const Prop4Report det = verify_prop4(DiscreteJoint(p), 1.0, 4, 100, 1);
  const double det_gap = std::max(std::abs(det.min_gap), std::abs(det.max_gap));
  const double secs = now() - t0;
  const bool ok = full.within_bounds && full.encoders_checked == 100 && det.within_bounds &&
                  det_gap < 1e-6 && secs < 60.0;
  log.result(4, "specific-information bounds", ok,
             fmt("full support: gap in [%.2e, %.2e], delta_c %.4f; deterministic: |gap| <= %.1e",
                 full.min_gap, full.max_gap, full.delta_c, det_gap),
             secs);
}

void or_gate(Log& log) {
  const double t0 = now();
  const DiscreteJoint j(Tensor::from_rows({{0.125, 0.125}, {0.125, 0.625}}));
  const MniVerdict v = mni_check(j);
  const double mi = mutual_info(j);
  log.result(5, "OR-gate fixture",
             v.tag == MniTag::UnattainableFullSupport && std::abs(mi - 0.0511) <= 1e-4,
             fmt("mni_check %s, I(X1;X2) = %.5f nats", std::string(to_string(v.tag)).c_str(), mi),
             now() - t0);
}

struct Acc3 {
  double yc = 0, ys1 = 0, ys2 = 0;
};

void beta_trend(Log& log, Models& models) {
  const double t0 = now();
  const SynthDataset& ds = models.data(Variant::Plain);
  std::vector<Acc3> mean(kBetas.size());
  for (std::size_t b = 0; b < kBetas.size(); ++b) {
    for (std::uint64_t seed : kSeeds) {
      const LabelAccuracies a = probe_all_labels(ds, shared_representation(ds, models.step1(Variant::Plain, seed, kBetas[b])));
      mean[b].yc += a.yc / kSeeds.size();
      mean[b].ys1 += a.ys1 / kSeeds.size();
      mean[b].ys2 += a.ys2 / kSeeds.size();
    }
    log.note(fmt("beta %-5g  acc Yc %.3f  Ys1 %.3f  Ys2 %.3f", kBetas[b], mean[b].yc, mean[b].ys1, mean[b].ys2));
  }
  const double secs = now() - t0;
  std::size_t pre = 0;
  for (std::size_t b = 0; b < kBetas.size(); ++b)
    if (mean[b].yc >= kCollapseYc) pre = b;
  bool ordered = true;
  for (const Acc3& m : mean) ordered = ordered && m.yc > m.ys1 && m.yc > m.ys2;
  const bool above = mean[0].yc > 0.5 && mean[0].ys1 > 0.5 && mean[0].ys2 > 0.5;
  const double d1 = mean[0].ys1 - mean[pre].ys1, d2 = mean[0].ys2 - mean[pre].ys2;
  const bool timed = models.any_cached() || secs < 1200.0;
  log.result(6, "shared accuracy trend over beta", above && ordered && d1 >= 0.05 && d2 >= 0.05 && timed,
             fmt("beta=0 all > 0.5: %s; largest pre-collapse beta %g (acc Yc >= %.1f): Ys1 drop %.3f, "
                 "Ys2 drop %.3f (>= 0.05); Yc above both at every beta: %s%s",
                 above ? "yes" : "no", kBetas[pre], kCollapseYc, d1, d2, ordered ? "yes" : "no",
                 models.any_cached() ? "; runtime not measured (cache)" : ""),
             secs);
}

void lambda_trend(Log& log, Models& models) {
  const double t0 = now();
  const SynthDataset& ds = models.data(Variant::Plain);
  std::vector<double> lambda_rank, yc;
  bool above = true;
  std::vector<LabelAccuracies> at_one;
  for (std::size_t l = 0; l < kLambdas.size(); ++l) {
    Acc3 m;
    for (std::uint64_t seed : kSeeds) {
      const Step1Model& m1 = models.step1(Variant::Plain, seed, kMidBeta);
      const Step2Model& m2 = models.step2(seed, kMidBeta, kLambdas[l]);
      const LabelAccuracies a = probe_all_labels(ds, encode_specific(m2, m1, ds.x1, 1));
      m.yc += a.yc / kSeeds.size();
      m.ys1 += a.ys1 / kSeeds.size();
      if (kLambdas[l] == 1.0) at_one.push_back(a);
    }
    log.note(fmt("lambda %-5g  Zs1 acc Yc %.3f  Ys1 %.3f", kLambdas[l], m.yc, m.ys1));
    lambda_rank.push_back(static_cast<double>(l));
    yc.push_back(m.yc);
    above = above && m.ys1 > m.yc;
  }
  const double rho = spearman(lambda_rank, yc);
  const double secs = now() - t0;
  log.result(7, "specific accuracy trend over lambda", rho <= 0.0 && above,
             fmt("beta %g, Spearman(lambda, acc Yc) = %.2f (<= 0); acc Ys1 above acc Yc at every lambda: %s",
                 kMidBeta, rho, above ? "yes" : "no"),
             secs);

  const double t1 = now();
  std::size_t not_dominated = 0;
  std::string pts;
  for (std::size_t s = 0; s < kSeeds.size(); ++s) {
    const JointOptModel& jm = models.jointopt(kSeeds[s]);
    const LabelAccuracies j = probe_all_labels(ds, encode_specific(jm.specific, jm.shared, ds.x1, 1));
    const LabelAccuracies& d = at_one[s];
    // Less Yc and more Ys1 in the specific code is better.
    const bool dominated = j.yc <= d.yc && j.ys1 >= d.ys1 && (j.yc < d.yc || j.ys1 > d.ys1);
    if (!dominated) ++not_dominated;
    pts += fmt(" seed %llu (%.3f, %.3f) vs (%.3f, %.3f);", static_cast<unsigned long long>(kSeeds[s]), d.yc,
               d.ys1, j.yc, j.ys1);
  }
  log.result(7, "two-step vs JointOpt at a = 1, lambda = 1 (soft)", not_dominated >= 2,
             fmt("(acc Yc, acc Ys1) two-step vs JointOpt:%s not dominated in %zu of 3", pts.c_str(),
                 not_dominated),
             now() - t1, true);
}

void mixed_ratio(Log& log, Models& models) {
  const double t0 = now();
  std::size_t rises = 0;
  for (std::uint64_t seed : kSeeds) {
    auto ratio = [&](double beta) {
      const Step1Model& m = models.step1(Variant::Mixed, seed, beta);
      return 0.5 * (weight_energy_ratio(m.enc_c1) + weight_energy_ratio(m.enc_c2));
    };
    const double lo = ratio(0.1), hi = ratio(10.0);
    if (hi > lo) ++rises;
    log.note(fmt("seed %llu  pure/mixed weight ratio: beta 0.1 -> %.2f, beta 10 -> %.2f",
                 static_cast<unsigned long long>(seed), lo, hi));
  }
  log.result(8, "mixed entanglement weight ratio", rises >= 2,
             fmt("ratio larger at beta 10 than at beta 0.1 in %zu of 3 seeds (>= 2)", rises), now() - t0);
}

void retrieval_check(Log& log, Models& models) {
  const double t0 = now();
  const SynthDataset& ds = models.data(Variant::Plain);
  const Step1Model& m = models.step1(Variant::Plain, kSeeds[0], 0.1);
  const Tensor q = gather_rows(encode_shared(m, ds.x1, 1), ds.test);
  const Tensor k = gather_rows(encode_shared(m, ds.x2, 2), ds.test);
  const RetrievalResult r = retrieval(q, k);
  const RetrievalResult self = retrieval(q, q);
  const double baseline = 1.0 / static_cast<double>(r.gallery_size);
  log.result(9, "retrieval sanity",
             r.top(1) >= 20.0 * baseline && self.top(1) == 1.0 && self.mrr == 1.0,
             fmt("gallery %zu, top-1 %.4f vs 20x baseline %.4f, MRR %.4f; identical reps top-1 %.3f MRR %.3f",
                 r.gallery_size, r.top(1), 20.0 * baseline, r.mrr, self.top(1), self.mrr),
             now() - t0);
}

void rg_check(Log& log, Models& models) {
  const double t0 = now();
  const SynthDataset& ds = models.data(Variant::Plain);
  const Tensor xtr = gather_rows(ds.x1, ds.train), xte = gather_rows(ds.x1, ds.test);
  double worst = std::numeric_limits<double>::infinity();
  for (std::uint64_t seed : kSeeds) {
    const Step1Model& m1 = models.step1(Variant::Plain, seed, kMidBeta);
    const Tensor zc = encode_shared(m1, ds.x1, 1);
    for (double lambda : kLambdas) {
      const Tensor zs = encode_specific(models.step2(seed, kMidBeta, lambda), m1, ds.x1, 1);
      DecoderConfig dc;
      dc.seed = seed;
      const RgResult r = reconstruction_gain(gather_rows(zc, ds.train), gather_rows(zs, ds.train), xtr,
                                             gather_rows(zc, ds.test), gather_rows(zs, ds.test), xte, dc);
      worst = std::min(worst, r.r2_concat - std::max(r.r2_shared, r.r2_specific));
      log.note(fmt("seed %llu lambda %-5g  R2 shared %.3f  specific %.3f  concat %.3f  RG %.3f",
                   static_cast<unsigned long long>(seed), lambda, r.r2_shared, r.r2_specific, r.r2_concat, r.rg));
    }
  }
  const Step1Model& m1 = models.step1(Variant::Plain, kSeeds[0], kMidBeta);
  const Tensor zc = encode_shared(m1, ds.x1, 1);
  Rng rng(77);
  const Tensor noise = random_tensor(ds.size(), zc.cols(), rng);
  const RgResult fixture = reconstruction_gain(gather_rows(zc, ds.train), gather_rows(noise, ds.train), xtr,
                                               gather_rows(zc, ds.test), gather_rows(noise, ds.test), xte);
  log.result(10, "reconstruction gain properties", worst >= -0.02 && std::abs(fixture.rg) <= 0.02,
             fmt("min R2(concat) - max individual %.4f over 12 runs (>= -0.02); noise-specific fixture RG %.4f",
                 worst, fixture.rg),
             now() - t0);
}

void determinism(Log& log, Models& models) {
  const double t0 = now();
  const SynthDataset& ds = models.data(Variant::Plain);
  std::vector<std::string> bad;

  Step1Config c1;
  c1.beta = 0.1;
  c1.seed = kSeeds[0];
  const Step1Model& ref1 = models.step1(Variant::Plain, kSeeds[0], 0.1);
  const Step1Model again1 = train_step1(ds, c1);
  if (checksum(again1) != checksum(ref1) || again1.loss_trace != ref1.loss_trace) bad.push_back("step1 rerun");

  const Step1Model& mid = models.step1(Variant::Plain, kSeeds[0], kMidBeta);
  const Step2Model& ref2 = models.step2(kSeeds[0], kMidBeta, 0.01);
  Step2Config c2;
  c2.lambda = 0.01;
  c2.seed = kSeeds[0];
  const Step2Model again2 = train_step2(ds, mid, c2);
  if (checksum(again2.enc_s1) != checksum(ref2.enc_s1) || checksum(again2.enc_s2) != checksum(ref2.enc_s2) ||
      again2.loss_trace != ref2.loss_trace)
    bad.push_back("step2 rerun");

  const fs::path dir = fs::temp_directory_path() / "dssl_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  save_step1(ref1, dir / "step1.json");
  save_step2(ref2, dir / "step2.json");
  const JointOptModel& refj = models.jointopt(kSeeds[0]);
  save_jointopt(refj, dir / "jointopt.json");
  const Step1Model r1 = load_step1(dir / "step1.json");
  const Step2Model r2 = load_step2(dir / "step2.json");
  const JointOptModel rj = load_jointopt(dir / "jointopt.json");
  const Tensor x = gather_rows(ds.x1, ds.test);
  auto same = [](const Tensor& a, const Tensor& b) { return std::ranges::equal(a.data(), b.data()); };
  if (checksum(r1) != checksum(ref1) || !same(encode_shared(r1, x, 1), encode_shared(ref1, x, 1)))
    bad.push_back("step1 round-trip");
  if (!same(encode_specific(r2, mid, x, 1), encode_specific(ref2, mid, x, 1))) bad.push_back("step2 round-trip");
  if (checksum(rj.shared) != checksum(refj.shared) ||
      !same(encode_specific(rj.specific, rj.shared, x, 1), encode_specific(refj.specific, refj.shared, x, 1)))
    bad.push_back("jointopt round-trip");

  // Whole command-line pipeline twice with the same resolved config.
  const std::vector<std::string> tags{"synth", "train-step1", "train-step2", "eval-probe"};
  std::vector<std::string> reports[2];
  const std::string out = (dir / "cli").string();
  for (int rep = 0; rep < 2; ++rep) {
    fs::remove_all(out);
    const std::vector<std::vector<std::string>> cmds{
        {"synth", "--n", "1000", "--out", out},
        {"train", "step1", "--out", out, "-o", "step1.epochs=3", "-o", "step1.beta=0.1"},
        {"train", "step2", "--out", out, "-o", "step2.epochs=3", "-o", "step2.lambda=1"},
        {"eval", "probe", "--out", out}};
    std::ostringstream so, se;
    for (const auto& c : cmds)
      if (cli::run(c, so, se) != 0) bad.push_back("cli '" + c[0] + "' failed: " + se.str());
    for (const std::string& tag : tags) {
      std::ifstream in(fs::path(out) / (tag + ".report.json"), std::ios::binary);
      reports[rep].push_back(std::string(std::istreambuf_iterator<char>(in), {}));
    }
  }
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (reports[0][i].empty()) bad.push_back("cli " + tags[i] + " report missing");
    else if (reports[0][i] != reports[1][i]) bad.push_back("cli " + tags[i] + " report differs");
  }
  fs::remove_all(dir);

  std::string detail = "step1/step2 reruns bit-identical, step1/step2/jointopt round-trips bit-exact, "
                       "CLI synth/train/probe reports byte-identical across two runs";
  if (!bad.empty()) {
    detail = "mismatch:";
    for (const auto& b : bad) detail += " " + b + ";";
  }
  log.result(11, "determinism and persistence", bad.empty(), detail, now() - t0);
}

}  // namespace

int main(int argc, char** argv) {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);

  CLI::App app{"Acceptance criteria, one PASS/FAIL line each", "acceptance"};
  std::string cache, output;
  std::vector<int> only;
  app.add_option("--cache", cache, "directory for trained models reused across invocations");
  app.add_option("--output", output, "also write the result lines to this file");
  app.add_option("--only", only, "criteria to run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::set<int> want(only.begin(), only.end());
  auto on = [&](int id) { return want.empty() || want.contains(id); };

  Log log(output.empty() ? std::nullopt : std::optional<fs::path>(output));
  Models models(cache.empty() ? std::nullopt : std::optional<fs::path>(cache));
  const std::vector<std::pair<int, std::function<void()>>> steps{
      {1, [&] { gradients(log); }},           {2, [&] { prop1(log); }},
      {3, [&] { prop2(log); }},               {4, [&] { prop4(log); }},
      {5, [&] { or_gate(log); }},             {6, [&] { beta_trend(log, models); }},
      {7, [&] { lambda_trend(log, models); }}, {8, [&] { mixed_ratio(log, models); }},
      {9, [&] { retrieval_check(log, models); }}, {10, [&] { rg_check(log, models); }},
      {11, [&] { determinism(log, models); }}};
  for (const auto& [id, fn] : steps) {
    if (!on(id)) continue;
    try {
      fn();
    } catch (const std::exception& e) {
      log.result(id, "raised an exception", false, e.what(), 0.0);
    }
  }
  return log.failed() ? 1 : 0;
}
