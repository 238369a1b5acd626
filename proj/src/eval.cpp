#include "dssl/eval.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <mutex>
#include <sstream>
#include <thread>

#include "dssl/adam.hpp"
#include "dssl/autograd.hpp"
#include "dssl/bundle.hpp"
#include "dssl/error.hpp"

namespace dssl {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

Eigen::Map<const RowMat> view(const Tensor& t) {
  return {t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

struct Standardizer {
  Tensor mean, inv_sd;  // 1 x d; inv_sd = 0 for constant columns

  static Standardizer fit(const Tensor& x) {
    Standardizer s{Tensor(1, x.cols()), Tensor(1, x.cols())};
    const double n = static_cast<double>(x.rows());
    for (std::size_t c = 0; c < x.cols(); ++c) {
      double m = 0.0;
      for (std::size_t r = 0; r < x.rows(); ++r) m += x(r, c);
      m /= n;
      double v = 0.0;
      for (std::size_t r = 0; r < x.rows(); ++r) v += (x(r, c) - m) * (x(r, c) - m);
      const double sd = std::sqrt(v / n);
      s.mean[c] = m;
      s.inv_sd[c] = sd > 1e-12 ? 1.0 / sd : 0.0;
    }
    return s;
  }

  Tensor apply(const Tensor& x) const {
    Tensor out = x;
    for (std::size_t r = 0; r < out.rows(); ++r) {
      auto row = out.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] = (row[c] - mean[c]) * inv_sd[c];
    }
    return out;
  }
};

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double accuracy(const Eigen::Map<const RowMat>& x, const Vec& w, double b, std::span<const int> y) {
  if (y.empty()) return 0.0;
  const Vec logits = x * w;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const int pred = logits[static_cast<Eigen::Index>(i)] + b > 0.0 ? 1 : 0;
    hits += pred == y[i] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(y.size());
}

const char* const kLabelNames[] = {"yc", "ys1", "ys2"};

std::string csv_real(double v) { return std::isnan(v) ? std::string() : format_real(v); }

}  // namespace

ProbeResult linear_probe(const Tensor& z_train, std::span<const int> y_train, const Tensor& z_test,
                         std::span<const int> y_test, const ProbeConfig& cfg, std::string label) {
  if (z_train.rows() != y_train.size() || z_test.rows() != y_test.size())
    throw UsageError("linear_probe: feature and label counts differ");
  if (z_train.cols() != z_test.cols()) throw UsageError("linear_probe: train/test widths differ");
  if (z_train.rows() == 0) throw DegenerateInputError("linear_probe: empty training set");
  bool has0 = false, has1 = false;
  for (int v : y_train) {
    if (v != 0 && v != 1) throw UsageError("linear_probe: labels must be 0 or 1");
    has0 |= v == 0;
    has1 |= v == 1;
  }
  if (!(has0 && has1)) throw DegenerateInputError("linear_probe: training labels have a single class");

  const Standardizer st = Standardizer::fit(z_train);
  const Tensor xtr_t = st.apply(z_train);
  const Tensor xte_t = st.apply(z_test);
  const auto xtr = view(xtr_t);
  const auto xte = view(xte_t);
  const Eigen::Index n = xtr.rows();
  Vec y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = y_train[static_cast<std::size_t>(i)];

  Vec w = Vec::Zero(xtr.cols());
  double b = 0.0;
  Vec resid(n);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const Vec logits = xtr * w;
    for (Eigen::Index i = 0; i < n; ++i) resid[i] = sigmoid(logits[i] + b) - y[i];
    const Vec gw = xtr.transpose() * resid / static_cast<double>(n) + cfg.reg * w;
    const double gb = resid.mean();
    w -= cfg.lr * gw;
    b -= cfg.lr * gb;
  }

  ProbeResult r;
  r.label = std::move(label);
  r.config = cfg;
  r.weight_norm = w.norm();
  r.train_accuracy = accuracy(xtr, w, b, y_train);
  r.test_accuracy = accuracy(xte, w, b, y_test);
  return r;
}

std::vector<std::size_t> partner_ranks(const Tensor& zq, const Tensor& zk) {
  if (zq.rows() != zk.rows()) throw UsageError("retrieval: query and gallery counts differ");
  if (zq.cols() != zk.cols()) throw UsageError("retrieval: query and gallery widths differ");
  const Tensor q = l2_normalize_rows(zq);
  const Tensor k = l2_normalize_rows(zk);
  const std::size_t m = q.rows();
  std::vector<std::size_t> ranks(m);
  constexpr std::size_t kBlock = 512;
  for (std::size_t start = 0; start < m; start += kBlock) {
    const std::size_t end = std::min(m, start + kBlock);
    RowMat s = view(q).middleRows(static_cast<Eigen::Index>(start),
                                  static_cast<Eigen::Index>(end - start)) *
               view(k).transpose();
    for (std::size_t i = start; i < end; ++i) {
      const auto row = s.row(static_cast<Eigen::Index>(i - start));
      const double own = row[static_cast<Eigen::Index>(i)];
      std::size_t rank = 1;
      for (std::size_t j = 0; j < m; ++j) {
        const double v = row[static_cast<Eigen::Index>(j)];
        if (v > own || (v == own && j < i)) ++rank;
      }
      ranks[i] = rank;
    }
  }
  return ranks;
}

RetrievalResult retrieval(const Tensor& zq, const Tensor& zk, std::vector<std::size_t> ns) {
  const auto ranks = partner_ranks(zq, zk);
  RetrievalResult r;
  r.ns = std::move(ns);
  r.gallery_size = ranks.size();
  r.top_n.assign(r.ns.size(), 0.0);
  if (ranks.empty()) return r;
  const double m = static_cast<double>(ranks.size());
  for (std::size_t rank : ranks) {
    r.mrr += 1.0 / static_cast<double>(rank);
    for (std::size_t t = 0; t < r.ns.size(); ++t)
      if (rank <= r.ns[t]) r.top_n[t] += 1.0;
  }
  r.mrr /= m;
  for (double& v : r.top_n) v /= m;
  return r;
}

double RetrievalResult::top(std::size_t n) const {
  for (std::size_t i = 0; i < ns.size(); ++i)
    if (ns[i] == n) return top_n[i];
  throw UsageError("RetrievalResult::top: N=" + std::to_string(n) + " was not evaluated");
}

double r_squared(const Tensor& pred, const Tensor& target, std::size_t* excluded) {
  if (!pred.same_shape(target)) throw UsageError("r_squared: shape mismatch");
  double total = 0.0;
  std::size_t used = 0, skipped = 0;
  const double n = static_cast<double>(target.rows());
  for (std::size_t c = 0; c < target.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < target.rows(); ++r) mean += target(r, c);
    mean /= n;
    double sse = 0.0, sst = 0.0;
    for (std::size_t r = 0; r < target.rows(); ++r) {
      const double e = target(r, c) - pred(r, c);
      const double d = target(r, c) - mean;
      sse += e * e;
      sst += d * d;
    }
    if (!(sst > 0.0)) {
      ++skipped;
      continue;
    }
    total += 1.0 - sse / sst;
    ++used;
  }
  if (excluded != nullptr) *excluded = skipped;
  if (used == 0) throw DegenerateInputError("r_squared: every target column is constant");
  return total / static_cast<double>(used);
}

Tensor fit_decoder_predict(const Tensor& z_train, const Tensor& x_train, const Tensor& z_test,
                           const DecoderConfig& cfg) {
  if (z_train.rows() != x_train.rows()) throw UsageError("decoder: input and target counts differ");
  if (z_train.rows() < 2) throw DegenerateInputError("decoder: need at least 2 training rows");
  const Standardizer sz = Standardizer::fit(z_train);
  const Standardizer sx = Standardizer::fit(x_train);
  const Tensor ztr = sz.apply(z_train);
  const Tensor xtr = sx.apply(x_train);

  Rng init = Rng::stream(cfg.seed, "decoder.init");
  const std::vector<std::size_t> dims{z_train.cols(), cfg.hidden, x_train.cols()};
  Mlp dec(dims, init);
  auto params = dec.parameters();
  AdamState adam = make_adam_state(params, AdamConfig{.lr = cfg.lr});

  std::vector<std::size_t> order(ztr.rows());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle = Rng::stream(cfg.seed, "decoder.shuffle", {epoch});
    shuffle.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      Graph g;
      const auto p = bind_parameters(g, dec, true);
      const Var pred = mlp_forward(p, g.constant(gather_rows(ztr, idx)));
      const Var loss = mean_all(square(pred - g.constant(gather_rows(xtr, idx))));
      if (!std::isfinite(loss.value().item())) throw NumericError("decoder diverged");
      g.backward(loss);
      std::vector<const Tensor*> grads;
      for (const Var& v : p) grads.push_back(&v.grad());
      adam_step(params, grads, adam);
    }
  }

  Tensor pred = mlp_forward(dec, sz.apply(z_test));
  for (std::size_t r = 0; r < pred.rows(); ++r) {
    auto row = pred.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      const double sd = sx.inv_sd[c] > 0.0 ? 1.0 / sx.inv_sd[c] : 0.0;
      row[c] = row[c] * sd + sx.mean[c];
    }
  }
  return pred;
}

RgResult reconstruction_gain(const Tensor& shared_train, const Tensor& specific_train,
                             const Tensor& x_train, const Tensor& shared_test,
                             const Tensor& specific_test, const Tensor& x_test,
                             const DecoderConfig& cfg) {
  RgResult r;
  std::size_t excl = 0;
  r.r2_shared = r_squared(fit_decoder_predict(shared_train, x_train, shared_test, cfg), x_test, &excl);
  r.r2_specific = r_squared(fit_decoder_predict(specific_train, x_train, specific_test, cfg), x_test);
  r.r2_concat = r_squared(fit_decoder_predict(concat_cols(shared_train, specific_train), x_train,
                                              concat_cols(shared_test, specific_test), cfg),
                          x_test);
  r.excluded_columns = excl;
  r.rg = r.r2_concat - std::max(r.r2_shared, r.r2_specific);
  return r;
}

double weight_energy_ratio(const Mlp& encoder, std::size_t pure_dims) {
  if (encoder.depth() == 0) throw UsageError("weight_energy_ratio: empty encoder");
  const Tensor& w = encoder.layers().front().weight;
  if (pure_dims == 0 || pure_dims >= w.rows())
    throw UsageError("weight_energy_ratio: pure_dims must lie in (0, input_dim)");
  const std::size_t mixed = w.rows() - pure_dims;
  double e_mixed = 0.0, e_pure = 0.0;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double e = 0.0;
    for (double v : w.row(i)) e += v * v;
    (i < mixed ? e_mixed : e_pure) += e;
  }
  return (e_pure / static_cast<double>(pure_dims)) / (e_mixed / static_cast<double>(mixed));
}

LabelAccuracies probe_all_labels(const SynthDataset& ds, const Tensor& z, const ProbeConfig& cfg) {
  const Tensor ztr = gather_rows(z, ds.train);
  const Tensor zte = gather_rows(z, ds.test);
  auto run = [&](const std::vector<int>& y, const char* name) {
    std::vector<int> ytr, yte;
    for (std::size_t i : ds.train) ytr.push_back(y[i]);
    for (std::size_t i : ds.test) yte.push_back(y[i]);
    return linear_probe(ztr, ytr, zte, yte, cfg, name).test_accuracy;
  };
  return {run(ds.labels.yc, "yc"), run(ds.labels.ys1, "ys1"), run(ds.labels.ys2, "ys2")};
}

Tensor shared_representation(const SynthDataset& ds, const Step1Model& m) {
  return concat_cols(encode_shared(m, ds.x1, 1), encode_shared(m, ds.x2, 2));
}

void SweepConfig::validate() const {
  if (betas.empty()) throw ConfigError("sweep: beta grid is empty");
  if (seeds.empty()) throw ConfigError("sweep: seed list is empty");
  if (threads == 0) throw ConfigError("sweep: threads must be positive");
  for (double b : betas)
    if (!(b >= 0.0)) throw ConfigError("sweep: betas must be >= 0");
  for (double l : lambdas)
    if (!(l >= 0.0)) throw ConfigError("sweep: lambdas must be >= 0");
}

namespace {

void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
        next.store(count);
      }
    }
  };
  const std::size_t n = std::min(threads, count);
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
}

void push_label_points(std::vector<FrontierPoint>& out, FrontierPoint base, const LabelAccuracies& a) {
  const double accs[] = {a.yc, a.ys1, a.ys2};
  for (int k = 0; k < 3; ++k) {
    base.label = kLabelNames[k];
    base.accuracy = accs[k];
    out.push_back(base);
  }
}

}  // namespace

std::vector<FrontierPoint> sweep(const SynthDataset& ds, const SweepConfig& cfg) {
  cfg.validate();
  const std::size_t nb = cfg.betas.size();
  const std::size_t nl = cfg.lambdas.size();
  const std::size_t ns = cfg.seeds.size();

  std::vector<Step1Model> step1(ns * nb);
  std::vector<std::vector<FrontierPoint>> step1_points(ns * nb);
  parallel_for(ns * nb, cfg.threads, [&](std::size_t k) {
    const std::size_t s = k / nb, b = k % nb;
    Step1Config c = cfg.step1;
    c.seed = cfg.seeds[s];
    c.beta = cfg.betas[b];
    step1[k] = train_step1(ds, c);
    FrontierPoint base;
    base.variant = ds.variant;
    base.seed = c.seed;
    base.beta = c.beta;
    base.rep = "zc";
    push_label_points(step1_points[k], base, probe_all_labels(ds, shared_representation(ds, step1[k]), cfg.probe));
  });

  std::vector<std::vector<FrontierPoint>> step2_points(ns * nb * nl);
  parallel_for(ns * nb * nl, cfg.threads, [&](std::size_t k) {
    const std::size_t sb = k / nl, l = k % nl;
    const Step1Model& m1 = step1[sb];
    Step2Config c = cfg.step2;
    c.seed = cfg.seeds[sb / nb];
    c.lambda = cfg.lambdas[l];
    const Step2Model m2 = train_step2(ds, m1, c);
    FrontierPoint base;
    base.variant = ds.variant;
    base.seed = c.seed;
    base.beta = m1.config.beta;
    base.lambda = c.lambda;
    base.rep = "zs1";
    push_label_points(step2_points[k], base, probe_all_labels(ds, encode_specific(m2, m1, ds.x1, 1), cfg.probe));
    base.rep = "zs2";
    push_label_points(step2_points[k], base, probe_all_labels(ds, encode_specific(m2, m1, ds.x2, 2), cfg.probe));
  });

  std::vector<FrontierPoint> out;
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t b = 0; b < nb; ++b) {
      const std::size_t k = s * nb + b;
      out.insert(out.end(), step1_points[k].begin(), step1_points[k].end());
      for (std::size_t l = 0; l < nl; ++l) {
        const auto& p = step2_points[k * nl + l];
        out.insert(out.end(), p.begin(), p.end());
      }
    }
  return out;
}

std::string frontier_csv(std::span<const FrontierPoint> points) {
  std::ostringstream os;
  os << "variant,seed,beta,lambda,rep,label,accuracy\n";
  for (const auto& p : points)
    os << to_string(p.variant) << ',' << p.seed << ',' << format_real(p.beta) << ','
       << csv_real(p.lambda) << ',' << p.rep << ',' << p.label << ',' << format_real(p.accuracy)
       << '\n';
  return os.str();
}

nlohmann::json to_json(const ProbeResult& r) {
  return {{"label", r.label},
          {"train_accuracy", r.train_accuracy},
          {"test_accuracy", r.test_accuracy},
          {"weight_norm", r.weight_norm},
          {"config", {{"reg", r.config.reg}, {"steps", r.config.steps}, {"lr", r.config.lr}}}};
}

nlohmann::json to_json(const RetrievalResult& r) {
  nlohmann::json top = nlohmann::json::object();
  for (std::size_t i = 0; i < r.ns.size(); ++i) top["top" + std::to_string(r.ns[i])] = r.top_n[i];
  return {{"top_n", top}, {"mrr", r.mrr}, {"gallery_size", r.gallery_size}};
}

nlohmann::json to_json(const RgResult& r) {
  return {{"r2_shared", r.r2_shared},
          {"r2_specific", r.r2_specific},
          {"r2_concat", r.r2_concat},
          {"rg", r.rg},
          {"excluded_columns", r.excluded_columns}};
}

}  // namespace dssl
