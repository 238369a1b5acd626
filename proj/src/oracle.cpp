#include "dssl/oracle.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "dssl/error.hpp"
#include "dssl/rng.hpp"

namespace dssl {

namespace {

constexpr double kMassTol = 1e-12;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Tensor drop_empty(const Tensor& p) {
  std::vector<std::size_t> rows, cols;
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double s = 0.0;
    for (double v : p.row(r)) s += v;
    if (s > 0.0) rows.push_back(r);
  }
  for (std::size_t c = 0; c < p.cols(); ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < p.rows(); ++r) s += p(r, c);
    if (s > 0.0) cols.push_back(c);
  }
  Tensor out(rows.size(), cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = p(rows[i], cols[j]);
  return out;
}

double xlogx_ratio(double p, double ratio) { return p > 0.0 ? p * std::log(ratio) : 0.0; }

// p(z, x2) = sum_x1 q(z|x1) p(x1, x2), laid out |Z| x |X2|.
Tensor z_x2_joint(const DiscreteJoint& joint, const Tensor& q) {
  return matmul_tn(q, joint.p());
}

Tensor z_x1_joint(const std::vector<double>& px1, const Tensor& q) {
  Tensor out = q;
  for (std::size_t x = 0; x < out.rows(); ++x)
    for (double& v : out.row(x)) v *= px1[x];
  return out;
}

Encoder random_encoder(std::size_t n_x, std::size_t n_z, Rng& rng, double sharpness = 1.0) {
  Encoder e{Tensor(n_x, n_z)};
  for (std::size_t x = 0; x < n_x; ++x) {
    double s = 0.0;
    for (double& v : e.q.row(x)) {
      v = std::pow(rng.uniform_open(0.0, 1.0), sharpness);
      s += v;
    }
    for (double& v : e.q.row(x)) v /= s;
  }
  return e;
}

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
  std::size_t find(std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  }
  void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

bool better(const CebResult& a, const CebResult& b) { return a.lagrangian > b.lagrangian; }

}  // namespace

DiscreteJoint::DiscreteJoint(Tensor p) {
  double mass = 0.0;
  for (double v : p.data()) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("joint: entries must be finite and >= 0");
    mass += v;
  }
  if (std::abs(mass - 1.0) > kMassTol)
    throw ConfigError("joint: total mass " + std::to_string(mass) + " is not 1");
  p_ = drop_empty(p);
}

DiscreteJoint DiscreteJoint::normalized(const Tensor& weights) {
  double mass = 0.0;
  for (double v : weights.data()) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("joint: entries must be finite and >= 0");
    mass += v;
  }
  if (!(mass > 0.0)) throw ConfigError("joint: total mass is zero");
  return DiscreteJoint(scale(weights, 1.0 / mass));
}

std::vector<double> DiscreteJoint::marginal_x1() const {
  std::vector<double> m(rows(), 0.0);
  for (std::size_t r = 0; r < rows(); ++r)
    for (double v : p_.row(r)) m[r] += v;
  return m;
}

std::vector<double> DiscreteJoint::marginal_x2() const {
  std::vector<double> m(cols(), 0.0);
  for (std::size_t r = 0; r < rows(); ++r)
    for (std::size_t c = 0; c < cols(); ++c) m[c] += p_(r, c);
  return m;
}

Tensor DiscreteJoint::conditional_x2_given_x1() const {
  const auto m = marginal_x1();
  Tensor out = p_;
  for (std::size_t r = 0; r < rows(); ++r)
    for (double& v : out.row(r)) v /= m[r];
  return out;
}

DiscreteJoint DiscreteJoint::transposed() const {
  DiscreteJoint t = *this;
  t.p_ = transpose(p_);
  return t;
}

void Encoder::validate(std::size_t n_x1) const {
  if (q.rows() != n_x1) throw ConfigError("encoder: row count does not match |X1|");
  if (q.cols() == 0) throw ConfigError("encoder: empty Z alphabet");
  for (std::size_t r = 0; r < q.rows(); ++r) {
    double s = 0.0;
    for (double v : q.row(r)) {
      if (!(v >= 0.0)) throw ConfigError("encoder: negative entry");
      s += v;
    }
    if (std::abs(s - 1.0) > kMassTol) throw ConfigError("encoder: row does not sum to 1");
  }
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

double mutual_info(const Tensor& p) {
  std::vector<double> a(p.rows(), 0.0), b(p.cols(), 0.0);
  for (std::size_t r = 0; r < p.rows(); ++r)
    for (std::size_t c = 0; c < p.cols(); ++c) {
      a[r] += p(r, c);
      b[c] += p(r, c);
    }
  double mi = 0.0;
  for (std::size_t r = 0; r < p.rows(); ++r)
    for (std::size_t c = 0; c < p.cols(); ++c) {
      const double v = p(r, c);
      if (v > 0.0) mi += v * std::log(v / (a[r] * b[c]));
    }
  return std::max(0.0, mi);
}

double mutual_info(const DiscreteJoint& joint) { return mutual_info(joint.p()); }

InfoCoords info_coords(const DiscreteJoint& joint, const Encoder& enc, double beta) {
  enc.validate(joint.rows());
  const auto px1 = joint.marginal_x1();
  const auto px2 = joint.marginal_x2();
  const Tensor pzx2 = z_x2_joint(joint, enc.q);

  InfoCoords c;
  c.beta = beta;
  c.i_x1_x2 = mutual_info(joint);
  c.i_z_x1 = mutual_info(z_x1_joint(px1, enc.q));
  c.i_z_x2 = mutual_info(pzx2);
  // Direct evaluation: sum p(x1,x2) q(z|x1) ln[q(z|x1) / p(z|x2)].
  double cmi = 0.0;
  for (std::size_t x1 = 0; x1 < joint.rows(); ++x1)
    for (std::size_t x2 = 0; x2 < joint.cols(); ++x2) {
      const double pj = joint.p()(x1, x2);
      if (pj <= 0.0) continue;
      for (std::size_t z = 0; z < enc.q.cols(); ++z) {
        const double qz = enc.q(x1, z);
        if (qz <= 0.0) continue;
        cmi += pj * xlogx_ratio(qz, qz / (pzx2(z, x2) / px2[x2]));
      }
    }
  c.i_z_x1_given_x2 = std::max(0.0, cmi);
  c.delta_c = c.i_x1_x2 - c.i_z_x2;
  return c;
}

double ceb_lagrangian(const DiscreteJoint& joint, const Encoder& enc, double beta) {
  const auto px1 = joint.marginal_x1();
  const double izx1 = mutual_info(z_x1_joint(px1, enc.q));
  const double izx2 = mutual_info(z_x2_joint(joint, enc.q));
  return izx2 - beta * (izx1 - izx2);
}

CebResult ceb_iterate(const DiscreteJoint& joint, double beta, Encoder init, std::size_t iters,
                      double tol) {
  if (!(beta > 0.0)) throw ConfigError("ceb: beta must be > 0");
  init.validate(joint.rows());
  const double gamma = (1.0 + beta) / beta;
  const std::size_t nx = joint.rows(), ny = joint.cols(), nz = init.q.cols();
  const auto px = joint.marginal_x1();
  const Tensor cond = joint.conditional_x2_given_x1();

  CebResult res;
  res.encoder = std::move(init);
  Tensor& q = res.encoder.q;
  double prev = ceb_lagrangian(joint, res.encoder, beta);
  std::vector<double> qz(nz);
  Tensor qyz(nz, ny);
  Tensor next(nx, nz);
  std::vector<double> logits(nz);

  for (std::size_t it = 0; it < iters; ++it) {
    std::fill(qz.begin(), qz.end(), 0.0);
    qyz.fill(0.0);
    for (std::size_t x = 0; x < nx; ++x)
      for (std::size_t z = 0; z < nz; ++z) {
        const double w = px[x] * q(x, z);
        qz[z] += w;
        for (std::size_t y = 0; y < ny; ++y) qyz(z, y) += w * cond(x, y);
      }
    for (std::size_t z = 0; z < nz; ++z)
      if (qz[z] > 0.0)
        for (std::size_t y = 0; y < ny; ++y) qyz(z, y) /= qz[z];

    double change = 0.0;
    for (std::size_t x = 0; x < nx; ++x) {
      double best = kNegInf;
      for (std::size_t z = 0; z < nz; ++z) {
        logits[z] = kNegInf;
        if (qz[z] <= 0.0) continue;
        double kl = 0.0;
        for (std::size_t y = 0; y < ny; ++y) {
          const double c = cond(x, y);
          if (c <= 0.0) continue;
          if (qyz(z, y) <= 0.0) {
            kl = std::numeric_limits<double>::infinity();
            break;
          }
          kl += c * std::log(c / qyz(z, y));
        }
        if (std::isinf(kl)) continue;
        logits[z] = std::log(qz[z]) - gamma * kl;
        best = std::max(best, logits[z]);
      }
      double s = 0.0;
      for (std::size_t z = 0; z < nz; ++z) {
        next(x, z) = logits[z] == kNegInf ? 0.0 : std::exp(logits[z] - best);
        s += next(x, z);
      }
      for (std::size_t z = 0; z < nz; ++z) {
        next(x, z) /= s;
        change = std::max(change, std::abs(next(x, z) - q(x, z)));
      }
    }
    std::swap(q, next);
    res.iterations = it + 1;

    const double cur = ceb_lagrangian(joint, res.encoder, beta);
    if (cur < prev - 1e-9 * (1.0 + std::abs(prev)))
      throw std::logic_error("ceb: objective decreased from " + std::to_string(prev) + " to " +
                             std::to_string(cur));
    prev = cur;
    if (change < tol) {
      res.converged = true;
      break;
    }
  }
  res.lagrangian = prev;
  res.coords = info_coords(joint, res.encoder, beta);
  return res;
}

CebResult ceb_optimize(const DiscreteJoint& joint, double beta, std::size_t z_size,
                       const CebOptions& opts, const std::vector<Encoder>& warm_starts) {
  if (!(beta > 0.0)) throw ConfigError("ceb: beta must be > 0");
  if (z_size == 0) throw ConfigError("ceb: z_size must be positive");
  if (opts.restarts == 0 && warm_starts.empty()) throw ConfigError("ceb: no starting points");
  CebResult best;
  bool have = false;
  for (std::size_t r = 0; r < opts.restarts; ++r) {
    Rng rng = Rng::stream(opts.seed, "ceb.restart", {r});
    CebResult c = ceb_iterate(joint, beta, random_encoder(joint.rows(), z_size, rng), opts.iters, opts.tol);
    if (!have || better(c, best)) {
      best = std::move(c);
      have = true;
    }
  }
  for (const Encoder& w : warm_starts) {
    CebResult c = ceb_iterate(joint, beta, w, opts.iters, opts.tol);
    if (!have || better(c, best)) {
      best = std::move(c);
      have = true;
    }
  }
  return best;
}

IbCurve ib_curve(const DiscreteJoint& joint, const std::vector<double>& betas, std::size_t z_size,
                 const CebOptions& opts) {
  if (betas.empty()) throw ConfigError("ib_curve: empty beta grid");
  if (!std::is_sorted(betas.begin(), betas.end())) throw ConfigError("ib_curve: beta grid must be ascending");
  IbCurve curve;
  for (double b : betas) curve.points.push_back(ceb_optimize(joint, b, z_size, opts));

  // Continuation: a neighbour's optimum is often a better start than noise.
  const std::size_t n = betas.size();
  for (int pass = 0; pass < 3; ++pass) {
    bool improved = false;
    auto refine = [&](std::size_t i, std::size_t from) {
      CebResult c = ceb_iterate(joint, betas[i], curve.points[from].encoder, opts.iters, opts.tol);
      if (better(c, curve.points[i])) {
        curve.points[i] = std::move(c);
        improved = true;
      }
    };
    for (std::size_t i = 1; i < n; ++i) refine(i, i - 1);
    for (std::size_t i = n - 1; i-- > 0;) refine(i, i + 1);
    if (!improved) break;
  }

  curve.sorted.emplace_back(0.0, 0.0);
  for (const auto& p : curve.points) curve.sorted.emplace_back(p.coords.i_z_x1, p.coords.i_z_x2);
  std::sort(curve.sorted.begin(), curve.sorted.end());
  curve.hull = upper_hull(curve.sorted);
  return curve;
}

std::vector<double> chord_slopes(const std::vector<std::pair<double, double>>& pts) {
  std::vector<std::pair<double, double>> merged;
  for (const auto& p : pts) {
    if (!merged.empty() && std::abs(p.first - merged.back().first) < 1e-9) {
      merged.back().second = std::max(merged.back().second, p.second);
      continue;
    }
    merged.push_back(p);
  }
  std::vector<double> slopes;
  for (std::size_t i = 1; i < merged.size(); ++i)
    slopes.push_back((merged[i].second - merged[i - 1].second) / (merged[i].first - merged[i - 1].first));
  return slopes;
}

std::vector<std::pair<double, double>> upper_hull(std::vector<std::pair<double, double>> pts) {
  std::sort(pts.begin(), pts.end());
  std::vector<std::pair<double, double>> h;
  for (const auto& p : pts) {
    while (h.size() >= 2) {
      const auto& a = h[h.size() - 2];
      const auto& b = h.back();
      const double cross = (b.first - a.first) * (p.second - a.second) - (b.second - a.second) * (p.first - a.first);
      if (cross >= 0.0)
        h.pop_back();
      else
        break;
    }
    h.push_back(p);
  }
  return h;
}

std::string_view to_string(MniTag t) {
  switch (t) {
    case MniTag::AttainableDeterministicForward: return "AttainableDeterministicForward";
    case MniTag::AttainableDeterministicBackward: return "AttainableDeterministicBackward";
    case MniTag::AttainableSubdomainIndependence: return "AttainableSubdomainIndependence";
    case MniTag::UnattainableFullSupport: return "UnattainableFullSupport";
    case MniTag::Unknown: return "Unknown";
  }
  return "Unknown";
}

MniVerdict mni_check(const DiscreteJoint& joint) {
  const Tensor& p = joint.p();
  const std::size_t nr = p.rows(), nc = p.cols();

  auto one_nonzero_per_row = [](const Tensor& m) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      std::size_t nz = 0;
      for (double v : m.row(r)) nz += v > 0.0 ? 1 : 0;
      if (nz != 1) return false;
    }
    return true;
  };
  if (one_nonzero_per_row(p))
    return {MniTag::AttainableDeterministicForward, "X2 = f(X1); Z = f(X1) attains MNI"};
  if (one_nonzero_per_row(transpose(p)))
    return {MniTag::AttainableDeterministicBackward, "X1 = g(X2); Z = X1 attains MNI"};

  UnionFind uf(nr + nc);
  for (std::size_t r = 0; r < nr; ++r)
    for (std::size_t c = 0; c < nc; ++c)
      if (p(r, c) > 0.0) uf.unite(r, nr + c);
  std::vector<std::size_t> roots;
  bool independent = true;
  for (std::size_t r = 0; r < nr && independent; ++r) {
    const std::size_t root = uf.find(r);
    if (std::find(roots.begin(), roots.end(), root) != roots.end()) continue;
    roots.push_back(root);
    std::vector<std::size_t> rs, cs;
    for (std::size_t i = 0; i < nr; ++i)
      if (uf.find(i) == root) rs.push_back(i);
    for (std::size_t j = 0; j < nc; ++j)
      if (uf.find(nr + j) == root) cs.push_back(j);
    double mass = 0.0;
    std::vector<double> a(rs.size(), 0.0), b(cs.size(), 0.0);
    for (std::size_t i = 0; i < rs.size(); ++i)
      for (std::size_t j = 0; j < cs.size(); ++j) {
        const double v = p(rs[i], cs[j]);
        a[i] += v;
        b[j] += v;
        mass += v;
      }
    for (std::size_t i = 0; i < rs.size() && independent; ++i)
      for (std::size_t j = 0; j < cs.size(); ++j)
        if (std::abs(p(rs[i], cs[j]) - a[i] * b[j] / mass) > 1e-10) {
          independent = false;
          break;
        }
  }
  if (independent)
    return {MniTag::AttainableSubdomainIndependence,
            std::to_string(roots.size()) +
                " independent support component(s); Z = component index attains MNI"};

  bool full = true;
  for (double v : p.data()) full &= v > 0.0;
  if (full)
    return {MniTag::UnattainableFullSupport,
            "every cell has positive mass and X1, X2 are dependent"};
  return {MniTag::Unknown, "no sufficient condition applies"};
}

Encoder mni_witness_encoder(const DiscreteJoint& joint, double tol) {
  const Tensor cond = joint.conditional_x2_given_x1();
  std::vector<std::size_t> group(cond.rows());
  std::vector<std::size_t> reps;
  for (std::size_t r = 0; r < cond.rows(); ++r) {
    std::size_t g = reps.size();
    for (std::size_t k = 0; k < reps.size(); ++k) {
      bool same = true;
      for (std::size_t c = 0; c < cond.cols() && same; ++c) same = std::abs(cond(r, c) - cond(reps[k], c)) <= tol;
      if (same) {
        g = k;
        break;
      }
    }
    if (g == reps.size()) reps.push_back(r);
    group[r] = g;
  }
  Encoder e{Tensor(cond.rows(), reps.size())};
  for (std::size_t r = 0; r < cond.rows(); ++r) e.q(r, group[r]) = 1.0;
  return e;
}

double prop4_gap(const DiscreteJoint& joint, const Encoder& z1, const Encoder& zc2) {
  z1.validate(joint.rows());
  zc2.validate(joint.cols());
  const std::size_t n1 = joint.rows(), n2 = joint.cols();
  const std::size_t nz = z1.q.cols(), nc = zc2.q.cols();
  Tensor a(nz * n2, n1);  // rows (z1, x2), cols x1
  Tensor b(nz * nc, n1);  // rows (z1, zc2), cols x1
  for (std::size_t x1 = 0; x1 < n1; ++x1)
    for (std::size_t x2 = 0; x2 < n2; ++x2) {
      const double pj = joint.p()(x1, x2);
      if (pj <= 0.0) continue;
      for (std::size_t z = 0; z < nz; ++z) {
        const double w = pj * z1.q(x1, z);
        a(z * n2 + x2, x1) += w;
        for (std::size_t c = 0; c < nc; ++c) b(z * nc + c, x1) += w * zc2.q(x2, c);
      }
    }
  return mutual_info(a) - mutual_info(b);
}

Prop4Report verify_prop4(const DiscreteJoint& joint, double beta, std::size_t z_size,
                         std::size_t n_encoders, std::uint64_t seed, const CebOptions& opts,
                         double tol) {
  if (joint.rows() > 6 || joint.cols() > 6 || z_size > 4)
    throw ConfigError("verify_prop4: alphabets limited to |X| <= 6 and z_size <= 4");
  if (z_size == 0) throw ConfigError("verify_prop4: z_size must be positive");
  Prop4Report rep;
  rep.i_x1_x2 = mutual_info(joint);
  rep.zc2 = ceb_optimize(joint.transposed(), beta, joint.cols(), opts);
  rep.delta_c = rep.zc2.coords.delta_c;

  const Encoder constant{Tensor(joint.rows(), 1, 1.0)};
  rep.constant_gap = prop4_gap(joint, constant, rep.zc2.encoder);

  rep.min_gap = std::numeric_limits<double>::infinity();
  rep.max_gap = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n_encoders; ++k) {
    Rng rng = Rng::stream(seed, "prop4.encoder", {k});
    const double sharp = (k % 2 == 0) ? 1.0 : 6.0;
    const Encoder z1 = random_encoder(joint.rows(), z_size, rng, sharp);
    const double gap = prop4_gap(joint, z1, rep.zc2.encoder);
    rep.min_gap = std::min(rep.min_gap, gap);
    rep.max_gap = std::max(rep.max_gap, gap);
    ++rep.encoders_checked;
  }
  if (n_encoders == 0) rep.min_gap = rep.max_gap = 0.0;
  rep.within_bounds = rep.min_gap >= -tol && rep.max_gap <= rep.delta_c + tol;
  return rep;
}

DiscreteJoint parse_joint_csv(std::string_view text) {
  std::vector<std::vector<double>> rows;
  std::vector<double> cur;
  std::string cell;
  auto flush_cell = [&] {
    std::size_t b = cell.find_first_not_of(" \t\r");
    std::size_t e = cell.find_last_not_of(" \t\r");
    if (b == std::string::npos) {
      cell.clear();
      return false;
    }
    const std::string_view s(cell.data() + b, e - b + 1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
      throw ConfigError("joint csv: cannot parse '" + std::string(s) + "'");
    cur.push_back(v);
    cell.clear();
    return true;
  };
  auto flush_row = [&] {
    if (!cur.empty()) rows.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    if (ch == ',') {
      if (!flush_cell()) throw ConfigError("joint csv: empty cell");
    } else if (ch == '\n' || ch == ';') {
      flush_cell();
      flush_row();
    } else {
      cell.push_back(ch);
    }
  }
  flush_cell();
  flush_row();
  if (rows.empty()) throw ConfigError("joint csv: no rows");
  Tensor t(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != t.cols()) throw ConfigError("joint csv: ragged rows");
    for (std::size_t c = 0; c < t.cols(); ++c) t(r, c) = rows[r][c];
  }
  return DiscreteJoint::normalized(t);
}

nlohmann::json to_json(const InfoCoords& c) {
  return {{"i_z_x1", c.i_z_x1},         {"i_z_x2", c.i_z_x2},
          {"i_x1_x2", c.i_x1_x2},       {"i_z_x1_given_x2", c.i_z_x1_given_x2},
          {"beta", c.beta},             {"delta_c", c.delta_c}};
}

nlohmann::json to_json(const MniVerdict& v) {
  return {{"tag", std::string(to_string(v.tag))}, {"witness", v.witness}};
}

}  // namespace dssl
