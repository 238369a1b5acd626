#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dssl/tensor.hpp"

namespace dssl {

/// Finite joint p(x1, x2) as an |X1| x |X2| matrix.
///
/// Construction drops all-zero rows and columns and rejects negative entries or
/// a total mass further than 1e-12 from 1.
class DiscreteJoint {
 public:
  explicit DiscreteJoint(Tensor p);
  /// Scales non-negative weights to unit mass first.
  static DiscreteJoint normalized(const Tensor& weights);

  const Tensor& p() const noexcept { return p_; }
  std::size_t rows() const noexcept { return p_.rows(); }
  std::size_t cols() const noexcept { return p_.cols(); }
  std::vector<double> marginal_x1() const;
  std::vector<double> marginal_x2() const;
  /// p(x2 | x1), row-stochastic.
  Tensor conditional_x2_given_x1() const;
  DiscreteJoint transposed() const;

 private:
  Tensor p_;
};

/// Stochastic map q(z | x1), |X1| x |Z|, rows summing to 1 within 1e-12.
struct Encoder {
  Tensor q;

  void validate(std::size_t n_x1) const;
};

/// Mutual information in nats, with 0 ln 0 = 0.
double mutual_info(const DiscreteJoint& joint);
/// Same for an arbitrary non-negative matrix of unit mass.
double mutual_info(const Tensor& p);
double entropy(std::span<const double> p);

struct InfoCoords {
  double i_z_x1 = 0.0;
  double i_z_x2 = 0.0;
  double i_x1_x2 = 0.0;
  double i_z_x1_given_x2 = 0.0;
  double beta = 0.0;
  double delta_c = 0.0;  // i_x1_x2 - i_z_x2
};

/// Coordinates of Z under the Markov chain Z - X1 - X2.
InfoCoords info_coords(const DiscreteJoint& joint, const Encoder& enc, double beta);

struct CebOptions {
  std::size_t iters = 20000;
  std::size_t restarts = 20;
  double tol = 1e-10;
  std::uint64_t seed = 0;
};

struct CebResult {
  Encoder encoder;
  InfoCoords coords;
  /// I(Z;X2) - beta * I(Z;X1|X2), the maximized objective.
  double lagrangian = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
};

/// CEB objective value of `enc`.
double ceb_lagrangian(const DiscreteJoint& joint, const Encoder& enc, double beta);

/// Maximizes I(Z;X2) - beta * I(Z;X1|X2) over encoders with `z_size` symbols.
///
/// Because I(Z;X1|X2) = I(Z;X1) - I(Z;X2) under the Markov chain, this is the
/// IB problem with trade-off gamma = (1 + beta) / beta, solved by the
/// self-consistent iteration
///   q(z|x1) ∝ q(z) exp(-gamma KL[p(x2|x1) || q(x2|z)])
/// from random starts until the largest entry change drops below `tol`. The
/// objective is asserted non-decreasing along each run. The best restart (and
/// any `warm_starts`) by objective value is returned; `converged` reports
/// whether that run met the tolerance within `iters`.
CebResult ceb_optimize(const DiscreteJoint& joint, double beta, std::size_t z_size,
                       const CebOptions& opts = {}, const std::vector<Encoder>& warm_starts = {});

/// One fixed-point run from `init`; exposed for tests.
CebResult ceb_iterate(const DiscreteJoint& joint, double beta, Encoder init, std::size_t iters,
                      double tol);

struct IbCurve {
  std::vector<CebResult> points;  // in beta-grid order
  /// (I(Z;X1), I(Z;X2)) sorted by I(Z;X1), with (0, 0) prepended.
  std::vector<std::pair<double, double>> sorted;
  /// Upper concave hull of `sorted`.
  std::vector<std::pair<double, double>> hull;
};

/// One ceb_optimize per beta (ascending grid), refined by warm starts from
/// neighbouring grid solutions in both directions.
IbCurve ib_curve(const DiscreteJoint& joint, const std::vector<double>& betas, std::size_t z_size,
                 const CebOptions& opts = {});

/// Chord slopes between consecutive points; points closer than 1e-9 in x are
/// merged, keeping the larger y.
std::vector<double> chord_slopes(const std::vector<std::pair<double, double>>& pts);
std::vector<std::pair<double, double>> upper_hull(std::vector<std::pair<double, double>> pts);

enum class MniTag {
  AttainableDeterministicForward,
  AttainableDeterministicBackward,
  AttainableSubdomainIndependence,
  UnattainableFullSupport,
  Unknown,
};

std::string_view to_string(MniTag t);

struct MniVerdict {
  MniTag tag = MniTag::Unknown;
  std::string witness;
};

/// Sufficient-condition classifier: forward determinism, backward
/// determinism, independence within every connected component of the support
/// graph (rank 1 to 1e-10), then full support. Sound but incomplete.
MniVerdict mni_check(const DiscreteJoint& joint);

/// Z = p(X2 | X1): one symbol per distinct conditional row.
Encoder mni_witness_encoder(const DiscreteJoint& joint, double tol = 1e-12);

/// I(Z1,X2;X1) - I(Z1,Zc2;X1) on the extended joint
/// p(x1,x2) q1(z1|x1) q2(zc2|x2).
double prop4_gap(const DiscreteJoint& joint, const Encoder& z1, const Encoder& zc2);

struct Prop4Report {
  double i_x1_x2 = 0.0;
  double delta_c = 0.0;
  double min_gap = 0.0;
  double max_gap = 0.0;
  double constant_gap = 0.0;  // gap for a constant Z1; equals delta_c
  std::size_t encoders_checked = 0;
  bool within_bounds = false;
  CebResult zc2;
};

/// Optimal Zc2 from ceb_optimize on the transposed joint, then the gap over
/// `n_encoders` random Z1 with `z_size` symbols. Bounds hold when every gap
/// lies in [-tol, delta_c + tol].
Prop4Report verify_prop4(const DiscreteJoint& joint, double beta, std::size_t z_size,
                         std::size_t n_encoders = 100, std::uint64_t seed = 0,
                         const CebOptions& opts = {}, double tol = 1e-6);

/// Parses a joint from CSV text (rows by newline or ';', cells by ','),
/// normalizing the mass. Throws ConfigError on malformed input.
DiscreteJoint parse_joint_csv(std::string_view text);

nlohmann::json to_json(const InfoCoords& c);
nlohmann::json to_json(const MniVerdict& v);

}  // namespace dssl
