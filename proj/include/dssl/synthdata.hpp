#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "dssl/rng.hpp"
#include "dssl/tensor.hpp"

namespace dssl {

enum class Variant { Plain, Mixed };

std::string_view to_string(Variant v);
/// "plain" or "mixed"; anything else is a ConfigError.
Variant parse_variant(std::string_view s);

inline constexpr std::size_t kLatentDim = 50;
inline constexpr std::size_t kObsDim = 100;
/// Mixed variant: the shared latent splits into 35 entangled and 15 pure
/// coordinates, the pure ones copied straight into the last observation columns.
inline constexpr std::size_t kMixedSharedDim = 35;
inline constexpr std::size_t kPureDim = 15;
inline constexpr double kLatentVariance = 0.5;

struct TrueLatents {
  Tensor zs1, zs2, zc;  // n x 50 each
};

struct Transforms {
  Tensor t1, t2;  // 100x100 (plain) or 85x85 (mixed), entries in (-1, 1)
};

struct Labels {
  std::vector<int> ys1, ys2, yc;
};

struct AugmentConfig {
  double noise_sigma = 0.1;
  double dropout_rate = 0.1;

  /// Throws ConfigError on sigma < 0 or rate outside [0, 1].
  void validate() const;
};

struct SynthDataset {
  Variant variant = Variant::Plain;
  std::uint64_t seed = 0;
  TrueLatents latents;
  Transforms transforms;
  Tensor x1, x2;  // n x 100
  Labels labels;
  std::vector<std::size_t> train, test;

  std::size_t size() const noexcept { return x1.rows(); }
};

/// Latents, linear mixing, labels and an 80/20 split, all from named
/// sub-streams of `seed`. Throws ConfigError for n < 100.
SynthDataset generate(std::size_t n, std::uint64_t seed, Variant variant);

/// One observation matrix from a specific and a shared latent block:
/// rows are T * [zs, zc] (plain) or [T * [zs, zc_mix], zc_pure] (mixed).
Tensor observe(const Tensor& zs, const Tensor& zc, const Tensor& t, Variant variant);

/// Y = 1{w^T z > median} with an independent random unit w per label; each
/// label reads only its own latent block.
Labels make_labels(const TrueLatents& latents, std::uint64_t seed);

/// X plus N(0, sigma^2) noise, then each entry zeroed with probability
/// dropout_rate. Only the first `cols` columns are touched; the rest pass
/// through. Consumes randomness from `rng`.
Tensor augment(const Tensor& x, const AugmentConfig& cfg, Rng& rng,
               std::size_t cols = static_cast<std::size_t>(-1));

/// Columns corrupted at train time: all of them for plain data, the 85 mixed
/// ones for the mixed variant (the pure block is fed in as is).
std::size_t augmented_cols(Variant variant);

void save_dataset(const SynthDataset& ds, const std::filesystem::path& manifest_path);
SynthDataset load_dataset(const std::filesystem::path& manifest_path);

}  // namespace dssl
