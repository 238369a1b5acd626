#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "dssl/losses.hpp"
#include "dssl/mlp.hpp"
#include "dssl/synthdata.hpp"

namespace dssl {

/// Shared-encoder training (step 1).
struct Step1Config {
  double beta = 0.0;
  double tau = 0.1;
  std::size_t latent_dim = 32;
  std::size_t hidden = 512;
  std::size_t depth = 3;
  std::size_t epochs = 30;
  std::size_t batch_size = 256;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  AugmentConfig augment;
  bool vmf_sampling = false;
  double kappa = 64.0;

  void validate() const;
};

struct Step1Model {
  Step1Config config;
  Mlp enc_c1, enc_c2;
  std::vector<double> loss_trace;  // epoch means
};

/// Specific-encoder training (step 2) on top of a frozen step-1 model.
struct Step2Config {
  double lambda = 0.0;
  double tau = 0.1;
  std::size_t latent_dim = 32;
  std::size_t hidden = 512;
  std::size_t depth = 3;
  std::size_t epochs = 30;
  std::size_t batch_size = 256;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  AugmentConfig augment;

  void validate() const;
};

struct Step2Model {
  Step2Config config;
  Mlp enc_s1, enc_s2;  // input: concat(x, shared code)
  std::vector<double> loss_trace;
};

/// Joint-optimization baseline: all four encoders trained on one objective.
struct JointOptConfig {
  double a = 1.0;
  double lambda = 0.0;
  double tau = 0.1;
  std::size_t shared_dim = 32;
  std::size_t specific_dim = 32;
  std::size_t hidden = 512;
  std::size_t depth = 3;
  std::size_t epochs = 30;
  std::size_t batch_size = 256;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  AugmentConfig augment;

  void validate() const;
};

struct JointOptModel {
  JointOptConfig config;
  Step1Model shared;
  Step2Model specific;
  std::vector<double> loss_trace;
  /// Epoch means of the shared InfoNCE term alone.
  std::vector<double> shared_info_nce_trace;
};

/// Minibatch Adam on the step-1 loss over the train split, with fresh
/// augmentation per batch. Throws NumericError on a non-finite loss.
Step1Model train_step1(const SynthDataset& ds, const Step1Config& cfg);

/// Unit-norm shared codes for modality 1 or 2.
Tensor encode_shared(const Step1Model& m, const Tensor& x, int modality);

/// Trains only the specific encoders; step-1 weights are checksummed every
/// epoch and must not change.
Step2Model train_step2(const SynthDataset& ds, const Step1Model& step1, const Step2Config& cfg);

/// Specific codes for modality 1 or 2 (raw encoder output).
Tensor encode_specific(const Step2Model& m, const Step1Model& step1, const Tensor& x, int modality);

JointOptModel train_jointopt(const SynthDataset& ds, const JointOptConfig& cfg);

/// FNV-1a over the raw bytes of every parameter.
std::uint64_t checksum(const Mlp& m);
std::uint64_t checksum(const Step1Model& m);

nlohmann::json to_json(const Step1Config& c);
nlohmann::json to_json(const Step2Config& c);
nlohmann::json to_json(const JointOptConfig& c);
Step1Config step1_config_from_json(const nlohmann::json& j);
Step2Config step2_config_from_json(const nlohmann::json& j);
JointOptConfig jointopt_config_from_json(const nlohmann::json& j);

void save_step1(const Step1Model& m, const std::filesystem::path& manifest_path);
Step1Model load_step1(const std::filesystem::path& manifest_path);
void save_step2(const Step2Model& m, const std::filesystem::path& manifest_path);
Step2Model load_step2(const std::filesystem::path& manifest_path);
void save_jointopt(const JointOptModel& m, const std::filesystem::path& manifest_path);
JointOptModel load_jointopt(const std::filesystem::path& manifest_path);

}  // namespace dssl
