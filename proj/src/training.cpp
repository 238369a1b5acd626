#include "dssl/training.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "dssl/adam.hpp"
#include "dssl/bundle.hpp"
#include "dssl/error.hpp"

namespace dssl {

namespace {

void require_positive(std::size_t v, const char* what) {
  if (v == 0) throw ConfigError(std::string(what) + " must be positive");
}

void validate_common(std::size_t hidden, std::size_t depth, std::size_t epochs,
                     std::size_t batch_size, double lr, double tau) {
  require_positive(hidden, "hidden");
  if (depth < 2) throw ConfigError("depth must be at least 2");
  require_positive(epochs, "epochs");
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and >= 0");
  if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
}

std::vector<std::size_t> mlp_dims(std::size_t in, std::size_t hidden, std::size_t depth,
                                  std::size_t out) {
  std::vector<std::size_t> dims{in};
  for (std::size_t i = 0; i + 1 < depth; ++i) dims.push_back(hidden);
  dims.push_back(out);
  return dims;
}

Mlp init_mlp(std::uint64_t seed, const char* name, std::size_t in, std::size_t hidden,
             std::size_t depth, std::size_t out) {
  Rng rng = Rng::stream(seed, name);
  const auto dims = mlp_dims(in, hidden, depth, out);
  return Mlp(dims, rng);
}

/// Contiguous batches of a per-epoch permutation of the train split. A final
/// batch of one row is dropped since in-batch contrast needs two rows.
std::vector<std::vector<std::size_t>> epoch_batches(const std::vector<std::size_t>& train,
                                                    std::uint64_t seed, std::size_t epoch,
                                                    std::size_t batch_size) {
  std::vector<std::size_t> perm = train;
  Rng rng = Rng::stream(seed, "shuffle", {epoch});
  rng.shuffle(perm);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < perm.size(); start += batch_size) {
    const std::size_t end = std::min(perm.size(), start + batch_size);
    if (end - start < 2) break;
    out.emplace_back(perm.begin() + static_cast<long>(start), perm.begin() + static_cast<long>(end));
  }
  return out;
}

void check_finite(double loss, const char* phase, std::size_t epoch, std::size_t batch) {
  if (!std::isfinite(loss))
    throw NumericError(std::string(phase) + " diverged: non-finite loss at epoch " +
                       std::to_string(epoch) + ", batch " + std::to_string(batch));
}

void check_modality(int modality) {
  if (modality != 1 && modality != 2) throw UsageError("modality must be 1 or 2");
}

void append_params(std::vector<Tensor*>& out, Mlp& m) {
  for (Tensor* p : m.parameters()) out.push_back(p);
}

void append_grads(std::vector<const Tensor*>& out, const std::vector<Var>& vars) {
  for (const Var& v : vars) out.push_back(&v.grad());
}

void put_mlp(Bundle& b, const std::string& prefix, const Mlp& m) {
  for (std::size_t i = 0; i < m.depth(); ++i) {
    b.tensors.push_back({prefix + "." + std::to_string(i) + ".weight", m.layers()[i].weight});
    b.tensors.push_back({prefix + "." + std::to_string(i) + ".bias", m.layers()[i].bias});
  }
}

Mlp get_mlp(const Bundle& b, const std::string& prefix) {
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0;; ++i) {
    const std::string w = prefix + "." + std::to_string(i) + ".weight";
    if (!b.contains(w)) break;
    layers.push_back({b.get(w), b.get(prefix + "." + std::to_string(i) + ".bias")});
  }
  if (layers.empty()) throw ConfigError("checkpoint has no parameters for '" + prefix + "'");
  return Mlp(std::move(layers));
}

Bundle read_kind(const std::filesystem::path& p, const std::string& kind) {
  Bundle b = read_bundle(p);
  if (b.kind != kind)
    throw ConfigError(p.string() + " is a '" + b.kind + "' bundle, expected '" + kind + "'");
  return b;
}

nlohmann::json augment_json(const AugmentConfig& a) {
  return {{"noise_sigma", a.noise_sigma}, {"dropout_rate", a.dropout_rate}};
}

AugmentConfig augment_from_json(const nlohmann::json& j) {
  AugmentConfig a;
  a.noise_sigma = j.at("noise_sigma").get<double>();
  a.dropout_rate = j.at("dropout_rate").get<double>();
  return a;
}

}  // namespace

void Step1Config::validate() const {
  if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
  require_positive(latent_dim, "latent_dim");
  validate_common(hidden, depth, epochs, batch_size, lr, tau);
  augment.validate();
  if (vmf_sampling && !(kappa > 0.0)) throw ConfigError("kappa must be > 0");
}

void Step2Config::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  require_positive(latent_dim, "latent_dim");
  validate_common(hidden, depth, epochs, batch_size, lr, tau);
  augment.validate();
}

void JointOptConfig::validate() const {
  if (!(a > 0.0)) throw ConfigError("a must be > 0");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  require_positive(shared_dim, "shared_dim");
  require_positive(specific_dim, "specific_dim");
  validate_common(hidden, depth, epochs, batch_size, lr, tau);
  augment.validate();
}

Step1Model train_step1(const SynthDataset& ds, const Step1Config& cfg) {
  cfg.validate();
  if (ds.train.size() < 2) throw ConfigError("train split needs at least 2 rows");
  const std::size_t d1 = ds.x1.cols();
  const std::size_t d2 = ds.x2.cols();

  Step1Model m;
  m.config = cfg;
  m.enc_c1 = init_mlp(cfg.seed, "init.enc_c1", d1, cfg.hidden, cfg.depth, cfg.latent_dim);
  m.enc_c2 = init_mlp(cfg.seed, "init.enc_c2", d2, cfg.hidden, cfg.depth, cfg.latent_dim);

  std::vector<Tensor*> params;
  append_params(params, m.enc_c1);
  append_params(params, m.enc_c2);
  AdamState adam = make_adam_state(params, AdamConfig{.lr = cfg.lr});

  LossConfig lc;
  lc.tau = cfg.tau;
  lc.beta = cfg.beta;
  lc.kappa = cfg.kappa;
  lc.vmf_sampling = cfg.vmf_sampling;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batches = epoch_batches(ds.train, cfg.seed, epoch, cfg.batch_size);
    double total = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      Rng aug = Rng::stream(cfg.seed, "augment", {epoch, b});
      Tensor x1 = augment(gather_rows(ds.x1, batches[b]), cfg.augment, aug, augmented_cols(ds.variant));
      Tensor x2 = augment(gather_rows(ds.x2, batches[b]), cfg.augment, aug, augmented_cols(ds.variant));
      Rng vmf = Rng::stream(cfg.seed, "vmf", {epoch, b});

      Graph g;
      const auto p1 = bind_parameters(g, m.enc_c1, true);
      const auto p2 = bind_parameters(g, m.enc_c2, true);
      const Step1Terms t = step1_loss(p1, p2, g.constant(std::move(x1)), g.constant(std::move(x2)),
                                      lc, cfg.vmf_sampling ? &vmf : nullptr);
      const double loss = t.loss.value().item();
      check_finite(loss, "step1", epoch, b);
      g.backward(t.loss);

      std::vector<const Tensor*> grads;
      grads.reserve(params.size());
      append_grads(grads, p1);
      append_grads(grads, p2);
      adam_step(params, grads, adam);
      total += loss;
    }
    m.loss_trace.push_back(total / static_cast<double>(batches.size()));
  }
  return m;
}

Tensor encode_shared(const Step1Model& m, const Tensor& x, int modality) {
  check_modality(modality);
  return l2_normalize_rows(mlp_forward(modality == 1 ? m.enc_c1 : m.enc_c2, x));
}

Step2Model train_step2(const SynthDataset& ds, const Step1Model& step1, const Step2Config& cfg) {
  cfg.validate();
  if (ds.train.size() < 2) throw ConfigError("train split needs at least 2 rows");
  const std::size_t dc = step1.enc_c1.output_dim();
  if (step1.enc_c2.output_dim() != dc) throw ConfigError("step-1 encoders disagree on d_c");
  const std::uint64_t frozen = checksum(step1);

  Step2Model m;
  m.config = cfg;
  m.enc_s1 = init_mlp(cfg.seed, "init.enc_s1", ds.x1.cols() + dc, cfg.hidden, cfg.depth,
                      cfg.latent_dim);
  m.enc_s2 = init_mlp(cfg.seed, "init.enc_s2", ds.x2.cols() + dc, cfg.hidden, cfg.depth,
                      cfg.latent_dim);

  std::vector<Tensor*> params;
  append_params(params, m.enc_s1);
  append_params(params, m.enc_s2);
  AdamState adam = make_adam_state(params, AdamConfig{.lr = cfg.lr});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batches = epoch_batches(ds.train, cfg.seed, epoch, cfg.batch_size);
    double total = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const Tensor x1 = gather_rows(ds.x1, batches[b]);
      const Tensor x2 = gather_rows(ds.x2, batches[b]);
      Rng aug = Rng::stream(cfg.seed, "augment", {epoch, b});
      Tensor x1a = augment(x1, cfg.augment, aug, augmented_cols(ds.variant));
      Tensor x2a = augment(x2, cfg.augment, aug, augmented_cols(ds.variant));
      Tensor x1b = augment(x1, cfg.augment, aug, augmented_cols(ds.variant));
      Tensor x2b = augment(x2, cfg.augment, aug, augmented_cols(ds.variant));

      // Frozen shared codes enter the graph as constants.
      Graph g;
      View va{g.constant(x1a), g.constant(x2a), g.constant(encode_shared(step1, x1a, 1)),
              g.constant(encode_shared(step1, x2a, 2))};
      View vb{g.constant(x1b), g.constant(x2b), g.constant(encode_shared(step1, x1b, 1)),
              g.constant(encode_shared(step1, x2b, 2))};
      const auto s1 = bind_parameters(g, m.enc_s1, true);
      const auto s2 = bind_parameters(g, m.enc_s2, true);
      const Step2Terms t = step2_loss(va, vb, s1, s2, cfg.tau, cfg.lambda);
      const double loss = t.loss.value().item();
      check_finite(loss, "step2", epoch, b);
      g.backward(t.loss);

      std::vector<const Tensor*> grads;
      grads.reserve(params.size());
      append_grads(grads, s1);
      append_grads(grads, s2);
      adam_step(params, grads, adam);
      total += loss;
    }
    m.loss_trace.push_back(total / static_cast<double>(batches.size()));
    if (checksum(step1) != frozen)
      throw std::logic_error("step-1 parameters changed during step-2 training");
  }
  return m;
}

Tensor encode_specific(const Step2Model& m, const Step1Model& step1, const Tensor& x,
                       int modality) {
  check_modality(modality);
  const Tensor zc = encode_shared(step1, x, modality);
  return mlp_forward(modality == 1 ? m.enc_s1 : m.enc_s2, concat_cols(x, zc));
}

JointOptModel train_jointopt(const SynthDataset& ds, const JointOptConfig& cfg) {
  cfg.validate();
  if (ds.train.size() < 2) throw ConfigError("train split needs at least 2 rows");
  const std::size_t d1 = ds.x1.cols();
  const std::size_t d2 = ds.x2.cols();
  const std::size_t dc = cfg.shared_dim;

  JointOptModel m;
  m.config = cfg;
  Step1Model& sh = m.shared;
  Step2Model& sp = m.specific;
  sh.config.tau = cfg.tau;
  sh.config.latent_dim = dc;
  sh.config.hidden = cfg.hidden;
  sh.config.depth = cfg.depth;
  sh.config.epochs = cfg.epochs;
  sh.config.batch_size = cfg.batch_size;
  sh.config.lr = cfg.lr;
  sh.config.seed = cfg.seed;
  sh.config.augment = cfg.augment;
  sp.config.lambda = cfg.lambda;
  sp.config.tau = cfg.tau;
  sp.config.latent_dim = cfg.specific_dim;
  sp.config.hidden = cfg.hidden;
  sp.config.depth = cfg.depth;
  sp.config.epochs = cfg.epochs;
  sp.config.batch_size = cfg.batch_size;
  sp.config.lr = cfg.lr;
  sp.config.seed = cfg.seed;
  sp.config.augment = cfg.augment;

  // Same init streams as the two-step method.
  sh.enc_c1 = init_mlp(cfg.seed, "init.enc_c1", d1, cfg.hidden, cfg.depth, dc);
  sh.enc_c2 = init_mlp(cfg.seed, "init.enc_c2", d2, cfg.hidden, cfg.depth, dc);
  sp.enc_s1 = init_mlp(cfg.seed, "init.enc_s1", d1 + dc, cfg.hidden, cfg.depth, cfg.specific_dim);
  sp.enc_s2 = init_mlp(cfg.seed, "init.enc_s2", d2 + dc, cfg.hidden, cfg.depth, cfg.specific_dim);

  std::vector<Tensor*> params;
  append_params(params, sh.enc_c1);
  append_params(params, sh.enc_c2);
  append_params(params, sp.enc_s1);
  append_params(params, sp.enc_s2);
  AdamState adam = make_adam_state(params, AdamConfig{.lr = cfg.lr});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batches = epoch_batches(ds.train, cfg.seed, epoch, cfg.batch_size);
    double total = 0.0;
    double shared_total = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const Tensor x1 = gather_rows(ds.x1, batches[b]);
      const Tensor x2 = gather_rows(ds.x2, batches[b]);
      Rng aug = Rng::stream(cfg.seed, "augment", {epoch, b});
      Tensor x1a = augment(x1, cfg.augment, aug, augmented_cols(ds.variant));
      Tensor x2a = augment(x2, cfg.augment, aug, augmented_cols(ds.variant));
      Tensor x1b = augment(x1, cfg.augment, aug, augmented_cols(ds.variant));
      Tensor x2b = augment(x2, cfg.augment, aug, augmented_cols(ds.variant));

      Graph g;
      const auto c1 = bind_parameters(g, sh.enc_c1, true);
      const auto c2 = bind_parameters(g, sh.enc_c2, true);
      const auto s1 = bind_parameters(g, sp.enc_s1, true);
      const auto s2 = bind_parameters(g, sp.enc_s2, true);
      View va{g.constant(std::move(x1a)), g.constant(std::move(x2a)), {}, {}};
      View vb{g.constant(std::move(x1b)), g.constant(std::move(x2b)), {}, {}};
      va.zc1 = l2_normalize_rows(mlp_forward(c1, va.x1));
      va.zc2 = l2_normalize_rows(mlp_forward(c2, va.x2));
      vb.zc1 = l2_normalize_rows(mlp_forward(c1, vb.x1));
      vb.zc2 = l2_normalize_rows(mlp_forward(c2, vb.x2));

      const Var shared = info_nce(va.zc1, va.zc2, cfg.tau);
      const Step2Terms t = step2_loss(va, vb, s1, s2, cfg.tau, cfg.lambda);
      const Var loss_var = shared + cfg.a * t.info_nce + cfg.lambda * t.orthogonal;
      const double loss = loss_var.value().item();
      check_finite(loss, "jointopt", epoch, b);
      g.backward(loss_var);

      std::vector<const Tensor*> grads;
      grads.reserve(params.size());
      append_grads(grads, c1);
      append_grads(grads, c2);
      append_grads(grads, s1);
      append_grads(grads, s2);
      adam_step(params, grads, adam);
      total += loss;
      shared_total += shared.value().item();
    }
    const double nb = static_cast<double>(batches.size());
    m.loss_trace.push_back(total / nb);
    m.shared_info_nce_trace.push_back(shared_total / nb);
  }
  sh.loss_trace = m.shared_info_nce_trace;
  sp.loss_trace = m.loss_trace;
  return m;
}

std::uint64_t checksum(const Mlp& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Tensor* p : m.parameters()) h = fnv1a64(std::as_bytes(p->data()), h);
  return h;
}

std::uint64_t checksum(const Step1Model& m) {
  return checksum(m.enc_c1) ^ (checksum(m.enc_c2) * 0x100000001b3ULL);
}

nlohmann::json to_json(const Step1Config& c) {
  return {{"beta", c.beta},         {"tau", c.tau},
          {"latent_dim", c.latent_dim}, {"hidden", c.hidden},
          {"depth", c.depth},       {"epochs", c.epochs},
          {"batch_size", c.batch_size}, {"lr", c.lr},
          {"seed", c.seed},         {"augment", augment_json(c.augment)},
          {"vmf_sampling", c.vmf_sampling}, {"kappa", c.kappa}};
}

nlohmann::json to_json(const Step2Config& c) {
  return {{"lambda", c.lambda},     {"tau", c.tau},
          {"latent_dim", c.latent_dim}, {"hidden", c.hidden},
          {"depth", c.depth},       {"epochs", c.epochs},
          {"batch_size", c.batch_size}, {"lr", c.lr},
          {"seed", c.seed},         {"augment", augment_json(c.augment)}};
}

nlohmann::json to_json(const JointOptConfig& c) {
  return {{"a", c.a},
          {"lambda", c.lambda},
          {"tau", c.tau},
          {"shared_dim", c.shared_dim},
          {"specific_dim", c.specific_dim},
          {"hidden", c.hidden},
          {"depth", c.depth},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"seed", c.seed},
          {"augment", augment_json(c.augment)}};
}

Step1Config step1_config_from_json(const nlohmann::json& j) {
  Step1Config c;
  c.beta = j.at("beta").get<double>();
  c.tau = j.at("tau").get<double>();
  c.latent_dim = j.at("latent_dim").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.depth = j.at("depth").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.lr = j.at("lr").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.augment = augment_from_json(j.at("augment"));
  c.vmf_sampling = j.at("vmf_sampling").get<bool>();
  c.kappa = j.at("kappa").get<double>();
  return c;
}

Step2Config step2_config_from_json(const nlohmann::json& j) {
  Step2Config c;
  c.lambda = j.at("lambda").get<double>();
  c.tau = j.at("tau").get<double>();
  c.latent_dim = j.at("latent_dim").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.depth = j.at("depth").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.lr = j.at("lr").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.augment = augment_from_json(j.at("augment"));
  return c;
}

JointOptConfig jointopt_config_from_json(const nlohmann::json& j) {
  JointOptConfig c;
  c.a = j.at("a").get<double>();
  c.lambda = j.at("lambda").get<double>();
  c.tau = j.at("tau").get<double>();
  c.shared_dim = j.at("shared_dim").get<std::size_t>();
  c.specific_dim = j.at("specific_dim").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.depth = j.at("depth").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.lr = j.at("lr").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.augment = augment_from_json(j.at("augment"));
  return c;
}

void save_step1(const Step1Model& m, const std::filesystem::path& manifest_path) {
  Bundle b;
  b.kind = "step1";
  b.meta = {{"config", to_json(m.config)}, {"loss_trace", m.loss_trace}};
  put_mlp(b, "enc_c1", m.enc_c1);
  put_mlp(b, "enc_c2", m.enc_c2);
  write_bundle(manifest_path, b);
}

Step1Model load_step1(const std::filesystem::path& manifest_path) {
  const Bundle b = read_kind(manifest_path, "step1");
  Step1Model m;
  try {
    m.config = step1_config_from_json(b.meta.at("config"));
    m.loss_trace = b.meta.at("loss_trace").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(manifest_path.string() + ": bad step1 metadata: " + e.what());
  }
  m.enc_c1 = get_mlp(b, "enc_c1");
  m.enc_c2 = get_mlp(b, "enc_c2");
  return m;
}

void save_step2(const Step2Model& m, const std::filesystem::path& manifest_path) {
  Bundle b;
  b.kind = "step2";
  b.meta = {{"config", to_json(m.config)}, {"loss_trace", m.loss_trace}};
  put_mlp(b, "enc_s1", m.enc_s1);
  put_mlp(b, "enc_s2", m.enc_s2);
  write_bundle(manifest_path, b);
}

Step2Model load_step2(const std::filesystem::path& manifest_path) {
  const Bundle b = read_kind(manifest_path, "step2");
  Step2Model m;
  try {
    m.config = step2_config_from_json(b.meta.at("config"));
    m.loss_trace = b.meta.at("loss_trace").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(manifest_path.string() + ": bad step2 metadata: " + e.what());
  }
  m.enc_s1 = get_mlp(b, "enc_s1");
  m.enc_s2 = get_mlp(b, "enc_s2");
  return m;
}

void save_jointopt(const JointOptModel& m, const std::filesystem::path& manifest_path) {
  Bundle b;
  b.kind = "jointopt";
  b.meta = {{"config", to_json(m.config)},
            {"loss_trace", m.loss_trace},
            {"shared_info_nce_trace", m.shared_info_nce_trace},
            {"shared_config", to_json(m.shared.config)},
            {"specific_config", to_json(m.specific.config)}};
  put_mlp(b, "enc_c1", m.shared.enc_c1);
  put_mlp(b, "enc_c2", m.shared.enc_c2);
  put_mlp(b, "enc_s1", m.specific.enc_s1);
  put_mlp(b, "enc_s2", m.specific.enc_s2);
  write_bundle(manifest_path, b);
}

JointOptModel load_jointopt(const std::filesystem::path& manifest_path) {
  const Bundle b = read_kind(manifest_path, "jointopt");
  JointOptModel m;
  try {
    m.config = jointopt_config_from_json(b.meta.at("config"));
    m.loss_trace = b.meta.at("loss_trace").get<std::vector<double>>();
    m.shared_info_nce_trace = b.meta.at("shared_info_nce_trace").get<std::vector<double>>();
    m.shared.config = step1_config_from_json(b.meta.at("shared_config"));
    m.specific.config = step2_config_from_json(b.meta.at("specific_config"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(manifest_path.string() + ": bad jointopt metadata: " + e.what());
  }
  m.shared.loss_trace = m.shared_info_nce_trace;
  m.specific.loss_trace = m.loss_trace;
  m.shared.enc_c1 = get_mlp(b, "enc_c1");
  m.shared.enc_c2 = get_mlp(b, "enc_c2");
  m.specific.enc_s1 = get_mlp(b, "enc_s1");
  m.specific.enc_s2 = get_mlp(b, "enc_s2");
  return m;
}

}  // namespace dssl
