#include "dssl/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "dssl/bundle.hpp"
#include "dssl/error.hpp"

namespace dssl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  s = trim(s);
  if (s.empty()) return out;
  std::size_t pos = 0;
  for (;;) {
    const auto comma = s.find(',', pos);
    out.push_back(trim(s.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

bool parse_real(std::string_view s, double& v) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(v);
}

bool parse_uint(std::string_view s, std::uint64_t& v) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

// Global keys first, then sections in this order.
const std::vector<std::string> kSections{"data",  "inputs", "step1",  "step2",
                                         "jointopt", "eval", "sweep", "oracle"};

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

RunConfig::RunConfig() {
  define("seed", Kind::UInt, "0");
  define("out", Kind::Text, "run");

  define("data.n", Kind::UInt, "20000");
  define("data.variant", Kind::Text, "plain");

  // Empty input paths default to the conventional file in the output dir.
  define("inputs.data", Kind::Text, "");
  define("inputs.step1", Kind::Text, "");
  define("inputs.step2", Kind::Text, "");

  const Step1Config s1;
  define("step1.beta", Kind::Real, shortest(s1.beta));
  define("step1.tau", Kind::Real, shortest(s1.tau));
  define("step1.latent_dim", Kind::UInt, std::to_string(s1.latent_dim));
  define("step1.hidden", Kind::UInt, std::to_string(s1.hidden));
  define("step1.depth", Kind::UInt, std::to_string(s1.depth));
  define("step1.epochs", Kind::UInt, std::to_string(s1.epochs));
  define("step1.batch_size", Kind::UInt, std::to_string(s1.batch_size));
  define("step1.lr", Kind::Real, shortest(s1.lr));
  define("step1.noise_sigma", Kind::Real, shortest(s1.augment.noise_sigma));
  define("step1.dropout_rate", Kind::Real, shortest(s1.augment.dropout_rate));
  define("step1.vmf_sampling", Kind::Bool, s1.vmf_sampling ? "true" : "false");
  define("step1.kappa", Kind::Real, shortest(s1.kappa));

  const Step2Config s2;
  define("step2.lambda", Kind::Real, shortest(s2.lambda));
  define("step2.tau", Kind::Real, shortest(s2.tau));
  define("step2.latent_dim", Kind::UInt, std::to_string(s2.latent_dim));
  define("step2.hidden", Kind::UInt, std::to_string(s2.hidden));
  define("step2.depth", Kind::UInt, std::to_string(s2.depth));
  define("step2.epochs", Kind::UInt, std::to_string(s2.epochs));
  define("step2.batch_size", Kind::UInt, std::to_string(s2.batch_size));
  define("step2.lr", Kind::Real, shortest(s2.lr));
  define("step2.noise_sigma", Kind::Real, shortest(s2.augment.noise_sigma));
  define("step2.dropout_rate", Kind::Real, shortest(s2.augment.dropout_rate));

  const JointOptConfig j;
  define("jointopt.a", Kind::Real, shortest(j.a));
  define("jointopt.lambda", Kind::Real, shortest(j.lambda));
  define("jointopt.tau", Kind::Real, shortest(j.tau));
  define("jointopt.shared_dim", Kind::UInt, std::to_string(j.shared_dim));
  define("jointopt.specific_dim", Kind::UInt, std::to_string(j.specific_dim));
  define("jointopt.hidden", Kind::UInt, std::to_string(j.hidden));
  define("jointopt.depth", Kind::UInt, std::to_string(j.depth));
  define("jointopt.epochs", Kind::UInt, std::to_string(j.epochs));
  define("jointopt.batch_size", Kind::UInt, std::to_string(j.batch_size));
  define("jointopt.lr", Kind::Real, shortest(j.lr));
  define("jointopt.noise_sigma", Kind::Real, shortest(j.augment.noise_sigma));
  define("jointopt.dropout_rate", Kind::Real, shortest(j.augment.dropout_rate));

  const ProbeConfig p;
  const DecoderConfig d;
  define("eval.probe_reg", Kind::Real, shortest(p.reg));
  define("eval.probe_steps", Kind::UInt, std::to_string(p.steps));
  define("eval.probe_lr", Kind::Real, shortest(p.lr));
  define("eval.retrieval_ns", Kind::UIntList, "1,5,10,20,30");
  define("eval.decoder_hidden", Kind::UInt, std::to_string(d.hidden));
  define("eval.decoder_epochs", Kind::UInt, std::to_string(d.epochs));
  define("eval.decoder_batch_size", Kind::UInt, std::to_string(d.batch_size));
  define("eval.decoder_lr", Kind::Real, shortest(d.lr));

  define("sweep.betas", Kind::RealList, "0,0.1,1,10,100");
  define("sweep.lambdas", Kind::RealList, "0,0.01,1,100");
  define("sweep.seeds", Kind::UIntList, "0,1,2");
  define("sweep.threads", Kind::UInt, "0");

  const CebOptions o;
  define("oracle.joint", Kind::Text, "");
  define("oracle.joint_file", Kind::Text, "");
  define("oracle.betas", Kind::RealList,
         "0.01,0.0231,0.0534,0.123,0.285,0.658,1.52,3.51,8.11,18.7,43.3,100");
  define("oracle.beta", Kind::Real, "1");
  define("oracle.z_size", Kind::UInt, "0");
  define("oracle.iters", Kind::UInt, std::to_string(o.iters));
  define("oracle.restarts", Kind::UInt, std::to_string(o.restarts));
  define("oracle.tol", Kind::Real, shortest(o.tol));
  define("oracle.encoders", Kind::UInt, "100");
}

void RunConfig::define(const std::string& key, Kind kind, std::string value) {
  entries_[key] = Entry{kind, std::move(value)};
}

RunConfig::Entry& RunConfig::entry(std::string_view dotted_key) {
  auto it = entries_.find(std::string(dotted_key));
  if (it == entries_.end()) throw ConfigError("unknown config key '" + std::string(dotted_key) + "'");
  return it->second;
}

const RunConfig::Entry& RunConfig::entry(std::string_view dotted_key) const {
  auto it = entries_.find(std::string(dotted_key));
  if (it == entries_.end()) throw ConfigError("unknown config key '" + std::string(dotted_key) + "'");
  return it->second;
}

bool RunConfig::has(std::string_view dotted_key) const { return entries_.contains(std::string(dotted_key)); }

void RunConfig::check(const std::string& key, const Entry& e) {
  auto bad = [&](const char* what) {
    return ConfigError("config key '" + key + "': '" + e.value + "' is not " + what);
  };
  double d = 0.0;
  std::uint64_t u = 0;
  switch (e.kind) {
    case Kind::Real:
      if (!parse_real(e.value, d)) throw bad("a finite number");
      break;
    case Kind::UInt:
      if (!parse_uint(e.value, u)) throw bad("a non-negative integer");
      break;
    case Kind::Bool:
      if (e.value != "true" && e.value != "false" && e.value != "1" && e.value != "0")
        throw bad("a boolean");
      break;
    case Kind::Text:
      break;
    case Kind::RealList:
      for (auto s : split_list(e.value))
        if (!parse_real(s, d)) throw bad("a list of finite numbers");
      break;
    case Kind::UIntList:
      for (auto s : split_list(e.value))
        if (!parse_uint(s, u)) throw bad("a list of non-negative integers");
      break;
  }
}

void RunConfig::set(std::string_view dotted_key, std::string_view value) {
  Entry& e = entry(dotted_key);
  Entry next{e.kind, std::string(trim(value))};
  check(std::string(dotted_key), next);
  e = std::move(next);
}

const std::string& RunConfig::get(std::string_view dotted_key) const { return entry(dotted_key).value; }

void RunConfig::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

RunConfig RunConfig::from_ini(std::string_view text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream is{std::string(text)};
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig cfg;
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      cfg.set(name, node.data());
      continue;
    }
    for (const auto& [key, leaf] : node) cfg.set(name + "." + key, leaf.data());
  }
  return cfg;
}

RunConfig RunConfig::load(const fs::path& p) {
  if (!fs::exists(p)) throw MissingInputError(p.string(), "config file not found");
  return from_ini(read_text_file(p));
}

double RunConfig::real(std::string_view key) const {
  const Entry& e = entry(key);
  double v = 0.0;
  if (e.kind != Kind::Real || !parse_real(e.value, v)) throw UsageError("config key is not real: " + std::string(key));
  return v;
}

std::uint64_t RunConfig::uint(std::string_view key) const {
  const Entry& e = entry(key);
  std::uint64_t v = 0;
  if (e.kind != Kind::UInt || !parse_uint(e.value, v)) throw UsageError("config key is not integer: " + std::string(key));
  return v;
}

bool RunConfig::flag(std::string_view key) const {
  const Entry& e = entry(key);
  if (e.kind != Kind::Bool) throw UsageError("config key is not boolean: " + std::string(key));
  return e.value == "true" || e.value == "1";
}

std::vector<double> RunConfig::reals(std::string_view key) const {
  const Entry& e = entry(key);
  if (e.kind != Kind::RealList) throw UsageError("config key is not a real list: " + std::string(key));
  std::vector<double> out;
  for (auto s : split_list(e.value)) {
    double v = 0.0;
    parse_real(s, v);
    out.push_back(v);
  }
  return out;
}

std::vector<std::uint64_t> RunConfig::uints(std::string_view key) const {
  const Entry& e = entry(key);
  if (e.kind != Kind::UIntList) throw UsageError("config key is not an integer list: " + std::string(key));
  std::vector<std::uint64_t> out;
  for (auto s : split_list(e.value)) {
    std::uint64_t v = 0;
    parse_uint(s, v);
    out.push_back(v);
  }
  return out;
}

Step1Config RunConfig::step1() const {
  Step1Config c;
  c.beta = real("step1.beta");
  c.tau = real("step1.tau");
  c.latent_dim = uint("step1.latent_dim");
  c.hidden = uint("step1.hidden");
  c.depth = uint("step1.depth");
  c.epochs = uint("step1.epochs");
  c.batch_size = uint("step1.batch_size");
  c.lr = real("step1.lr");
  c.seed = seed();
  c.augment = {real("step1.noise_sigma"), real("step1.dropout_rate")};
  c.vmf_sampling = flag("step1.vmf_sampling");
  c.kappa = real("step1.kappa");
  c.validate();
  return c;
}

Step2Config RunConfig::step2() const {
  Step2Config c;
  c.lambda = real("step2.lambda");
  c.tau = real("step2.tau");
  c.latent_dim = uint("step2.latent_dim");
  c.hidden = uint("step2.hidden");
  c.depth = uint("step2.depth");
  c.epochs = uint("step2.epochs");
  c.batch_size = uint("step2.batch_size");
  c.lr = real("step2.lr");
  c.seed = seed();
  c.augment = {real("step2.noise_sigma"), real("step2.dropout_rate")};
  c.validate();
  return c;
}

JointOptConfig RunConfig::jointopt() const {
  JointOptConfig c;
  c.a = real("jointopt.a");
  c.lambda = real("jointopt.lambda");
  c.tau = real("jointopt.tau");
  c.shared_dim = uint("jointopt.shared_dim");
  c.specific_dim = uint("jointopt.specific_dim");
  c.hidden = uint("jointopt.hidden");
  c.depth = uint("jointopt.depth");
  c.epochs = uint("jointopt.epochs");
  c.batch_size = uint("jointopt.batch_size");
  c.lr = real("jointopt.lr");
  c.seed = seed();
  c.augment = {real("jointopt.noise_sigma"), real("jointopt.dropout_rate")};
  c.validate();
  return c;
}

ProbeConfig RunConfig::probe() const {
  ProbeConfig p;
  p.reg = real("eval.probe_reg");
  p.steps = uint("eval.probe_steps");
  p.lr = real("eval.probe_lr");
  if (p.reg < 0.0 || p.lr <= 0.0) throw ConfigError("eval: probe_reg must be >= 0 and probe_lr > 0");
  return p;
}

DecoderConfig RunConfig::decoder() const {
  DecoderConfig d;
  d.hidden = uint("eval.decoder_hidden");
  d.epochs = uint("eval.decoder_epochs");
  d.batch_size = uint("eval.decoder_batch_size");
  d.lr = real("eval.decoder_lr");
  d.seed = seed();
  if (d.hidden == 0 || d.epochs == 0 || d.batch_size == 0 || d.lr <= 0.0)
    throw ConfigError("eval: decoder settings must be positive");
  return d;
}

SweepConfig RunConfig::sweep() const {
  SweepConfig s;
  s.step1 = step1();
  s.step2 = step2();
  s.betas = reals("sweep.betas");
  s.lambdas = reals("sweep.lambdas");
  s.seeds = uints("sweep.seeds");
  s.probe = probe();
  s.threads = resolve_threads(uint("sweep.threads"));
  s.validate();
  return s;
}

CebOptions RunConfig::ceb() const {
  CebOptions o;
  o.iters = uint("oracle.iters");
  o.restarts = uint("oracle.restarts");
  o.tol = real("oracle.tol");
  o.seed = seed();
  return o;
}

std::string RunConfig::to_ini() const {
  std::ostringstream os;
  for (const auto& [key, e] : entries_)
    if (key.find('.') == std::string::npos) os << key << " = " << e.value << '\n';
  for (const std::string& section : kSections) {
    os << "\n[" << section << "]\n";
    const std::string prefix = section + ".";
    for (const auto& [key, e] : entries_)
      if (key.starts_with(prefix)) os << key.substr(prefix.size()) << " = " << e.value << '\n';
  }
  return os.str();
}

json RunConfig::to_json() const {
  json j = json::object();
  for (const auto& [key, e] : entries_) {
    const auto dot = key.find('.');
    if (dot == std::string::npos)
      j[key] = e.value;
    else
      j[key.substr(0, dot)][key.substr(dot + 1)] = e.value;
  }
  return j;
}

// ---------------------------------------------------------------------------
// RunReport

json to_json(const RunReport& r) {
  return {{"command", r.command}, {"seed", r.seed},           {"config", r.config},
          {"metrics", r.metrics}, {"inputs", r.inputs},       {"artifacts", r.artifacts}};
}

RunReport report_from_json(const json& j) {
  try {
    RunReport r;
    r.command = j.at("command").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config = j.at("config");
    r.metrics = j.at("metrics");
    r.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    r.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
    return r;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("report: ") + e.what());
  }
}

RunReport load_report(const fs::path& p) {
  if (!fs::exists(p)) throw MissingInputError(p.string(), "report not found");
  try {
    return report_from_json(json::parse(read_text_file(p)));
  } catch (const json::parse_error& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

namespace {

std::string scalar_text(const json& v) {
  if (v.is_number_float()) {
    std::ostringstream os;
    os << std::setprecision(6) << v.get<double>();
    return os.str();
  }
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

void flatten(const json& v, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out) {
  if (v.is_object()) {
    for (const auto& [k, child] : v.items()) {
      // Per-result echoes of settings are already in the config section.
      if (!prefix.empty() && (k == "config" || k == "label")) continue;
      flatten(child, prefix.empty() ? k : prefix + "." + k, out);
    }
  } else if (v.is_array()) {
    const bool numeric = std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number(); });
    if (numeric && v.size() <= 6) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + scalar_text(v[i]);
      out.emplace_back(prefix, s);
    } else if (numeric) {
      out.emplace_back(prefix, "[" + std::to_string(v.size()) + "] first " + scalar_text(v.front()) + " last " +
                                   scalar_text(v.back()));
    } else {
      out.emplace_back(prefix, "[" + std::to_string(v.size()) + " items]");
    }
  } else {
    out.emplace_back(prefix, scalar_text(v));
  }
}

}  // namespace

std::string render_reports(const std::vector<std::pair<std::string, RunReport>>& reports) {
  std::vector<std::array<std::string, 4>> rows{{"run", "command", "metric", "value"}};
  for (const auto& [name, r] : reports) {
    std::vector<std::pair<std::string, std::string>> flat;
    flatten(r.metrics, "", flat);
    for (const auto& [k, v] : flat) rows.push_back({name, r.command, k, v});
  }
  std::array<std::size_t, 4> width{};
  for (const auto& row : rows)
    for (std::size_t c = 0; c < 4; ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream os;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < 4; ++c) {
      os << rows[i][c];
      if (c < 3) os << std::string(width[c] - rows[i][c].size() + 2, ' ');
    }
    os << '\n';
    if (i == 0) {
      for (std::size_t c = 0; c < 4; ++c) os << std::string(width[c], '-') << (c < 3 ? "  " : "");
      os << '\n';
    }
  }
  return os.str();
}

std::size_t resolve_threads(std::size_t configured) {
  if (const char* env = std::getenv("DSSL_THREADS"); env != nullptr && *env != '\0') {
    std::uint64_t v = 0;
    if (!parse_uint(trim(env), v) || v == 0) throw ConfigError("DSSL_THREADS must be a positive integer");
    return v;
  }
  if (configured > 0) return configured;
  return std::max(1u, std::thread::hardware_concurrency());
}

// ---------------------------------------------------------------------------
// Commands

namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::vector<std::string> shortcuts;  // flag-derived overrides, applied before --override
  std::optional<std::uint64_t> seed;
  std::string out;
};

class Session {
 public:
  Session(std::string tag, const CommonOptions& opt) : tag_(std::move(tag)), start_(Clock::now()) {
    if (!opt.config_path.empty()) cfg_ = RunConfig::load(opt.config_path);
    for (const auto& s : opt.shortcuts) cfg_.apply_override(s);
    if (!opt.out.empty()) cfg_.set("out", opt.out);
    for (const auto& o : opt.overrides) cfg_.apply_override(o);
    if (opt.seed) cfg_.set("seed", std::to_string(*opt.seed));
    report_.command = tag_;
  }

  RunConfig& cfg() { return cfg_; }
  RunReport& report() { return report_; }
  fs::path out_dir() const { return cfg_.out(); }
  fs::path artifact(const std::string& name) {
    artifacts_.push_back(name);
    return out_dir() / name;
  }

  /// Resolves an input path (empty: `fallback` in the output dir), records it
  /// in the config and its hash in the report.
  fs::path input(const std::string& key, const std::string& fallback) {
    std::string p = cfg_.get(key);
    if (p.empty()) {
      p = (out_dir() / fallback).string();
      cfg_.set(key, p);
    }
    if (!fs::exists(p)) throw MissingInputError(p, "missing input '" + key + "'");
    report_.inputs[p] = file_git_hash(p);
    return p;
  }

  /// Like input(), but an empty key resolves to "-" (unused) when the
  /// fallback file does not exist.
  std::optional<fs::path> optional_input(const std::string& key, const std::string& fallback) {
    const std::string p = cfg_.get(key);
    if (p == "-") return std::nullopt;
    if (p.empty() && !fs::exists(out_dir() / fallback)) {
      cfg_.set(key, "-");
      return std::nullopt;
    }
    return input(key, fallback);
  }

  void prepare() { fs::create_directories(out_dir()); }

  fs::path finish() {
    prepare();
    const std::string cfg_name = tag_ + ".config.ini";
    write_text_file(out_dir() / cfg_name, cfg_.to_ini());
    artifacts_.push_back(cfg_name);
    report_.seed = cfg_.seed();
    report_.config = cfg_.to_json();
    for (const auto& a : artifacts_) {
      const fs::path p = out_dir() / a;
      report_.artifacts[a] = file_git_hash(p);
      // Bundles keep their values in a sibling blob.
      if (fs::path blob = fs::path(p).replace_extension(".bin"); p.extension() == ".json" && fs::exists(blob))
        report_.artifacts[fs::path(a).replace_extension(".bin").string()] = file_git_hash(blob);
    }
    const fs::path report_path = out_dir() / (tag_ + ".report.json");
    write_text_file(report_path, to_json(report_).dump(2) + "\n");
    const double secs = std::chrono::duration<double>(Clock::now() - start_).count();
    write_text_file(out_dir() / (tag_ + ".timing.json"), json{{"wall_time_s", secs}}.dump() + "\n");
    return report_path;
  }

 private:
  using Clock = std::chrono::steady_clock;
  std::string tag_;
  Clock::time_point start_;
  RunConfig cfg_;
  RunReport report_;
  std::vector<std::string> artifacts_;
};

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

json probe_json(const SynthDataset& ds, const Tensor& z, const ProbeConfig& cfg) {
  json out = json::object();
  const std::pair<const char*, const std::vector<int>*> labels[]{
      {"yc", &ds.labels.yc}, {"ys1", &ds.labels.ys1}, {"ys2", &ds.labels.ys2}};
  const Tensor ztr = gather_rows(z, ds.train), zte = gather_rows(z, ds.test);
  for (const auto& [name, y] : labels) {
    std::vector<int> ytr, yte;
    for (auto i : ds.train) ytr.push_back((*y)[i]);
    for (auto i : ds.test) yte.push_back((*y)[i]);
    out[name] = to_json(linear_probe(ztr, ytr, zte, yte, cfg, name));
  }
  return out;
}

DiscreteJoint oracle_joint(Session& s) {
  const std::string inline_csv = s.cfg().get("oracle.joint");
  const std::string file = s.cfg().get("oracle.joint_file");
  if (!inline_csv.empty() && !file.empty()) throw ConfigError("oracle: set only one of joint and joint_file");
  if (!inline_csv.empty()) return parse_joint_csv(inline_csv);
  if (file.empty()) throw ConfigError("oracle: no joint given (--joint or --joint-file)");
  if (!fs::exists(file)) throw MissingInputError(file, "joint file not found");
  s.report().inputs[file] = file_git_hash(file);
  return parse_joint_csv(read_text_file(file));
}

json coords_row(const CebResult& r) {
  json j = to_json(r.coords);
  j["lagrangian"] = r.lagrangian;
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  return j;
}

void cmd_synth(const CommonOptions& opt, std::ostream& out) {
  Session s("synth", opt);
  const SynthDataset ds =
      generate(s.cfg().uint("data.n"), s.cfg().seed(), parse_variant(s.cfg().get("data.variant")));
  s.prepare();
  save_dataset(ds, s.artifact("dataset.json"));
  s.report().metrics = {{"n", ds.size()},
                        {"variant", std::string(to_string(ds.variant))},
                        {"train", ds.train.size()},
                        {"test", ds.test.size()}};
  out << s.finish().string() << '\n';
}

void cmd_train(const std::string& which, const CommonOptions& opt, std::ostream& out) {
  Session s("train-" + which, opt);
  const SynthDataset ds = load_dataset(s.input("inputs.data", "dataset.json"));
  json& m = s.report().metrics;
  if (which == "step1") {
    const Step1Config c = s.cfg().step1();
    const Step1Model model = train_step1(ds, c);
    s.prepare();
    save_step1(model, s.artifact("step1.json"));
    m = {{"loss_trace", model.loss_trace}, {"final_loss", model.loss_trace.back()}, {"checksum", hex64(checksum(model))}};
  } else if (which == "step2") {
    const Step1Model m1 = load_step1(s.input("inputs.step1", "step1.json"));
    const Step2Config c = s.cfg().step2();
    const Step2Model model = train_step2(ds, m1, c);
    s.prepare();
    save_step2(model, s.artifact("step2.json"));
    m = {{"loss_trace", model.loss_trace},
         {"final_loss", model.loss_trace.back()},
         {"step1_checksum", hex64(checksum(m1))},
         {"checksum", hex64(checksum(model.enc_s1) ^ checksum(model.enc_s2))}};
  } else {
    const JointOptConfig c = s.cfg().jointopt();
    const JointOptModel model = train_jointopt(ds, c);
    s.prepare();
    save_jointopt(model, s.artifact("jointopt.json"));
    m = {{"loss_trace", model.loss_trace},
         {"shared_info_nce_trace", model.shared_info_nce_trace},
         {"final_loss", model.loss_trace.back()},
         {"checksum", hex64(checksum(model.shared))}};
  }
  out << s.finish().string() << '\n';
}

void cmd_eval(const std::string& which, const CommonOptions& opt, std::ostream& out) {
  Session s("eval-" + which, opt);
  const SynthDataset ds = load_dataset(s.input("inputs.data", "dataset.json"));
  const Step1Model m1 = load_step1(s.input("inputs.step1", "step1.json"));
  json& m = s.report().metrics;
  if (which == "probe") {
    const ProbeConfig pc = s.cfg().probe();
    m["zc"] = probe_json(ds, shared_representation(ds, m1), pc);
    if (auto p2 = s.optional_input("inputs.step2", "step2.json")) {
      const Step2Model m2 = load_step2(*p2);
      m["zs1"] = probe_json(ds, encode_specific(m2, m1, ds.x1, 1), pc);
      m["zs2"] = probe_json(ds, encode_specific(m2, m1, ds.x2, 2), pc);
    }
  } else if (which == "retrieval") {
    std::vector<std::size_t> ns;
    for (auto n : s.cfg().uints("eval.retrieval_ns")) ns.push_back(n);
    const Tensor zq = encode_shared(m1, gather_rows(ds.x1, ds.test), 1);
    const Tensor zk = encode_shared(m1, gather_rows(ds.x2, ds.test), 2);
    const RetrievalResult r = retrieval(zq, zk, ns);
    m = to_json(r);
    json base = json::array();
    for (auto n : r.ns) base.push_back(static_cast<double>(n) / static_cast<double>(r.gallery_size));
    m["random_baseline"] = base;
  } else {
    const Step2Model m2 = load_step2(s.input("inputs.step2", "step2.json"));
    const DecoderConfig dc = s.cfg().decoder();
    for (int mod : {1, 2}) {
      const Tensor& x = mod == 1 ? ds.x1 : ds.x2;
      const Tensor zc = encode_shared(m1, x, mod), zs = encode_specific(m2, m1, x, mod);
      const RgResult r = reconstruction_gain(gather_rows(zc, ds.train), gather_rows(zs, ds.train),
                                             gather_rows(x, ds.train), gather_rows(zc, ds.test),
                                             gather_rows(zs, ds.test), gather_rows(x, ds.test), dc);
      m["modality" + std::to_string(mod)] = to_json(r);
    }
  }
  out << s.finish().string() << '\n';
}

void cmd_sweep(const CommonOptions& opt, std::ostream& out) {
  Session s("sweep", opt);
  const SynthDataset ds = load_dataset(s.input("inputs.data", "dataset.json"));
  const SweepConfig sc = s.cfg().sweep();
  s.cfg().set("sweep.threads", std::to_string(sc.threads));
  const std::vector<FrontierPoint> pts = sweep(ds, sc);
  s.prepare();
  write_text_file(s.artifact("frontier.csv"), frontier_csv(pts));
  s.report().metrics = {{"rows", pts.size()},
                        {"betas", sc.betas.size()},
                        {"lambdas", sc.lambdas.size()},
                        {"seeds", sc.seeds.size()}};
  out << s.finish().string() << '\n';
}

void cmd_oracle(const std::string& which, const CommonOptions& opt, std::ostream& out) {
  Session s("oracle-" + which, opt);
  const DiscreteJoint joint = oracle_joint(s);
  const std::size_t z_cfg = s.cfg().uint("oracle.z_size");
  json& m = s.report().metrics;
  m["i_x1_x2"] = mutual_info(joint);
  if (which == "curve") {
    const std::size_t z = z_cfg ? z_cfg : joint.rows();
    const IbCurve c = ib_curve(joint, s.cfg().reals("oracle.betas"), z, s.cfg().ceb());
    std::ostringstream csv;
    csv << "beta,i_z_x1,i_z_x2,i_x1_x2,i_z_x1_given_x2,delta_c,lagrangian,converged\n";
    json points = json::array();
    for (const CebResult& r : c.points) {
      const InfoCoords& k = r.coords;
      csv << format_real(k.beta) << ',' << format_real(k.i_z_x1) << ',' << format_real(k.i_z_x2) << ','
          << format_real(k.i_x1_x2) << ',' << format_real(k.i_z_x1_given_x2) << ',' << format_real(k.delta_c)
          << ',' << format_real(r.lagrangian) << ',' << (r.converged ? 1 : 0) << '\n';
      points.push_back(coords_row(r));
    }
    m["points"] = points;
    m["hull"] = c.hull;
    m["z_size"] = z;
    s.prepare();
    write_text_file(s.artifact("curve.csv"), csv.str());
    out << csv.str();
  } else if (which == "mni") {
    const MniVerdict v = mni_check(joint);
    m["verdict"] = to_json(v);
    if (v.tag != MniTag::UnattainableFullSupport && v.tag != MniTag::Unknown)
      m["witness_coords"] = to_json(info_coords(joint, mni_witness_encoder(joint), 1.0));
    s.prepare();
    write_text_file(s.artifact("verdict.json"), to_json(v).dump(2) + "\n");
    out << to_json(v).dump() << '\n';
  } else {
    const std::size_t z = z_cfg ? z_cfg : std::min<std::size_t>(joint.rows(), 4);
    const Prop4Report r = verify_prop4(joint, s.cfg().real("oracle.beta"), z, s.cfg().uint("oracle.encoders"),
                                       s.cfg().seed(), s.cfg().ceb());
    m["delta_c"] = r.delta_c;
    m["min_gap"] = r.min_gap;
    m["max_gap"] = r.max_gap;
    m["constant_gap"] = r.constant_gap;
    m["encoders_checked"] = r.encoders_checked;
    m["within_bounds"] = r.within_bounds;
    m["zc2"] = coords_row(r.zc2);
    out << "prop4 " << (r.within_bounds ? "holds" : "violated") << ": gap in [" << format_real(r.min_gap) << ", "
        << format_real(r.max_gap) << "], delta_c = " << format_real(r.delta_c) << '\n';
  }
  s.finish();
}

void cmd_report(const std::vector<std::string>& paths, std::ostream& out) {
  std::vector<std::pair<std::string, RunReport>> reports;
  for (const std::string& p : paths) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(p))
        if (e.path().filename().string().ends_with(".report.json")) files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) reports.emplace_back(f.string(), load_report(f));
    } else {
      reports.emplace_back(p, load_report(p));
    }
  }
  if (reports.empty()) throw MissingInputError(paths.empty() ? "" : paths.front(), "no reports found");
  out << render_reports(reports);
}

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--config,-c", o.config_path, "INI config file");
  app->add_option("--override,-o", o.overrides, "section.key=value, applied after the config file");
  app->add_option("--seed", o.seed, "global seed, overrides the config");
  app->add_option("--out", o.out, "output directory");
}

void add_shortcut(CLI::App* app, const std::string& flag, const std::string& key, CommonOptions& o,
                  const std::string& help) {
  app->add_option_function<std::string>(
      flag, [&o, key](const std::string& v) { o.shortcuts.push_back(key + "=" + v); }, help);
}

void emit_error(std::ostream& err, const char* kind, const std::string& msg) {
  err << json{{"error", kind}, {"message", msg}}.dump() << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Disentangled shared/specific representation learning toolkit", "dssl"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");
  CommonOptions o;
  std::string action;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth, o);
  add_shortcut(synth, "--n", "data.n", o, "number of samples");
  add_shortcut(synth, "--variant", "data.variant", o, "plain | mixed");

  auto* train = app.add_subcommand("train", "train encoders");
  train->require_subcommand(1);
  for (const char* which : {"step1", "step2", "jointopt"}) {
    auto* sub = train->add_subcommand(which);
    add_common(sub, o);
    add_shortcut(sub, "--data", "inputs.data", o, "dataset manifest");
    if (std::string(which) == "step2") add_shortcut(sub, "--step1", "inputs.step1", o, "step-1 checkpoint");
    sub->callback([&action, which] { action = std::string("train ") + which; });
  }

  auto* eval = app.add_subcommand("eval", "evaluate trained encoders");
  eval->require_subcommand(1);
  for (const char* which : {"probe", "retrieval", "rg"}) {
    auto* sub = eval->add_subcommand(which);
    add_common(sub, o);
    add_shortcut(sub, "--data", "inputs.data", o, "dataset manifest");
    add_shortcut(sub, "--step1", "inputs.step1", o, "step-1 checkpoint");
    if (std::string(which) != "retrieval") add_shortcut(sub, "--step2", "inputs.step2", o, "step-2 checkpoint");
    sub->callback([&action, which] { action = std::string("eval ") + which; });
  }

  auto* sw = app.add_subcommand("sweep", "beta/lambda grid with probes, written as a frontier CSV");
  add_common(sw, o);
  add_shortcut(sw, "--data", "inputs.data", o, "dataset manifest");
  add_shortcut(sw, "--threads", "sweep.threads", o, "worker threads (0: all cores)");

  auto* oracle = app.add_subcommand("oracle", "exact discrete information-theoretic checks");
  oracle->require_subcommand(1);
  for (const char* which : {"curve", "mni", "prop-check"}) {
    auto* sub = oracle->add_subcommand(which);
    add_common(sub, o);
    add_shortcut(sub, "--joint", "oracle.joint", o, "inline joint, rows separated by ';' or newlines");
    add_shortcut(sub, "--joint-file", "oracle.joint_file", o, "CSV file holding the joint");
    sub->callback([&action, which] { action = std::string("oracle ") + which; });
  }

  std::vector<std::string> report_paths;
  auto* report = app.add_subcommand("report", "plain-text table of run reports");
  report->add_option("paths", report_paths, "report files or run directories")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    emit_error(err, "usage", e.what());
    return 2;
  }

  try {
    if (synth->parsed())
      cmd_synth(o, out);
    else if (sw->parsed())
      cmd_sweep(o, out);
    else if (report->parsed())
      cmd_report(report_paths, out);
    else if (action.starts_with("train "))
      cmd_train(action.substr(6), o, out);
    else if (action.starts_with("eval "))
      cmd_eval(action.substr(5), o, out);
    else if (action.starts_with("oracle "))
      cmd_oracle(action.substr(7), o, out);
    return 0;
  } catch (const ConfigError& e) {
    emit_error(err, "config", e.what());
    return 2;
  } catch (const UsageError& e) {
    emit_error(err, "usage", e.what());
    return 2;
  } catch (const NumericError& e) {
    emit_error(err, "numeric", e.what());
    return 3;
  } catch (const MissingInputError& e) {
    emit_error(err, "missing_input", e.what());
    return 4;
  } catch (const DegenerateInputError& e) {
    emit_error(err, "degenerate_input", e.what());
    return 1;
  } catch (const std::exception& e) {
    emit_error(err, "internal", e.what());
    return 1;
  }
}

}  // namespace dssl::cli
