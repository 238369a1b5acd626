#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dssl/eval.hpp"
#include "dssl/oracle.hpp"
#include "dssl/synthdata.hpp"
#include "dssl/training.hpp"

namespace dssl::cli {

/// Sectioned key/value settings backed by an INI file.
///
/// Every key has a type fixed by its default; keys before the first section
/// are global (`seed`, `out`). Unknown sections or keys, and values that do
/// not parse as the key's type, are ConfigErrors.
class RunConfig {
 public:
  RunConfig();

  static RunConfig from_ini(std::string_view text);
  static RunConfig load(const std::filesystem::path& p);

  /// `section.key=value`, or `key=value` for a global key.
  void apply_override(std::string_view assignment);
  void set(std::string_view dotted_key, std::string_view value);
  const std::string& get(std::string_view dotted_key) const;
  bool has(std::string_view dotted_key) const;

  double real(std::string_view key) const;
  std::uint64_t uint(std::string_view key) const;
  bool flag(std::string_view key) const;
  std::vector<double> reals(std::string_view key) const;
  std::vector<std::uint64_t> uints(std::string_view key) const;

  std::uint64_t seed() const { return uint("seed"); }
  std::filesystem::path out() const { return get("out"); }

  Step1Config step1() const;
  Step2Config step2() const;
  JointOptConfig jointopt() const;
  ProbeConfig probe() const;
  DecoderConfig decoder() const;
  SweepConfig sweep() const;
  CebOptions ceb() const;

  std::string to_ini() const;
  nlohmann::json to_json() const;

 private:
  enum class Kind { Real, UInt, Bool, Text, RealList, UIntList };
  struct Entry {
    Kind kind;
    std::string value;
  };
  void define(const std::string& key, Kind kind, std::string value);
  Entry& entry(std::string_view dotted_key);
  const Entry& entry(std::string_view dotted_key) const;
  static void check(const std::string& key, const Entry& e);

  std::map<std::string, Entry> entries_;  // dotted key -> entry, global keys undotted
};

/// Deterministic record of one run. Wall time lives in a separate sidecar so
/// repeated runs produce identical reports.
struct RunReport {
  std::string command;
  std::uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json metrics = nlohmann::json::object();
  std::map<std::string, std::string> inputs;     // path -> git blob hash of the manifest
  std::map<std::string, std::string> artifacts;  // file name in the output dir -> git blob hash
};

nlohmann::json to_json(const RunReport& r);
RunReport report_from_json(const nlohmann::json& j);
RunReport load_report(const std::filesystem::path& p);

/// Plain-text table of the scalar metrics of several reports.
std::string render_reports(const std::vector<std::pair<std::string, RunReport>>& reports);

/// Sweep worker count: DSSL_THREADS if set, else the configured value, else
/// the hardware concurrency.
std::size_t resolve_threads(std::size_t configured);

/// Runs one command line (argv[0] excluded). Output files go to the configured
/// output directory; human-readable results go to `out`, one-line JSON errors
/// to `err`. Returns 0, 2 (bad config or usage), 3 (numeric divergence),
/// 4 (missing input) or 1 (anything else).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dssl::cli
