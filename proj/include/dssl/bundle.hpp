#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dssl/tensor.hpp"

namespace dssl {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Named tensors stored as a JSON manifest plus a flat little-endian f64 blob.
///
/// Manifest layout:
///   { "format": "dssl-bundle-v1", "kind": ..., "meta": {...},
///     "blob": "<file next to the manifest>", "blob_bytes": N, "blob_sha1": "...",
///     "tensors": [ {"name", "rows", "cols", "offset"} ... ] }
/// Offsets are byte offsets into the blob. Values round-trip bit-exactly.
struct Bundle {
  std::string kind;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const Tensor& get(std::string_view name) const;
  bool contains(std::string_view name) const;
};

/// Writes `<stem>.json` and `<stem>.bin`. Returns the manifest path.
std::filesystem::path write_bundle(const std::filesystem::path& manifest_path, const Bundle& b);
/// Throws MissingInputError if the manifest or blob is absent, ConfigError if malformed.
Bundle read_bundle(const std::filesystem::path& manifest_path);

std::string sha1_hex(std::span<const std::byte> bytes);
/// git's object id for a blob: sha1("blob <len>\0" + content).
std::string git_blob_hash(std::string_view content);
/// git_blob_hash of a file's contents.
std::string file_git_hash(const std::filesystem::path& p);

std::string read_text_file(const std::filesystem::path& p);
void write_text_file(const std::filesystem::path& p, std::string_view content);

/// 17 significant digits, enough for an exact round trip.
std::string format_real(double v);

}  // namespace dssl
