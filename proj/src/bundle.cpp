#include "dssl/bundle.hpp"

#include <openssl/sha.h>

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dssl/error.hpp"

namespace dssl {

static_assert(std::endian::native == std::endian::little,
              "bundle blobs are written as native little-endian doubles");

namespace fs = std::filesystem;
using nlohmann::json;

const Tensor& Bundle::get(std::string_view name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t.tensor;
  throw ConfigError("bundle: no tensor named '" + std::string(name) + "'");
}

bool Bundle::contains(std::string_view name) const {
  for (const auto& t : tensors)
    if (t.name == name) return true;
  return false;
}

std::string sha1_hex(std::span<const std::byte> bytes) {
  unsigned char md[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), md);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned char c : md) {
    out.push_back(kHex[c >> 4]);
    out.push_back(kHex[c & 0xF]);
  }
  return out;
}

std::string git_blob_hash(std::string_view content) {
  std::string obj = "blob " + std::to_string(content.size());
  obj.push_back('\0');
  obj.append(content);
  return sha1_hex(std::as_bytes(std::span(obj.data(), obj.size())));
}

std::string read_text_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw MissingInputError(p.string(), "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& p, std::string_view content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write file: " + p.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

std::string file_git_hash(const fs::path& p) { return git_blob_hash(read_text_file(p)); }

std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

fs::path write_bundle(const fs::path& manifest_path, const Bundle& b) {
  fs::path blob_path = manifest_path;
  blob_path.replace_extension(".bin");

  std::string blob;
  json entries = json::array();
  for (const auto& nt : b.tensors) {
    const std::size_t offset = blob.size();
    const auto bytes = std::as_bytes(nt.tensor.data());
    blob.append(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    entries.push_back({{"name", nt.name},
                       {"rows", nt.tensor.rows()},
                       {"cols", nt.tensor.cols()},
                       {"offset", offset}});
  }
  json manifest = {{"format", "dssl-bundle-v1"},
                   {"kind", b.kind},
                   {"meta", b.meta},
                   {"blob", blob_path.filename().string()},
                   {"blob_bytes", blob.size()},
                   {"blob_sha1", sha1_hex(std::as_bytes(std::span(blob.data(), blob.size())))},
                   {"tensors", entries}};
  write_text_file(blob_path, blob);
  write_text_file(manifest_path, manifest.dump(2) + "\n");
  return manifest_path;
}

Bundle read_bundle(const fs::path& manifest_path) {
  if (!fs::exists(manifest_path)) throw MissingInputError(manifest_path.string(), "missing manifest");
  json manifest;
  try {
    manifest = json::parse(read_text_file(manifest_path));
  } catch (const json::exception& e) {
    throw ConfigError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  try {
    if (manifest.at("format") != "dssl-bundle-v1")
      throw ConfigError("unsupported bundle format in " + manifest_path.string());
    const fs::path blob_path = manifest_path.parent_path() / manifest.at("blob").get<std::string>();
    if (!fs::exists(blob_path)) throw MissingInputError(blob_path.string(), "missing blob");
    const std::string blob = read_text_file(blob_path);
    if (blob.size() != manifest.at("blob_bytes").get<std::size_t>())
      throw ConfigError("blob size does not match manifest: " + blob_path.string());
    if (sha1_hex(std::as_bytes(std::span(blob.data(), blob.size()))) != manifest.at("blob_sha1"))
      throw ConfigError("blob checksum does not match manifest: " + blob_path.string());

    Bundle b;
    b.kind = manifest.at("kind").get<std::string>();
    b.meta = manifest.at("meta");
    for (const auto& e : manifest.at("tensors")) {
      const auto rows = e.at("rows").get<std::size_t>();
      const auto cols = e.at("cols").get<std::size_t>();
      const auto offset = e.at("offset").get<std::size_t>();
      const std::size_t nbytes = rows * cols * sizeof(double);
      if (offset + nbytes > blob.size())
        throw ConfigError("tensor '" + e.at("name").get<std::string>() + "' overruns blob");
      std::vector<double> data(rows * cols);
      if (nbytes > 0) std::memcpy(data.data(), blob.data() + offset, nbytes);
      b.tensors.push_back({e.at("name").get<std::string>(), Tensor(rows, cols, std::move(data))});
    }
    return b;
  } catch (const json::exception& e) {
    throw ConfigError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
}

}  // namespace dssl
