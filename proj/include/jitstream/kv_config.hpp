#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace jitstream {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KeyValueEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// Flat UTF-8 "key = value" lines; '#' starts a comment; keys may repeat.
class KeyValueFile {
 public:
  static KeyValueFile parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueFile load(const std::filesystem::path& path);

  const std::vector<KeyValueEntry>& entries() const { return entries_; }
  const std::string& origin() const { return origin_; }
  /// Directory of the file, used to resolve relative paths.
  const std::filesystem::path& base_dir() const { return base_dir_; }

  /// Last value for a key.
  std::optional<std::string> get(const std::string& key) const;
  std::vector<KeyValueEntry> all(const std::string& key) const;

  /// Throws ConfigError naming the first key not in `known`.
  void require_known(const std::vector<std::string>& known) const;

  [[noreturn]] void fail(const KeyValueEntry& e, const std::string& message) const;

 private:
  std::string origin_;
  std::filesystem::path base_dir_;
  std::vector<KeyValueEntry> entries_;
};

/// "a=1 b=x:y" -> {a: "1", b: "x:y"}.
std::map<std::string, std::string> parse_fields(const std::string& text);

double parse_double(const std::string& text, const std::string& what);
std::int64_t parse_int(const std::string& text, const std::string& what);
std::uint64_t parse_uint(const std::string& text, const std::string& what);
bool parse_bool(const std::string& text, const std::string& what);
std::vector<std::string> split(const std::string& text, char sep);

/// Child seed from a root seed and a label (FNV-1a over the label, splitmix finalizer).
std::uint64_t derive_seed(std::uint64_t root, const std::string& label);

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

}  // namespace jitstream
