#include "jitstream/snapshot.hpp"

#include <fstream>
#include <limits>

#include "jitstream/detail/le_io.hpp"

namespace jitstream {

using detail::read_le;
using detail::write_le;

void write_snapshot(const std::filesystem::path& path, std::span<const NamedTensor> tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw SnapshotError("cannot open " + path.string() + " for writing");
  os.write("JITW", 4);
  write_le<std::uint32_t>(os, kSnapshotVersion);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw SnapshotError("parameter name too long: " + t.name);
    }
    write_le<std::uint16_t>(os, static_cast<std::uint16_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.value.rank()));
    for (std::size_t e : t.value.shape()) write_le<std::uint32_t>(os, static_cast<std::uint32_t>(e));
    for (float v : t.value.values()) write_le<float>(os, v);
  }
  if (!os) throw SnapshotError("write failed for " + path.string());
}

std::vector<NamedTensor> read_snapshot(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw SnapshotError("cannot open snapshot " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "JITW") {
    throw SnapshotError("bad snapshot magic in " + path.string() + " at byte offset 0");
  }
  const auto version = read_le<std::uint32_t, SnapshotError>(is, "version");
  if (version != kSnapshotVersion) {
    throw SnapshotError("unsupported snapshot version " + std::to_string(version));
  }
  const auto count = read_le<std::uint32_t, SnapshotError>(is, "parameter count");
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_le<std::uint16_t, SnapshotError>(is, "name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) {
      throw SnapshotError("truncated parameter name at entry " + std::to_string(i));
    }
    const auto rank = read_le<std::uint8_t, SnapshotError>(is, "rank");
    Shape shape(rank);
    for (auto& e : shape) e = read_le<std::uint32_t, SnapshotError>(is, "extent");
    Tensor<float> value(shape);
    for (auto& v : value.storage()) v = read_le<float, SnapshotError>(is, name.c_str());
    out.push_back({std::move(name), std::move(value)});
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw SnapshotError("trailing bytes after " + std::to_string(count) + " parameters in " +
                        path.string());
  }
  return out;
}

}  // namespace jitstream
