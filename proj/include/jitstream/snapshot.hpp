#pragma once

// "JITW" weight snapshots. Little-endian:
//   magic "JITW" | version u32 | count u32 |
//   count x { name_len u16 | name utf-8 | rank u8 | extents u32[rank] | f32[volume] }

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "jitstream/arch.hpp"

namespace jitstream {

inline constexpr std::uint32_t kSnapshotVersion = 1;

class SnapshotError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

void write_snapshot(const std::filesystem::path& path, std::span<const NamedTensor> tensors);
std::vector<NamedTensor> read_snapshot(const std::filesystem::path& path);

template <typename T>
std::vector<NamedTensor> network_tensors(Network<T>& net) {
  std::vector<NamedTensor> out;
  for (auto* p : net.parameters()) out.push_back({p->name, p->value.template cast<float>()});
  return out;
}

template <typename T>
void save_network(const std::filesystem::path& path, Network<T>& net) {
  const auto tensors = network_tensors(net);
  write_snapshot(path, tensors);
}

/// Loads values by name; every network parameter must be present with a matching shape.
/// Momentum buffers are reset.
template <typename T>
void load_network(const std::filesystem::path& path, Network<T>& net) {
  const auto tensors = read_snapshot(path);
  for (auto* p : net.parameters()) {
    auto it = std::find_if(tensors.begin(), tensors.end(),
                           [p](const NamedTensor& t) { return t.name == p->name; });
    if (it == tensors.end()) throw SnapshotError("snapshot lacks parameter " + p->name);
    if (it->value.shape() != p->value.shape()) {
      throw SnapshotError("snapshot shape " + shape_string(it->value.shape()) + " for " + p->name +
                          " does not match network shape " + shape_string(p->value.shape()));
    }
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] = static_cast<T>(it->value[i]);
    p->momentum.fill(T{0});
    p->grad.fill(T{0});
  }
}

}  // namespace jitstream
