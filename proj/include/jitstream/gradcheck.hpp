#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "jitstream/arch.hpp"
#include "jitstream/layers.hpp"

namespace jitstream {

inline constexpr double kDefaultFiniteDifferenceEps = 1e-5;
inline constexpr double kLayerGradTolerance = 1e-4;
inline constexpr double kNetworkGradTolerance = 1e-3;

/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
double relative_error(double analytic, double numeric);

struct GradCheckOptions {
  double eps = kDefaultFiniteDifferenceEps;
  /// Test hook: scales the analytic input gradient of the layer by (1 + corruption).
  double corruption = 0.0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst;  // "input" or a parameter name
};

/// Builds the layer from `spec` with parameters drawn from `param_seed`, and
/// compares analytic input/parameter gradients of sum(output * R) (R fixed
/// random) against central differences. Input must be rank 3 and at most 8x8.
GradCheckResult gradient_check(const LayerSpec& spec, const Tensor<double>& input,
                               std::uint64_t param_seed, const GradCheckOptions& options = {});

/// End-to-end check of a network through the weighted cross-entropy loss.
/// Every parameter is perturbed; biases and BN affine terms are randomized
/// first so no activation sits exactly on a ReLU kink.
GradCheckResult network_gradient_check(const ArchConfig& config, std::size_t height,
                                       std::size_t width, std::uint64_t seed,
                                       const GradCheckOptions& options = {});

/// Random layer spec and input of the given kind (spatial <= 8x8), as used by the suite.
std::pair<LayerSpec, Tensor<double>> random_gradcheck_case(LayerKind kind, std::uint64_t seed);

/// The tiny configuration used for the end-to-end check: width 0.25, 2 classes.
ArchConfig tiny_gradcheck_config();

struct GradSuiteEntry {
  std::string name;
  double worst = 0.0;
  std::uint64_t worst_seed = 0;
  std::size_t cases = 0;
  double tolerance = 0.0;
  bool passed() const { return worst < tolerance; }
};

struct GradSuiteOptions {
  std::size_t seeds_per_kind = 20;
  double layer_tolerance = kLayerGradTolerance;
  double network_tolerance = kNetworkGradTolerance;
  bool include_network = true;
  std::optional<LayerKind> corrupt;  // fault injection for the named kind
};

struct GradSuiteReport {
  std::vector<GradSuiteEntry> entries;
  bool passed() const {
    for (const auto& e : entries)
      if (!e.passed()) return false;
    return true;
  }
};

GradSuiteReport run_gradcheck_suite(const GradSuiteOptions& options = {});

}  // namespace jitstream
