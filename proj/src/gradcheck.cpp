#include "jitstream/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <variant>

#include "jitstream/loss.hpp"

namespace jitstream {

namespace {

using Layer = std::variant<Conv2d<double>, SeparableConv<double>, BatchNorm<double>, ReLU<double>,
                           BilinearResize<double>, Concat<double>>;

Layer make_layer(const LayerSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case LayerKind::Conv2d:
      return Conv2d<double>("conv", spec.in_channels, spec.out_channels, spec.kernel_h,
                            spec.kernel_w, spec.stride, spec.bias);
    case LayerKind::SeparableConv:
      return SeparableConv<double>("sep", spec.in_channels, spec.out_channels, spec.bias);
    case LayerKind::BatchNorm: return BatchNorm<double>("bn", spec.in_channels);
    case LayerKind::ReLU: return ReLU<double>{};
    case LayerKind::BilinearResize: return BilinearResize<double>(spec.resize);
    case LayerKind::Concat: return Concat<double>{};
  }
  throw std::invalid_argument("unknown layer kind");
}

struct LayerRunner {
  Layer layer;
  std::size_t split;

  Tensor<double> forward(const Tensor<double>& x) {
    return std::visit(
        [&](auto& l) -> Tensor<double> {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, Concat<double>>) {
            auto [a, b] = split_channels<double>(x, split);
            return l.forward(a, b);
          } else {
            return l.forward(x);
          }
        },
        layer);
  }

  Tensor<double> backward(const Tensor<double>& g) {
    return std::visit(
        [&](auto& l) -> Tensor<double> {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, Concat<double>>) {
            auto [a, b] = l.backward(g);
            return concat_channels<double>(a, b);
          } else {
            return l.backward(g);
          }
        },
        layer);
  }

  std::vector<ParamState<double>*> params() {
    std::vector<ParamState<double>*> out;
    std::visit(
        [&](auto& l) {
          if constexpr (requires { l.collect(out); }) l.collect(out);
        },
        layer);
    return out;
  }
};

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void randomize(std::vector<ParamState<double>*>& params, std::mt19937_64& rng,
               bool include_weights) {
  std::uniform_real_distribution<double> offset(-0.5, 0.5);
  std::uniform_real_distribution<double> scale(0.5, 1.5);
  for (auto* p : params) {
    auto& v = p->value.storage();
    if (ends_with(p->name, ".gamma")) {
      for (auto& x : v) x = scale(rng);
    } else if (ends_with(p->name, ".beta") || ends_with(p->name, ".bias")) {
      for (auto& x : v) x = offset(rng);
    } else if (include_weights) {
      const double fan_in = static_cast<double>(p->value.size() / p->value.dim(0));
      std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(fan_in));
      for (auto& x : v) x = dist(rng);
    }
  }
}

double projected(const Tensor<double>& out, const Tensor<double>& projection) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * projection[i];
  return s;
}

}  // namespace

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult gradient_check(const LayerSpec& spec, const Tensor<double>& input,
                               std::uint64_t param_seed, const GradCheckOptions& options) {
  require_rank(input.shape(), 3, "gradient_check input");
  if (input.height() > 8 || input.width() > 8) {
    throw std::invalid_argument("gradient_check: input spatial extent must be <= 8x8");
  }
  LayerRunner runner{make_layer(spec), spec.split};
  std::mt19937_64 rng(param_seed);
  auto params = runner.params();
  randomize(params, rng, true);

  Tensor<double> out = runner.forward(input);
  Tensor<double> projection(out.shape());
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : projection.storage()) v = normal(rng);

  for (auto* p : params) p->zero_grad();
  Tensor<double> grad_input = runner.backward(projection);
  if (options.corruption != 0.0) {
    for (auto& v : grad_input.storage()) v *= 1.0 + options.corruption;
  }

  GradCheckResult result;
  auto consider = [&result](double err, const std::string& what) {
    if (err > result.max_relative_error || std::isnan(err)) {
      result.max_relative_error = std::isnan(err) ? INFINITY : err;
      result.worst = what;
    }
  };

  Tensor<double> x = input;
  const double eps = options.eps;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double plus = projected(runner.forward(x), projection);
    x[i] = saved - eps;
    const double minus = projected(runner.forward(x), projection);
    x[i] = saved;
    consider(relative_error(grad_input[i], (plus - minus) / (2 * eps)), "input");
  }
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + eps;
      const double plus = projected(runner.forward(input), projection);
      p->value[i] = saved - eps;
      const double minus = projected(runner.forward(input), projection);
      p->value[i] = saved;
      consider(relative_error(p->grad[i], (plus - minus) / (2 * eps)), p->name);
    }
  }
  return result;
}

ArchConfig tiny_gradcheck_config() {
  ArchConfig cfg;
  cfg.num_classes = 2;
  cfg.width_multiplier = 0.25;
  return cfg;
}

GradCheckResult network_gradient_check(const ArchConfig& config, std::size_t height,
                                       std::size_t width, std::uint64_t seed,
                                       const GradCheckOptions& options) {
  Network<double> net(config, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  auto params = net.parameters();
  randomize(params, rng, false);

  Tensor<double> frame({3, height, width});
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : frame.storage()) v = normal(rng);
  const std::size_t n = height * width;
  std::vector<std::uint8_t> labels(n);
  std::vector<float> weights(n);
  std::uniform_int_distribution<int> label_dist(0, static_cast<int>(config.num_classes) - 1);
  std::uniform_int_distribution<int> coin(0, 9);
  for (std::size_t p = 0; p < n; ++p) {
    labels[p] = coin(rng) == 0 ? kIgnoreLabel : static_cast<std::uint8_t>(label_dist(rng));
    weights[p] = coin(rng) < 3 ? 5.0f : 1.0f;
  }

  auto loss_at = [&]() {
    return weighted_softmax_cross_entropy<double>(net.forward(frame), labels, weights).loss;
  };

  auto analytic = weighted_softmax_cross_entropy<double>(net.forward(frame), labels, weights);
  for (auto* p : params) p->zero_grad();
  Tensor<double> grad_frame = net.backward(analytic.grad);
  if (options.corruption != 0.0) {
    for (auto& v : grad_frame.storage()) v *= 1.0 + options.corruption;
  }

  GradCheckResult result;
  auto consider = [&result](double err, const std::string& what) {
    if (err > result.max_relative_error || std::isnan(err)) {
      result.max_relative_error = std::isnan(err) ? INFINITY : err;
      result.worst = what;
    }
  };
  const double eps = options.eps;
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const double saved = frame[i];
    frame[i] = saved + eps;
    const double plus = loss_at();
    frame[i] = saved - eps;
    const double minus = loss_at();
    frame[i] = saved;
    consider(relative_error(grad_frame[i], (plus - minus) / (2 * eps)), "input");
  }
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + eps;
      const double plus = loss_at();
      p->value[i] = saved - eps;
      const double minus = loss_at();
      p->value[i] = saved;
      consider(relative_error(p->grad[i], (plus - minus) / (2 * eps)), p->name);
    }
  }
  return result;
}

std::pair<LayerSpec, Tensor<double>> random_gradcheck_case(LayerKind kind, std::uint64_t seed) {
  std::mt19937_64 rng(seed * 0x2545F4914F6CDD1DULL + static_cast<std::uint64_t>(kind));
  auto pick = [&rng](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  LayerSpec spec;
  spec.kind = kind;
  spec.in_channels = pick(1, 3);
  spec.out_channels = pick(1, 4);
  std::size_t h = pick(3, 8), w = pick(3, 8);
  switch (kind) {
    case LayerKind::Conv2d:
      spec.kernel_h = spec.kernel_w = pick(0, 3) == 0 ? 1 : 3;
      spec.stride = pick(1, 2);
      break;
    case LayerKind::SeparableConv: break;
    case LayerKind::BatchNorm: spec.out_channels = spec.in_channels; break;
    case LayerKind::ReLU: spec.out_channels = spec.in_channels; break;
    case LayerKind::BilinearResize:
      spec.out_channels = spec.in_channels;
      spec.resize = pick(1, 4);
      h = pick(1, 5);
      w = pick(1, 5);
      break;
    case LayerKind::Concat:
      spec.in_channels = pick(2, 4);
      spec.out_channels = spec.in_channels;
      spec.split = pick(1, spec.in_channels - 1);
      break;
  }
  Tensor<double> input({spec.in_channels, h, w});
  if (kind == LayerKind::ReLU) {
    // Bounded away from the kink: |x| in [0.1, 1].
    std::uniform_real_distribution<double> mag(0.1, 1.0);
    std::bernoulli_distribution sign(0.5);
    for (auto& v : input.storage()) v = sign(rng) ? mag(rng) : -mag(rng);
  } else {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& v : input.storage()) v = normal(rng);
  }
  return {spec, std::move(input)};
}

GradSuiteReport run_gradcheck_suite(const GradSuiteOptions& options) {
  GradSuiteReport report;
  const LayerKind kinds[] = {LayerKind::Conv2d,    LayerKind::SeparableConv,
                             LayerKind::BatchNorm, LayerKind::ReLU,
                             LayerKind::BilinearResize, LayerKind::Concat};
  for (LayerKind kind : kinds) {
    GradSuiteEntry entry;
    entry.name = std::string(layer_kind_name(kind));
    entry.tolerance = options.layer_tolerance;
    GradCheckOptions gopt;
    if (options.corrupt && *options.corrupt == kind) gopt.corruption = 0.05;
    for (std::uint64_t seed = 1; seed <= options.seeds_per_kind; ++seed) {
      auto [spec, input] = random_gradcheck_case(kind, seed);
      const auto r = gradient_check(spec, input, seed, gopt);
      if (++entry.cases == 1 || r.max_relative_error > entry.worst) {
        entry.worst = r.max_relative_error;
        entry.worst_seed = seed;
      }
    }
    report.entries.push_back(entry);
  }
  if (options.include_network) {
    GradSuiteEntry entry;
    entry.name = "Network(tiny)";
    entry.tolerance = options.network_tolerance;
    entry.worst_seed = 7;
    entry.worst = network_gradient_check(tiny_gradcheck_config(), 16, 16, entry.worst_seed)
                      .max_relative_error;
    entry.cases = 1;
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace jitstream
