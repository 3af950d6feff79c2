#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "jitstream/container.hpp"
#include "jitstream/gradcheck.hpp"
#include "jitstream/kernels.hpp"
#include "jitstream/recorded_teacher.hpp"
#include "jitstream/runner.hpp"

using namespace jitstream;
namespace fs = std::filesystem;

namespace {

int report_numeric(std::size_t frame, const std::string& what) {
  std::cerr << "numeric failure at frame " << frame << ": " << what << "\n";
  return kExitNumeric;
}

int cmd_run(const std::string& config, const std::optional<std::string>& out, bool save_predictions,
            const std::optional<std::size_t>& inject_nan) {
  RunConfig cfg = RunConfig::load(config);
  if (out) cfg.out_dir = *out;
  RunOptions opt;
  opt.save_predictions = save_predictions;
  opt.inject_nan_frame = inject_nan;
  opt.log = &std::cerr;
  const RunResult r = execute_run(cfg, opt);
  const RunSummary& s = r.summary;
  std::printf("frames %llu, teacher calls %llu (%.2f%%), updates %llu, mean IoU vs teacher %s, "
              "speedup %.2fx\n",
              static_cast<unsigned long long>(s.counters.frames),
              static_cast<unsigned long long>(s.counters.teacher_invocations),
              100.0 * s.speed.teacher_fraction, static_cast<unsigned long long>(s.counters.updates),
              s.mean_iou ? std::to_string(*s.mean_iou).c_str() : "undefined", s.speed.speedup);
  std::printf("wrote %s\n", (cfg.out_dir / "frames.csv").string().c_str());
  if (!s.numeric_failure_frames.empty()) {
    return report_numeric(s.numeric_failure_frames.front(), "non-finite training loss");
  }
  return kExitOk;
}

int cmd_pretrain(const std::string& config, const std::string& out) {
  const PretrainConfig cfg = PretrainConfig::load(config);
  const PretrainResult r = execute_pretrain(cfg, fs::path(out), &std::cerr);
  std::printf("wrote %s (%zu parameters, %zu epochs)\n", out.c_str(), r.net->parameter_count(),
              r.epochs.size());
  return kExitOk;
}

std::optional<LayerKind> layer_kind_from(const std::string& name) {
  for (LayerKind k : {LayerKind::Conv2d, LayerKind::SeparableConv, LayerKind::BatchNorm,
                      LayerKind::ReLU, LayerKind::BilinearResize, LayerKind::Concat}) {
    std::string n(layer_kind_name(k));
    for (auto& c : n) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (n == name) return k;
  }
  return std::nullopt;
}

int cmd_gradcheck(const std::optional<double>& tol, std::size_t seeds,
                  const std::optional<std::string>& fault) {
  GradSuiteOptions opt;
  opt.seeds_per_kind = seeds;
  if (tol) opt.layer_tolerance = opt.network_tolerance = *tol;
  if (fault) {
    opt.corrupt = layer_kind_from(*fault);
    if (!opt.corrupt) throw ConfigError("unknown layer kind for fault injection: " + *fault);
  }
  const GradSuiteReport report = run_gradcheck_suite(opt);
  for (const auto& e : report.entries) {
    std::printf("%-16s worst %.3e  seed %-3llu cases %-3zu tol %.1e  %s\n", e.name.c_str(), e.worst,
                static_cast<unsigned long long>(e.worst_seed), e.cases, e.tolerance,
                e.passed() ? "ok" : "FAIL");
  }
  int code = kExitOk;
  for (const auto& e : report.entries) {
    if (!e.passed()) {
      std::cerr << "gradient check failed: " << e.name << " (seed " << e.worst_seed
                << ", relative error " << e.worst << ")\n";
      code = kExitFailure;
    }
  }
  return code;
}

int cmd_sweep(const std::string& config, const std::vector<std::string>& knob_texts,
              const std::optional<std::string>& out) {
  RunConfig cfg = RunConfig::load(config);
  if (out) cfg.out_dir = *out;
  std::vector<SweepKnob> knobs;
  for (const auto& t : knob_texts) knobs.push_back(parse_knob(t));
  const auto cells = execute_sweep(cfg, knobs, true, &std::cerr);
  std::cout << format_sweep_csv(knobs, cells);
  return kExitOk;
}

int cmd_export(const std::string& stream_cfg, const std::string& out,
               const std::optional<std::size_t>& frames) {
  const SyntheticStreamConfig scfg =
      stream_cfg == "standard" ? standard_stream_config() : load_synthetic_config(stream_cfg);
  const SyntheticStream stream(scfg);
  const std::size_t count = frames ? std::min(scfg.num_frames, *frames) : scfg.num_frames;
  const fs::path dir(out);
  fs::create_directories(dir);
  const auto w = static_cast<std::uint32_t>(scfg.width), h = static_cast<std::uint32_t>(scfg.height);
  ContainerWriter rgb(dir / "frames.lvss", w, h, 3);
  ContainerWriter labels(dir / "labels.lvss", w, h, 1);
  RecordedTeacherWriter teacher(dir / "teacher.jsonl");
  for (std::size_t t = 0; t < count; ++t) {
    auto [frame, scene] = stream.frame_and_scene(t);
    rgb.write(frame);
    labels.write(scene.class_map);
    teacher.append(t, OracleTeacher::instances_from_scene(scene));
  }
  rgb.close();
  labels.close();
  std::printf("wrote %zu frames to %s\n", count, dir.string().c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_env();
  CLI::App app{"Online distillation of a compact segmentation network on video streams"};
  app.require_subcommand(1);

  std::string config, out_path;
  std::optional<std::string> out_dir, fault;
  std::optional<std::size_t> inject_nan, export_frames;
  std::optional<double> tol;
  std::size_t seeds = 20;
  bool save_predictions = false;
  std::vector<std::string> knobs;
  std::string stream = "standard";

  auto* run = app.add_subcommand("run", "Run online distillation over a stream");
  run->add_option("--config", config, "Run config file")->required();
  run->add_option("--out", out_dir, "Output directory (overrides out_dir)");
  run->add_flag("--save-predictions", save_predictions, "Write predictions.lvss");
  run->add_option("--inject-nan-frame", inject_nan)->group("");

  auto* pretrain = app.add_subcommand("pretrain", "Pretrain on a randomized synthetic corpus");
  pretrain->add_option("--config", config, "Pretrain config file")->required();
  pretrain->add_option("--out", out_path, "Snapshot path")->required();

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every layer kind");
  grad->add_option("--tol", tol, "Relative error tolerance for all checks");
  grad->add_option("--seeds", seeds, "Random cases per layer kind")->capture_default_str();
  grad->add_option("--inject-fault", fault)->group("");

  auto* sweep = app.add_subcommand("sweep", "Run the cross product of knob settings");
  sweep->add_option("--config", config, "Base run config file")->required();
  sweep->add_option("--knob", knobs, "name=v1,v2,... (repeatable)")->required();
  sweep->add_option("--out", out_dir, "Output directory (overrides out_dir)");

  auto* exp = app.add_subcommand("export", "Write a synthetic stream as containers");
  exp->add_option("--stream", stream, "'standard' or a stream config file")->capture_default_str();
  exp->add_option("--out", out_path, "Output directory")->required();
  exp->add_option("--frames", export_frames, "Limit the number of frames");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*run) return cmd_run(config, out_dir, save_predictions, inject_nan);
    if (*pretrain) return cmd_pretrain(config, out_path);
    if (*grad) return cmd_gradcheck(tol, seeds, fault);
    if (*sweep) return cmd_sweep(config, knobs, out_dir);
    if (*exp) return cmd_export(stream, out_path, export_frames);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericFailure& e) {
    return report_numeric(e.frame(), e.what());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
