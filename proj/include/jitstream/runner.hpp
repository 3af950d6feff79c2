#pragma once

// Config-file driven jobs shared by the command-line tool and the tests.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "jitstream/distill.hpp"
#include "jitstream/kv_config.hpp"
#include "jitstream/noisy_teacher.hpp"
#include "jitstream/pretrain.hpp"

namespace jitstream {

inline constexpr const char* kFrameCsvHeader =
    "frame,teacher_invoked,updates,a_curr,mean_iou_vs_teacher,delta";

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitNumeric = 3 };

struct RunConfig {
  std::uint64_t seed = 1;
  DistillConfig distill;
  ArchConfig arch;
  std::optional<std::size_t> num_classes;  // synthetic default: class_count + 1

  // Exactly one source: a synthetic stream ("standard" or a stream config
  // path) or a frame container with recorded teacher predictions.
  std::optional<std::string> synthetic;
  std::optional<std::filesystem::path> container;
  std::optional<std::filesystem::path> teacher_predictions;
  std::optional<std::filesystem::path> ground_truth;  // 1-channel container

  std::string teacher = "oracle";  // synthetic only: oracle | noisy
  TeacherNoise noise;

  std::optional<std::filesystem::path> init_snapshot;
  double fps = 30.0;
  double interval_seconds = 30.0;
  CostModel cost;
  std::filesystem::path out_dir = ".";
  std::optional<std::size_t> max_frames;

  /// Applies one "key = value" setting; throws ConfigError on bad input.
  /// Relative paths are resolved against `base_dir`.
  void apply(const std::string& key, const std::string& value,
             const std::filesystem::path& base_dir = {});
  void validate() const;

  static RunConfig parse(const KeyValueFile& file);
  static RunConfig load(const std::filesystem::path& path);
};

struct RunOptions {
  bool write_files = true;
  bool save_predictions = false;
  /// Test hook: the student reports a non-finite loss on this frame.
  std::optional<std::size_t> inject_nan_frame;
  std::ostream* log = nullptr;
};

struct RunSummary {
  std::size_t frame_width = 0, frame_height = 0;
  StreamCounters counters;
  std::size_t teacher_failures = 0;
  std::vector<std::size_t> numeric_failure_frames;
  SpeedupResult speed;
  std::optional<double> mean_iou;  // mean of the per-frame values
  std::size_t mean_iou_frames = 0;
  std::optional<double> pooled_mean_iou;
  std::optional<double> mean_iou_vs_truth;
  std::optional<double> pooled_mean_iou_vs_truth;
  std::vector<double> interval_mean_iou;
  std::size_t param_count = 0;
  std::uint64_t flops_inference = 0;
  std::uint64_t flops_train_step = 0;
};

struct RunResult {
  StreamReport report;
  RunSummary summary;
};

/// Runs online distillation; writes frames.csv, summary.json and optionally
/// predictions.lvss into cfg.out_dir.
RunResult execute_run(const RunConfig& cfg, const RunOptions& options = {});

std::string format_frame_csv(const StreamReport& report);
std::string format_summary_json(const RunConfig& cfg, const RunSummary& summary);

/// Mean of the defined per-frame IoUs whose frame index is in [first, last).
std::optional<double> mean_frame_iou(const StreamReport& report, std::size_t first = 0,
                                     std::size_t last = SIZE_MAX, bool vs_truth = false);

struct PretrainConfig {
  PretrainCorpusConfig corpus;
  ArchConfig arch;
  std::optional<std::size_t> num_classes;
  DistillConfig labels;  // weight_factor, box_dilation, conf_thresh
  OfflineTrainOptions train;
  std::uint64_t seed = 1;

  void apply(const std::string& key, const std::string& value);
  void validate() const;

  static PretrainConfig parse(const KeyValueFile& file);
  static PretrainConfig load(const std::filesystem::path& path);
};

struct PretrainResult {
  std::vector<EpochStats> epochs;
  std::shared_ptr<Network<float>> net;
};

/// Trains on the corpus and writes a JITW snapshot plus "<snapshot>.log.csv".
PretrainResult execute_pretrain(const PretrainConfig& cfg,
                                const std::optional<std::filesystem::path>& snapshot,
                                std::ostream* log = nullptr);

std::string format_pretrain_log(const std::vector<EpochStats>& epochs);

inline const std::vector<std::string>& sweep_knobs() {
  static const std::vector<std::string> knobs = {"u_max",       "delta_min",        "lr",
                                                 "width_multiplier", "input_scale",
                                                 "skip_connections", "a_thresh"};
  return knobs;
}

struct SweepKnob {
  std::string name;
  std::vector<std::string> values;
};

/// "name=v1,v2,..."
SweepKnob parse_knob(const std::string& text);

struct SweepCell {
  std::vector<std::pair<std::string, std::string>> settings;
  bool failed = false;
  std::string error;
  bool unstable = false;
  RunSummary summary;
};

inline constexpr double kUnstableAccuracy = 0.3;

/// Runs the cross product of the knob values; a failing cell is marked and
/// the sweep continues. Writes sweep.csv into base.out_dir.
std::vector<SweepCell> execute_sweep(const RunConfig& base, const std::vector<SweepKnob>& knobs,
                                     bool write_files = true, std::ostream* log = nullptr);

std::string format_sweep_csv(const std::vector<SweepKnob>& knobs,
                             const std::vector<SweepCell>& cells);

}  // namespace jitstream
