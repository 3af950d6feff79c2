#include "jitstream/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include <json.hpp>

#include "jitstream/container.hpp"
#include "jitstream/recorded_teacher.hpp"
#include "jitstream/snapshot.hpp"

namespace jitstream {

namespace fs = std::filesystem;

namespace {

fs::path resolve(const std::string& value, const fs::path& base) {
  fs::path p(value);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

void require_exists(const std::optional<fs::path>& p, const char* what) {
  if (p && !fs::exists(*p)) throw ConfigError(std::string(what) + " not found: " + p->string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

// Applies keys shared by run and pretrain configs. Returns false for unknown keys.
bool apply_arch_key(ArchConfig& arch, std::optional<std::size_t>& num_classes,
                    const std::string& key, const std::string& value) {
  if (key == "num_classes") num_classes = parse_uint(value, key);
  else if (key == "width_multiplier") arch.width_multiplier = parse_double(value, key);
  else if (key == "input_scale") arch.input_scale = parse_double(value, key);
  else if (key == "skip_connections") arch.skip_connections = parse_bool(value, key);
  else return false;
  return true;
}

bool apply_label_key(DistillConfig& d, const std::string& key, const std::string& value) {
  if (key == "conf_thresh") d.conf_thresh = parse_double(value, key);
  else if (key == "weight_factor") d.weight_factor = parse_double(value, key);
  else if (key == "box_dilation") d.box_dilation = parse_double(value, key);
  else return false;
  return true;
}

template <typename F>
void as_config_error(F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

/// Reports a non-finite loss on one frame; otherwise defers to the wrapped student.
class FaultInjectingStudent : public Student {
 public:
  FaultInjectingStudent(Student& inner, std::size_t frame) : inner_(inner), frame_(frame) {}

  void begin_frame(std::size_t t) override {
    current_ = t;
    inner_.begin_frame(t);
  }
  LabelMap predict(const Frame& frame) override { return inner_.predict(frame); }
  UpdateOutcome update(const Frame& frame, const LabelMap& labels, const WeightMap& weights,
                       double lr, double momentum) override {
    if (current_ == frame_) return {std::nan(""), false};
    return inner_.update(frame, labels, weights, lr, momentum);
  }

 private:
  Student& inner_;
  std::size_t frame_;
  std::size_t current_ = 0;
};

}  // namespace

void RunConfig::apply(const std::string& key, const std::string& value, const fs::path& base) {
  if (apply_arch_key(arch, num_classes, key, value) || apply_label_key(distill, key, value)) return;
  if (key == "seed") seed = parse_uint(value, key);
  else if (key == "u_max") distill.u_max = parse_uint(value, key);
  else if (key == "delta_min") distill.delta_min = parse_uint(value, key);
  else if (key == "delta_max") distill.delta_max = parse_uint(value, key);
  else if (key == "a_thresh") distill.a_thresh = parse_double(value, key);
  else if (key == "lr") distill.lr = parse_double(value, key);
  else if (key == "momentum") distill.momentum = parse_double(value, key);
  else if (key == "synthetic") synthetic = value == "standard" ? value : resolve(value, base).string();
  else if (key == "container") container = resolve(value, base);
  else if (key == "teacher_predictions") teacher_predictions = resolve(value, base);
  else if (key == "ground_truth") ground_truth = resolve(value, base);
  else if (key == "teacher") {
    if (value != "oracle" && value != "noisy") {
      throw ConfigError("teacher must be 'oracle' or 'noisy', got '" + value + "'");
    }
    teacher = value;
  } else if (key == "teacher_jitter_px") noise.boundary_jitter_px = static_cast<int>(parse_int(value, key));
  else if (key == "teacher_confidence_spread") noise.confidence_spread = parse_double(value, key);
  else if (key == "teacher_drop_prob") noise.drop_prob = parse_double(value, key);
  else if (key == "init_snapshot") init_snapshot = resolve(value, base);
  else if (key == "fps") fps = parse_double(value, key);
  else if (key == "interval_seconds") interval_seconds = parse_double(value, key);
  else if (key == "cost_teacher_ms") cost.teacher_ms = parse_double(value, key);
  else if (key == "cost_infer_ms") cost.infer_ms = parse_double(value, key);
  else if (key == "cost_update_ms") cost.update_ms = parse_double(value, key);
  else if (key == "out_dir") out_dir = resolve(value, base);
  else if (key == "max_frames") max_frames = parse_uint(value, key);
  else throw ConfigError("unknown key '" + key + "'");
}

void RunConfig::validate() const {
  if (synthetic.has_value() == container.has_value()) {
    throw ConfigError("exactly one stream source required: set either 'synthetic' or 'container'");
  }
  if (container && !teacher_predictions) {
    throw ConfigError("a container source needs 'teacher_predictions'");
  }
  if (synthetic && *synthetic != "standard") require_exists(fs::path(*synthetic), "synthetic stream config");
  require_exists(container, "container");
  require_exists(teacher_predictions, "teacher predictions");
  require_exists(ground_truth, "ground truth container");
  require_exists(init_snapshot, "initial snapshot");
  if (!(fps > 0.0)) throw ConfigError("fps must be positive");
  if (!(interval_seconds > 0.0)) throw ConfigError("interval_seconds must be positive");
  as_config_error([&] {
    distill.validate();
    noise.validate();
    cost.validate();
    ArchConfig a = arch;
    if (num_classes) a.num_classes = *num_classes;
    a.validate();
  });
}

RunConfig RunConfig::parse(const KeyValueFile& file) {
  RunConfig cfg;
  for (const auto& e : file.entries()) {
    try {
      cfg.apply(e.key, e.value, file.base_dir());
    } catch (const ConfigError& err) {
      file.fail(e, err.what());
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& err) {
    throw ConfigError(file.origin() + ": " + err.what());
  }
  return cfg;
}

RunConfig RunConfig::load(const fs::path& path) { return parse(KeyValueFile::load(path)); }

std::optional<double> mean_frame_iou(const StreamReport& report, std::size_t first,
                                     std::size_t last, bool vs_truth) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : report.records) {
    if (r.frame_index < first || r.frame_index >= last) continue;
    const auto& v = vs_truth ? r.iou_vs_truth : r.iou_vs_teacher;
    if (!v) continue;
    sum += *v;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

RunResult execute_run(const RunConfig& cfg, const RunOptions& options) {
  cfg.validate();
  std::unique_ptr<FrameSource> source;
  std::shared_ptr<Teacher> base_teacher;
  std::function<std::optional<LabelMap>(std::size_t)> truth;
  std::size_t width = 0, height = 0, classes = 0;

  if (cfg.synthetic) {
    SyntheticStreamConfig scfg;
    as_config_error([&] {
      scfg = *cfg.synthetic == "standard" ? standard_stream_config()
                                          : load_synthetic_config(*cfg.synthetic);
    });
    auto stream = std::make_shared<const SyntheticStream>(scfg);
    source = std::make_unique<SyntheticFrameSource>(stream);
    base_teacher = std::make_shared<OracleTeacher>(stream, cfg.cost.teacher_ms);
    truth = [stream](std::size_t t) { return std::optional<LabelMap>(stream->scene(t).class_map); };
    width = scfg.width;
    height = scfg.height;
    classes = scfg.class_count + 1;
  } else {
    try {
      auto frames = std::make_unique<ContainerFrameSource>(*cfg.container);
      width = frames->header().width;
      height = frames->header().height;
      source = std::move(frames);
      base_teacher = std::make_shared<RecordedTeacher>(
          RecordedTeacher::load(*cfg.teacher_predictions, width, height, cfg.cost.teacher_ms));
      if (cfg.ground_truth) {
        auto labels = std::make_shared<ContainerReader>(*cfg.ground_truth);
        if (labels->header().channels != 1 || labels->header().width != width ||
            labels->header().height != height) {
          throw ConfigError("ground truth container does not match the frame container");
        }
        truth = [labels](std::size_t t) -> std::optional<LabelMap> {
          if (t >= labels->header().frame_count) return std::nullopt;
          return labels->read_labels(t);
        };
      }
    } catch (const ContainerError& e) {
      throw ConfigError(e.what());
    } catch (const RecordedTeacherError& e) {
      throw ConfigError(e.what());
    }
    if (!cfg.num_classes) throw ConfigError("a container source needs 'num_classes'");
    classes = *cfg.num_classes;
  }

  ArchConfig arch = cfg.arch;
  arch.num_classes = cfg.num_classes.value_or(classes);
  if (arch.num_classes < classes) {
    throw ConfigError("num_classes " + std::to_string(arch.num_classes) +
                      " is smaller than the stream's " + std::to_string(classes) + " classes");
  }
  as_config_error([&] { arch.validate(); });

  std::shared_ptr<Teacher> teacher = base_teacher;
  if (cfg.teacher == "noisy") {
    teacher = std::make_shared<NoisyTeacher>(base_teacher, cfg.noise,
                                             derive_seed(cfg.seed, "teacher_noise"));
  }

  auto net = std::make_shared<Network<float>>(arch, derive_seed(cfg.seed, "student_init"));
  if (cfg.init_snapshot) {
    try {
      load_network(*cfg.init_snapshot, *net);
    } catch (const SnapshotError& e) {
      throw ConfigError(e.what());
    }
  }
  NetworkStudent network_student(net);
  std::optional<FaultInjectingStudent> faulty;
  Student* student = &network_student;
  if (options.inject_nan_frame) {
    faulty.emplace(network_student, *options.inject_nan_frame);
    student = &*faulty;
  }

  if (options.write_files) fs::create_directories(cfg.out_dir);
  std::optional<ContainerWriter> predictions;
  if (options.write_files && options.save_predictions) {
    predictions.emplace(cfg.out_dir / "predictions.lvss", static_cast<std::uint32_t>(width),
                        static_cast<std::uint32_t>(height), std::uint8_t{1});
  }

  StreamOptions sopt;
  sopt.eval_teacher = teacher.get();
  sopt.ground_truth = truth;
  sopt.keep_predictions = false;
  sopt.max_frames = cfg.max_frames;
  sopt.on_frame = [&](const FrameRecord& r) {
    if (predictions) predictions->write(r.prediction);
    if (options.log && (r.frame_index + 1) % 500 == 0) {
      *options.log << "frame " << r.frame_index + 1 << ": delta " << r.delta << "\n";
    }
  };

  RunResult result;
  result.report = process_stream(*source, *teacher, *student, cfg.distill, sopt);
  if (predictions) predictions->close();

  const StreamReport& rep = result.report;
  RunSummary& s = result.summary;
  s.frame_width = width;
  s.frame_height = height;
  s.counters = rep.counters;
  s.teacher_failures = rep.teacher_failures;
  s.numeric_failure_frames = rep.numeric_failure_frames;
  if (rep.counters.frames > 0) s.speed = speedup(rep.counters, cfg.cost);
  s.mean_iou = mean_frame_iou(rep);
  for (const auto& r : rep.records) s.mean_iou_frames += r.iou_vs_teacher ? 1 : 0;
  s.pooled_mean_iou = rep.vs_teacher.mean_iou(true).mean;
  if (truth) {
    s.mean_iou_vs_truth = mean_frame_iou(rep, 0, SIZE_MAX, true);
    s.pooled_mean_iou_vs_truth = rep.vs_truth.mean_iou(true).mean;
  }
  std::vector<double> per_frame;
  per_frame.reserve(rep.records.size());
  for (const auto& r : rep.records) per_frame.push_back(r.iou_vs_teacher.value_or(std::nan("")));
  s.interval_mean_iou = interval_series(per_frame, cfg.fps, cfg.interval_seconds);
  s.param_count = count_params(*net);
  s.flops_inference = estimate_flops(*net, height, width, FlopMode::Inference);
  s.flops_train_step = estimate_flops(*net, height, width, FlopMode::TrainStep);

  if (options.write_files) {
    write_text(cfg.out_dir / "frames.csv", format_frame_csv(rep));
    write_text(cfg.out_dir / "summary.json", format_summary_json(cfg, s));
  }
  return result;
}

std::string format_frame_csv(const StreamReport& report) {
  std::string out = std::string(kFrameCsvHeader) + "\n";
  for (const auto& r : report.records) {
    out += std::to_string(r.frame_index);
    out += r.teacher_invoked ? ",1," : ",0,";
    out += std::to_string(r.updates) + ",";
    if (r.a_curr) out += fixed6(*r.a_curr);
    out += ",";
    if (r.iou_vs_teacher) out += fixed6(*r.iou_vs_teacher);
    out += "," + std::to_string(r.delta) + "\n";
  }
  return out;
}

std::string format_summary_json(const RunConfig& cfg, const RunSummary& s) {
  nlohmann::ordered_json j;
  j["frames"] = s.counters.frames;
  j["frame_width"] = s.frame_width;
  j["frame_height"] = s.frame_height;
  j["mean_iou"] = optional_json(s.mean_iou);
  j["mean_iou_frames"] = s.mean_iou_frames;
  j["pooled_mean_iou"] = optional_json(s.pooled_mean_iou);
  j["mean_iou_vs_truth"] = optional_json(s.mean_iou_vs_truth);
  j["pooled_mean_iou_vs_truth"] = optional_json(s.pooled_mean_iou_vs_truth);
  j["interval_mean_iou"] = nlohmann::ordered_json::array();
  for (double v : s.interval_mean_iou) {
    j["interval_mean_iou"].push_back(std::isnan(v) ? nlohmann::ordered_json(nullptr)
                                                   : nlohmann::ordered_json(v));
  }
  j["teacher_invocations"] = s.counters.teacher_invocations;
  j["teacher_fraction"] = s.speed.teacher_fraction;
  j["teacher_failures"] = s.teacher_failures;
  j["total_updates"] = s.counters.updates;
  j["speedup"] = s.speed.speedup;
  j["total_cost_ms"] = s.speed.total_ms;
  j["numeric_failure_frames"] = s.numeric_failure_frames;
  j["param_count"] = s.param_count;
  j["flops_inference"] = s.flops_inference;
  j["flops_train_step"] = s.flops_train_step;
  j["config"] = {{"seed", cfg.seed},
                 {"u_max", cfg.distill.u_max},
                 {"delta_min", cfg.distill.delta_min},
                 {"delta_max", cfg.distill.delta_max},
                 {"a_thresh", cfg.distill.a_thresh},
                 {"lr", cfg.distill.lr},
                 {"momentum", cfg.distill.momentum},
                 {"conf_thresh", cfg.distill.conf_thresh},
                 {"weight_factor", cfg.distill.weight_factor},
                 {"box_dilation", cfg.distill.box_dilation},
                 {"width_multiplier", cfg.arch.width_multiplier},
                 {"input_scale", cfg.arch.input_scale},
                 {"skip_connections", cfg.arch.skip_connections},
                 {"teacher", cfg.teacher},
                 {"fps", cfg.fps},
                 {"interval_seconds", cfg.interval_seconds},
                 {"cost_teacher_ms", cfg.cost.teacher_ms},
                 {"cost_infer_ms", cfg.cost.infer_ms},
                 {"cost_update_ms", cfg.cost.update_ms}};
  return j.dump(2) + "\n";
}

void PretrainConfig::apply(const std::string& key, const std::string& value) {
  if (apply_arch_key(arch, num_classes, key, value) || apply_label_key(labels, key, value)) return;
  if (key == "width") corpus.width = parse_uint(value, key);
  else if (key == "height") corpus.height = parse_uint(value, key);
  else if (key == "class_count") corpus.class_count = parse_uint(value, key);
  else if (key == "scenes") corpus.scenes = parse_uint(value, key);
  else if (key == "min_objects") corpus.min_objects = parse_uint(value, key);
  else if (key == "max_objects") corpus.max_objects = parse_uint(value, key);
  else if (key == "size") {
    const auto parts = split(value, ':');
    if (parts.size() != 2) throw ConfigError("size must be 'lo:hi'");
    corpus.size = {parse_double(parts[0], key), parse_double(parts[1], key)};
  } else if (key == "seed") seed = parse_uint(value, key);
  else if (key == "epochs") train.epochs = parse_uint(value, key);
  else if (key == "lr") train.lr = parse_double(value, key);
  else if (key == "lr_decay") train.lr_decay = parse_double(value, key);
  else if (key == "momentum") train.momentum = parse_double(value, key);
  else throw ConfigError("unknown key '" + key + "'");
}

void PretrainConfig::validate() const {
  as_config_error([&] {
    corpus.validate();
    labels.validate();
    ArchConfig a = arch;
    a.num_classes = num_classes.value_or(corpus.class_count + 1);
    a.validate();
  });
  if (corpus.scenes == 0) throw ConfigError("scenes must be >= 1");
  if (num_classes && *num_classes < corpus.class_count + 1) {
    throw ConfigError("num_classes is smaller than class_count + 1");
  }
  if (!(train.lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(train.lr_decay > 0.0)) throw ConfigError("lr_decay must be positive");
  if (!(train.momentum >= 0.0 && train.momentum < 1.0)) {
    throw ConfigError("momentum must lie in [0, 1)");
  }
}

PretrainConfig PretrainConfig::parse(const KeyValueFile& file) {
  PretrainConfig cfg;
  for (const auto& e : file.entries()) {
    try {
      cfg.apply(e.key, e.value);
    } catch (const ConfigError& err) {
      file.fail(e, err.what());
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& err) {
    throw ConfigError(file.origin() + ": " + err.what());
  }
  return cfg;
}

PretrainConfig PretrainConfig::load(const fs::path& path) {
  return parse(KeyValueFile::load(path));
}

PretrainResult execute_pretrain(const PretrainConfig& cfg,
                                const std::optional<fs::path>& snapshot, std::ostream* log) {
  cfg.validate();
  PretrainCorpusConfig corpus = cfg.corpus;
  corpus.seed = derive_seed(cfg.seed, "corpus");
  ArchConfig arch = cfg.arch;
  arch.num_classes = cfg.num_classes.value_or(corpus.class_count + 1);

  PretrainResult result;
  result.net = std::make_shared<Network<float>>(arch, derive_seed(cfg.seed, "student_init"));
  if (cfg.train.epochs > 0) {
    const auto data = make_pretrain_corpus(corpus, cfg.labels);
    NetworkStudent student(result.net);
    OfflineTrainOptions train = cfg.train;
    train.seed = derive_seed(cfg.seed, "shuffle");
    result.epochs = offline_oracle_train(student, data, train);
    if (log) {
      for (const auto& e : result.epochs) {
        *log << "epoch " << e.epoch << ": loss " << e.mean_loss << ", train mean IoU "
             << e.train_mean_iou << "\n";
      }
    }
  }
  if (snapshot) {
    if (snapshot->has_parent_path()) fs::create_directories(snapshot->parent_path());
    save_network(*snapshot, *result.net);
    write_text(fs::path(snapshot->string() + ".log.csv"), format_pretrain_log(result.epochs));
  }
  return result;
}

std::string format_pretrain_log(const std::vector<EpochStats>& epochs) {
  std::string out = "epoch,loss,train_mean_iou\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch) + "," + fixed6(e.mean_loss) + "," + fixed6(e.train_mean_iou) +
           "\n";
  }
  return out;
}

SweepKnob parse_knob(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ConfigError("knob must look like name=v1,v2,...: '" + text + "'");
  SweepKnob k;
  k.name = text.substr(0, eq);
  const auto& known = sweep_knobs();
  if (std::find(known.begin(), known.end(), k.name) == known.end()) {
    std::string list;
    for (const auto& n : known) list += (list.empty() ? "" : ", ") + n;
    throw ConfigError("unknown sweep knob '" + k.name + "' (expected one of " + list + ")");
  }
  for (auto& v : split(text.substr(eq + 1), ',')) {
    if (!v.empty()) k.values.push_back(v);
  }
  if (k.values.empty()) throw ConfigError("knob '" + k.name + "' has no values");
  return k;
}

std::vector<SweepCell> execute_sweep(const RunConfig& base, const std::vector<SweepKnob>& knobs,
                                     bool write_files, std::ostream* log) {
  std::size_t total = 1;
  for (const auto& k : knobs) total *= k.values.size();
  std::vector<SweepCell> cells;
  for (std::size_t index = 0; index < total; ++index) {
    SweepCell cell;
    RunConfig cfg = base;
    std::size_t rest = index;
    for (std::size_t i = knobs.size(); i-- > 0;) {
      const auto& k = knobs[i];
      cell.settings.insert(cell.settings.begin(), {k.name, k.values[rest % k.values.size()]});
      rest /= k.values.size();
    }
    try {
      for (const auto& [name, value] : cell.settings) cfg.apply(name, value);
      RunOptions opt;
      opt.write_files = false;
      const RunResult r = execute_run(cfg, opt);
      cell.summary = r.summary;
      cell.unstable = !r.summary.numeric_failure_frames.empty() || !r.summary.mean_iou ||
                      *r.summary.mean_iou < kUnstableAccuracy;
    } catch (const std::exception& e) {
      cell.failed = true;
      cell.error = e.what();
    }
    if (log) {
      *log << "cell " << index;
      for (const auto& [name, value] : cell.settings) *log << " " << name << "=" << value;
      if (cell.failed) {
        *log << ": failed: " << cell.error << "\n";
      } else {
        *log << ": mean IoU " << cell.summary.mean_iou.value_or(std::nan("")) << ", speedup "
             << cell.summary.speed.speedup << ", teacher fraction "
             << cell.summary.speed.teacher_fraction << (cell.unstable ? " (unstable)" : "") << "\n";
      }
    }
    cells.push_back(std::move(cell));
  }
  if (write_files) {
    fs::create_directories(base.out_dir);
    write_text(base.out_dir / "sweep.csv", format_sweep_csv(knobs, cells));
  }
  return cells;
}

std::string format_sweep_csv(const std::vector<SweepKnob>& knobs,
                             const std::vector<SweepCell>& cells) {
  std::string out = "cell";
  for (const auto& k : knobs) out += "," + k.name;
  out += ",status,mean_iou,speedup,teacher_fraction,total_updates,param_count,flops_inference\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    out += std::to_string(i);
    for (const auto& kv : c.settings) out += "," + kv.second;
    if (c.failed) {
      out += ",failed,,,,,,\n";
      continue;
    }
    const auto& s = c.summary;
    out += c.unstable ? ",unstable," : ",ok,";
    if (s.mean_iou) out += fixed6(*s.mean_iou);
    out += "," + fixed6(s.speed.speedup) + "," + fixed6(s.speed.teacher_fraction) + "," +
           std::to_string(s.counters.updates) + "," + std::to_string(s.param_count) + "," +
           std::to_string(s.flops_inference) + "\n";
  }
  return out;
}

}  // namespace jitstream
