// End-to-end acceptance runner: one PASS/FAIL line per criterion.
//
// Exit status is 0 when the set of failing criteria equals the set given by
// --expect-fail (default: none), so a known, documented shortfall does not
// mask a regression elsewhere and an unexpected pass is also reported.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "jitstream/gradcheck.hpp"
#include "jitstream/runner.hpp"
#include "support/oracles.hpp"
#include "support/stubs.hpp"

using namespace jitstream;
using namespace jitstream::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  const GradSuiteReport r = run_gradcheck_suite();
  const double secs = seconds_since(t0);
  std::string worst;
  bool seeds_ok = true;
  for (const auto& e : r.entries) {
    worst += fmt(" %s=%.1e", e.name.c_str(), e.worst);
    if (e.name.rfind("Network", 0) != 0 && e.cases < 20) seeds_ok = false;
  }
  return {r.passed() && seeds_ok && secs < 120.0, fmt("%.1fs;", secs) + worst};
}

std::vector<std::size_t> teacher_frames(const StreamReport& r) {
  std::vector<std::size_t> out;
  for (const auto& rec : r.records)
    if (rec.teacher_invoked) out.push_back(rec.frame_index);
  return out;
}

StreamReport scripted_run(std::size_t frames, ScriptedStudent::Script script,
                          const DistillConfig& cfg = DistillConfig{}) {
  BlankFrameSource src(8, 8, frames);
  UniformTeacher teacher;
  ScriptedStudent student(std::move(script));
  return process_stream(src, teacher, student, cfg);
}

Outcome scheduler_traces() {
  const DistillConfig cfg;
  auto pass = scripted_run(200, [](std::size_t, std::size_t) { return true; });
  const auto pf = teacher_frames(pass);
  bool ok_pass = pf.size() >= 6 && std::vector<std::size_t>(pf.begin(), pf.begin() + 6) ==
                                       std::vector<std::size_t>{0, 16, 32, 64, 128, 192};
  const std::size_t deltas[] = {16, 32, 64, 64, 64};
  for (std::size_t i = 0; ok_pass && i < 5; ++i) ok_pass = pass.records[pf[i]].delta == deltas[i];

  auto fail = scripted_run(200, [](std::size_t, std::size_t) { return false; });
  bool ok_fail = true;
  const auto ff = teacher_frames(fail);
  for (std::size_t i = 0; i < ff.size(); ++i) {
    ok_fail = ok_fail && ff[i] == 8 * i && fail.records[ff[i]].updates == cfg.u_max;
  }
  ok_fail = ok_fail && ff.size() == 25;

  auto mixed = scripted_run(130, [](std::size_t t, std::size_t) { return t != 64; });
  const bool ok_mixed =
      teacher_frames(mixed) == std::vector<std::size_t>{0, 16, 32, 64, 96, 128};

  std::mt19937_64 rng(20190401);
  std::size_t mismatched = 0;
  for (int trace = 0; trace < 1000; ++trace) {
    DistillConfig c;
    c.delta_min = std::size_t{1} << (rng() % 4);
    c.delta_max = c.delta_min << (rng() % 5);
    const std::uint64_t salt = rng();
    const double p = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
    auto passes = [salt, p](std::size_t t) {
      return static_cast<double>(mix64(salt ^ t) >> 11) * 0x1.0p-53 < p;
    };
    const std::size_t frames = 400;
    const auto r = scripted_run(frames, [&](std::size_t t, std::size_t) { return passes(t); }, c);
    const auto sim = simulate_schedule(frames, c.delta_min, c.delta_max, passes);
    for (std::size_t t = 0; t < frames; ++t) {
      if (r.records[t].teacher_invoked != sim[t].teacher || r.records[t].delta != sim[t].delta_after) {
        ++mismatched;
        break;
      }
    }
  }
  return {ok_pass && ok_fail && ok_mixed && mismatched == 0,
          fmt("always-pass %s, always-fail %s, mixed %s, random traces %zu/1000 match",
              ok_pass ? "ok" : "WRONG", ok_fail ? "ok" : "WRONG", ok_mixed ? "ok" : "WRONG",
              1000 - mismatched)};
}

Outcome label_weight_exactness() {
  std::mt19937_64 rng(7);
  std::size_t raster_bad = 0, weight_bad = 0;
  for (int trial = 0; trial < 500; ++trial) {
    TeacherOutput insts;
    const int n = static_cast<int>(rng() % 6);
    for (int i = 0; i < n; ++i) insts.push_back(random_instance(rng, 48, 36));
    if (rasterize_teacher(insts, 0.5, 48, 36) != max_confidence_oracle(insts, 0.5, 48, 36)) {
      ++raster_bad;
    }
    const TeacherOutput kept = retain(insts, 0.5);
    const WeightMap w = build_weight_map(kept, 0.15, 5.0, 48, 36);
    for (int y = 0; y < 36; ++y) {
      for (int x = 0; x < 48; ++x) {
        bool inside = false;
        for (const auto& k : kept) {
          // side moves out by 0.075 * extent: floor low, ceil high
          const double dx = 0.075 * k.box.width(), dy = 0.075 * k.box.height();
          const int x0 = std::max(0, static_cast<int>(std::floor(k.box.x0 - dx + 1e-9)));
          const int y0 = std::max(0, static_cast<int>(std::floor(k.box.y0 - dy + 1e-9)));
          const int x1 = std::min(48, static_cast<int>(std::ceil(k.box.x1 + dx - 1e-9)));
          const int y1 = std::min(36, static_cast<int>(std::ceil(k.box.y1 + dy - 1e-9)));
          inside = inside || (x >= x0 && x < x1 && y >= y0 && y < y1);
        }
        if (w.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) != (inside ? 5.0f : 1.0f)) {
          ++weight_bad;
        }
      }
    }
  }
  const bool example = dilate_box({10, 20, 30, 40}, 0.15, 64, 64) == BoundingBox{8, 18, 32, 42};
  return {raster_bad == 0 && weight_bad == 0 && example,
          fmt("rasterize mismatches %zu/500, weight pixel mismatches %zu, example %s", raster_bad,
              weight_bad, example ? "[8,32)x[18,42)" : "WRONG")};
}

Outcome metric_oracle() {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> extent(1, 64);
  std::size_t bad = 0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t w = extent(rng), h = extent(rng);
    const auto p = random_label_map(w, h, 6, rng);
    const auto l = random_label_map(w, h, 6, rng, 0.05);
    for (bool excl : {false, true}) {
      if (mean_iou(p, l, excl).mean != oracle_mean_iou(p, l, excl)) ++bad;
    }
  }
  LabelMap pred(2, 2), label(2, 2);
  pred.labels = {0, 1, 1, 1};
  label.labels = {0, 1, 0, 1};
  const double v = *mean_iou(pred, label, false).mean;
  const bool example = std::abs(v - 7.0 / 12.0) <= 1e-12;
  return {bad == 0 && example, fmt("oracle mismatches %zu/200, example %.12f", bad, v)};
}

Outcome counter_sanity() {
  const auto t0 = std::chrono::steady_clock::now();
  ArchConfig cfg;
  cfg.num_classes = 32;
  const Network<float> net(cfg, 1);
  const double params = static_cast<double>(count_params(net));
  const double infer = static_cast<double>(estimate_flops(net, 720, 1280, FlopMode::Inference));
  const double train = static_cast<double>(estimate_flops(net, 720, 1280, FlopMode::TrainStep));
  const double secs = seconds_since(t0);
  const bool p_ok = std::abs(params / 3.0e6 - 1.0) <= 0.25;
  const bool f_ok = std::abs(infer / 15.2e9 - 1.0) <= 0.25;
  const double ratio = train / infer;
  const bool r_ok = ratio >= 2.5 && ratio <= 3.5;
  return {p_ok && f_ok && r_ok && secs < 1.0,
          fmt("params %.0f (%s, target 3.0M +-25%%), inference %.2f GFLOPs (%s), "
              "train/infer %.2f (%s)",
              params, p_ok ? "ok" : "out of range", infer / 1e9, f_ok ? "ok" : "out of range",
              ratio, r_ok ? "ok" : "out of range")};
}

struct Runs {
  RunResult thresh07, thresh08, thresh09, noisy;
  fs::path oracle_dir;
  RunConfig oracle_cfg;
};

RunConfig with_out(RunConfig cfg, const fs::path& out, const fs::path& snapshot) {
  cfg.out_dir = out;
  cfg.init_snapshot = snapshot;
  return cfg;
}

Runs run_streams(const fs::path& configs, const fs::path& work, std::ostream& log) {
  log << "pretraining student on the synthetic corpus\n";
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path snapshot = work / "pretrained.jitw";
  execute_pretrain(PretrainConfig::load(configs / "pretrain.cfg"), snapshot, &log);
  log << fmt("pretraining took %.1fs\n", seconds_since(t0));

  Runs runs;
  const RunConfig base = RunConfig::load(configs / "run_standard.cfg");
  auto run = [&](RunConfig cfg, const char* name) {
    const auto t = std::chrono::steady_clock::now();
    auto r = execute_run(cfg);
    log << fmt("%s: %.1fs\n", name, seconds_since(t));
    return r;
  };
  for (double a : {0.7, 0.8, 0.9}) {
    const std::string name = fmt("a_thresh_%.1f", a);
    RunConfig cfg = with_out(base, work / name, snapshot);
    cfg.distill.a_thresh = a;
    RunResult r = run(cfg, name.c_str());
    if (a == 0.7) runs.thresh07 = std::move(r);
    if (a == 0.8) {
      runs.thresh08 = std::move(r);
      runs.oracle_dir = cfg.out_dir;
      runs.oracle_cfg = cfg;
    }
    if (a == 0.9) runs.thresh09 = std::move(r);
  }
  runs.noisy = run(with_out(RunConfig::load(configs / "run_noisy.cfg"), work / "noisy", snapshot),
                   "noisy teacher");
  return runs;
}

Outcome adaptation(const Runs& runs) {
  const auto& r = runs.thresh08;
  const DistillConfig& d = runs.oracle_cfg.distill;
  const double iou = mean_frame_iou(r.report, 100, 2000).value_or(0.0);
  const double fraction = r.summary.speed.teacher_fraction;

  std::size_t shift = 0;
  for (const auto& e : standard_stream_config().events)
    if (e.kind == EventKind::AppearanceShift) shift = e.frame;
  const auto& rec = r.report.records;
  const std::size_t before = rec[shift - 1].delta;
  std::size_t first_check = shift;
  while (first_check < rec.size() && !rec[first_check].teacher_invoked) ++first_check;
  std::optional<std::size_t> at_min, recovered;
  std::size_t checks_to_min = 0;
  for (std::size_t t = shift; t < rec.size(); ++t) {
    if (!at_min && rec[t].teacher_invoked) ++checks_to_min;
    if (!at_min && rec[t].delta == d.delta_min) at_min = t;
    if (at_min && !recovered && rec[t].delta >= 32) recovered = t;
  }
  // Graded literally: delta_min at the first teacher check after the shift.
  // Halving from a stride above 2 * delta_min cannot get there in one check.
  const bool min_ok = at_min && checks_to_min == 1;
  const bool recovery_ok = recovered && *recovered <= shift + 512;
  const bool ok = iou >= 0.75 && fraction <= 0.20 && min_ok && recovery_ok;
  return {ok, fmt("mean IoU vs teacher (frames 100-2000) %.4f, teacher fraction %.2f%%; "
                  "shift at %zu: delta %zu before, first check at %zu -> %zu, delta_min %zu "
                  "reached at %s after %zu checks (%s), back to >=32 at %s (%s)",
                  iou, 100.0 * fraction, shift, before, first_check,
                  first_check < rec.size() ? rec[first_check].delta : 0, d.delta_min,
                  at_min ? std::to_string(*at_min).c_str() : "never", checks_to_min,
                  min_ok ? "ok" : "needs 1", recovered ? std::to_string(*recovered).c_str() : "never",
                  recovery_ok ? "ok" : "late")};
}

Outcome threshold_trend(const Runs& runs) {
  const RunResult* rs[] = {&runs.thresh07, &runs.thresh08, &runs.thresh09};
  double fr[3], iou[3];
  for (int i = 0; i < 3; ++i) {
    fr[i] = rs[i]->summary.speed.teacher_fraction;
    iou[i] = mean_frame_iou(rs[i]->report, 100, 2000).value_or(0.0);
  }
  const bool ok = fr[0] <= fr[1] && fr[1] <= fr[2] && iou[0] <= iou[1] && iou[1] <= iou[2];
  return {ok, fmt("teacher fraction %.2f%% / %.2f%% / %.2f%%, mean IoU %.4f / %.4f / %.4f",
                  100 * fr[0], 100 * fr[1], 100 * fr[2], iou[0], iou[1], iou[2])};
}

Outcome robustness(const Runs& runs) {
  const double oracle = mean_frame_iou(runs.thresh08.report, 100, 2000, true).value_or(0.0);
  const double noisy = mean_frame_iou(runs.noisy.report, 100, 2000, true).value_or(0.0);
  std::size_t failures = 0;
  for (const RunResult* r : {&runs.thresh07, &runs.thresh08, &runs.thresh09, &runs.noisy})
    failures += r->summary.numeric_failure_frames.size();
  const bool ok = oracle - noisy <= 0.10 && failures == 0;
  return {ok, fmt("mean IoU vs ground truth: oracle teacher %.4f, noisy teacher %.4f "
                  "(drop %.4f); non-finite losses %zu",
                  oracle, noisy, oracle - noisy, failures)};
}

Outcome cost_model(const Runs& runs, const fs::path& work) {
  const SpeedupResult s = speedup({1000, 16, 100}, CostModel{});
  const bool formula = std::abs(s.speedup - 300000.0 / 14800.0) <= 1e-6 &&
                       std::abs(s.total_ms - 14800.0) <= 1e-9;
  RunConfig again = runs.oracle_cfg;
  again.out_dir = work / "rerun";
  execute_run(again);
  bool identical = true;
  for (const char* f : {"frames.csv", "summary.json"}) {
    identical = identical && slurp(runs.oracle_dir / f) == slurp(again.out_dir / f) &&
                !slurp(again.out_dir / f).empty();
  }
  return {formula && identical, fmt("example speedup %.6fx (total %.0f ms), rerun %s", s.speedup,
                                    s.total_ms, identical ? "byte-identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_env();
  CLI::App app{"Acceptance checks"};
  std::string configs = JITSTREAM_CONFIG_DIR;
  std::string work = "acceptance_out";
  std::vector<int> expect_fail;
  bool quiet = false;
  app.add_option("--config-dir", configs, "Directory with the bundled configs")->capture_default_str();
  app.add_option("--work-dir", work, "Where runs write their reports")->capture_default_str();
  app.add_option("--expect-fail", expect_fail, "Criteria known to fail");
  app.add_flag("--quiet", quiet, "Suppress progress output");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  std::ostringstream sink;
  std::ostream& log = quiet ? static_cast<std::ostream&>(sink) : std::cerr;
  std::vector<std::pair<int, Outcome>> results;
  auto check = [&](int id, const char* title, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::printf("[%s] %d: %s: %s\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str());
    std::fflush(stdout);
    results.emplace_back(id, o);
  };

  check(1, "gradient suite", gradient_suite);
  check(2, "scheduler traces", scheduler_traces);
  check(3, "label and weight maps", label_weight_exactness);
  check(4, "mean IoU oracle", metric_oracle);
  check(5, "model size and cost at 720p", counter_sanity);

  std::optional<Runs> runs;
  std::string run_error;
  try {
    runs = run_streams(configs, work, log);
  } catch (const std::exception& e) {
    run_error = e.what();
  }
  auto with_runs = [&](auto fn) {
    return [&, fn]() -> Outcome {
      if (!runs) return {false, "stream runs failed: " + run_error};
      return fn(*runs);
    };
  };
  check(6, "online adaptation on the standard stream", with_runs(adaptation));
  check(7, "a_thresh trend", with_runs(threshold_trend));
  check(8, "noisy teacher robustness", with_runs(robustness));
  check(9, "cost model and determinism",
        with_runs([&](const Runs& r) { return cost_model(r, work); }));

  std::set<int> failed, expected(expect_fail.begin(), expect_fail.end());
  for (const auto& [id, o] : results)
    if (!o.pass) failed.insert(id);
  std::printf("%zu/%zu criteria pass", results.size() - failed.size(), results.size());
  if (!expected.empty()) {
    std::printf("; expected failures:");
    for (int id : expected) std::printf(" %d", id);
  }
  std::printf("\n");
  return failed == expected ? 0 : 1;
}
