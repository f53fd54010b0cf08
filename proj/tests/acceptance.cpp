// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

// Acceptance run: one PASS/FAIL line per criterion, exit 0 only if all pass.
//
//   acceptance [--only N]... [--workdir DIR]

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "sonarseg/training.hpp"
#include "sonarseg/verification.hpp"

#ifndef SONARSEG_CLI
#error "SONARSEG_CLI must name the sonarseg executable"
#endif

using namespace sonarseg;
namespace fs = std::filesystem;

namespace {

// Tolerances and bars.
constexpr double kRealTimeFps = 1.01;
constexpr double kOverfitAccuracy = 0.95;
constexpr int kOverfitEpochs = 200;
constexpr double kMiouTolerance = 1e-12;
constexpr double kFractionTolerance = 0.05;

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

Outcome parameter_counts() {
  const auto rows = parameter_report();
  Outcome o{true, ""};
  for (const auto& r : rows) {
    o.passed = o.passed && r.within;
    o.detail += r.ref.label + "=" + fmt("%.3f", r.ratio) + (r.within ? "" : "(out)") + " ";
  }
  const auto order = check_parameter_orderings(rows);
  o.passed = o.passed && order.passed;
  o.detail += "| " + order.detail;
  return o;
}

Outcome gradient_suite() {
  Outcome o{true, ""};
  for (const auto& block : gradient_check_blocks()) {
    const auto r = gradient_check(block, kGradCheckTolerance);
    o.passed = o.passed && r.passed;
    o.detail += block + "=" + fmt("%.1e", r.max_rel_error) + (r.passed ? "" : "(FAIL)") + " ";
  }
  return o;
}

Outcome invariant_suite() {
  Outcome o{true, ""};
  for (const auto& r : run_invariant_suite()) {
    o.passed = o.passed && r.passed;
    std::printf("    %s %s: %s\n", r.passed ? "pass" : "FAIL", r.name.c_str(), r.detail.c_str());
  }
  o.detail = o.passed ? "all invariants hold" : "see failing invariants above";
  return o;
}

Outcome overfit() {
  // 640x640 tiles into exactly 4x4 = 16 tiles of 256 at stride 128.
  const auto wf = generate_synthetic_waterfall(640, 640, 11);
  std::vector<Sample> set;
  for (auto& t : tile_waterfall(wf.waterfall.intensity, wf.mask)) set.push_back({std::move(t.image), std::move(t.mask)});
  Model<float> model(preset("ours-dagger"), kDefaultInitSeed, "ours-dagger");
  TrainConfig cfg;
  cfg.epochs = kOverfitEpochs;
  cfg.batch_size = 4;
  cfg.base_lr = 2e-3;
  cfg.warmup_epochs = 5;
  cfg.augment = false;
  cfg.seed = 3;
  int first_epoch = 0;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& e) {
    if (!first_epoch && e.train_pixel_accuracy >= kOverfitAccuracy) first_epoch = e.epoch;
  };
  train(model, set, {}, cfg, hooks);
  const auto r = evaluate(model, set);
  std::ostringstream d;
  d << set.size() << " tiles, final pixel accuracy " << fmt("%.4f", r.pixel_accuracy) << ", mIoU "
    << fmt("%.4f", r.miou) << ", running accuracy first >= 0.95 at epoch " << first_epoch;
  return {set.size() == 16 && r.pixel_accuracy >= kOverfitAccuracy, d.str()};
}

Outcome throughput() {
  // Smallest model first, so fps must decrease down the list.
  const std::vector<std::string> names{"ours-dagger", "ours-ddagger2", "ours-ddagger", "ours"};
  std::vector<double> fps;
  std::ostringstream d;
  for (const auto& n : names) {
    Model<float> model(preset(n), kDefaultInitSeed, n);
    fps.push_back(benchmark_throughput(model, 256, 256, 2, 10).fps);
    d << n << "=" << fmt("%.2f", fps.back()) << " ";
  }
  bool ordered = true;
  for (std::size_t i = 1; i < fps.size(); ++i) ordered = ordered && fps[i] < fps[i - 1];
  d << "img/s; ordering " << (ordered ? "matches" : "does not match") << " parameter counts";
  return {fps[0] >= kRealTimeFps && ordered, d.str()};
}

Outcome miou_oracle() {
  std::mt19937_64 rng(2026);
  std::uniform_int_distribution<int> label(0, 3), ignore(0, 9);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::uint8_t> p(64), t(64);
    for (int i = 0; i < 64; ++i) {
      p[i] = static_cast<std::uint8_t>(label(rng));
      t[i] = ignore(rng) == 0 ? kIgnoreLabel : static_cast<std::uint8_t>(label(rng));
    }
    // Brute force: per class, count intersection and union over non-ignored
    // pixels; average over classes with a non-empty union.
    double sum = 0.0;
    int classes = 0;
    for (int c = 0; c < 4; ++c) {
      long inter = 0, uni = 0;
      for (int i = 0; i < 64; ++i) {
        if (t[i] == kIgnoreLabel) continue;
        inter += p[i] == c && t[i] == c;
        uni += p[i] == c || t[i] == c;
      }
      if (uni == 0) continue;
      sum += static_cast<double>(inter) / static_cast<double>(uni);
      ++classes;
    }
    if (classes == 0) continue;
    worst = std::max(worst, std::abs(mean_iou(p, t).miou - sum / classes));
  }
  return {worst <= kMiouTolerance, "max |diff| " + fmt("%.3e", worst) + " over 1000 pairs"};
}

Outcome generator_fractions() {
  const auto wf = generate_synthetic_waterfall(2048, 2048, 2048);
  const auto f = class_fractions(wf.mask);
  Outcome o{true, ""};
  for (int c = 0; c < kNumSeabedClasses; ++c) {
    const double dev = std::abs(f[c] - kSurveyClassMix[c]);
    o.passed = o.passed && dev <= kFractionTolerance;
    o.detail += std::string(kClassNames[c]) + "=" + fmt("%.4f", f[c]) + " ";
  }
  return o;
}

int shell(const std::string& cmd) {
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome train_determinism(const fs::path& work) {
  const std::string cli = SONARSEG_CLI;
  const auto data = work / "determinism_data";
  fs::remove_all(work / "determinism_a");
  fs::remove_all(work / "determinism_b");
  if (shell(cli + " gen-data --out " + data.string() + " --height 512 --width 384 --count 3 --seed 8 >/dev/null 2>&1")) {
    return {false, "gen-data failed"};
  }
  const std::string args = " --data " + data.string() +
                           " --preset ours-dagger --epochs 4 --batch 4 --warmup 1 --lr 1e-3 --seed 21"
                           " >/dev/null 2>&1";
  for (const char* run : {"determinism_a", "determinism_b"}) {
    if (shell(cli + " train --out " + (work / run).string() + args)) return {false, std::string("train ") + run + " failed"};
  }
  const auto a = slurp(work / "determinism_a" / "history.json");
  const auto b = slurp(work / "determinism_b" / "history.json");
  const bool same = !a.empty() && a == b;
  return {same, same ? "history.json byte-identical across two seeded runs (" + std::to_string(a.size()) + " bytes)"
                     : "history.json differs"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::string workdir = (fs::temp_directory_path() / "sonarseg_acceptance").string();
  app.add_option("--only", only, "run only these criteria (1-8)");
  app.add_option("--workdir", workdir, "scratch directory");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"parameter counts and orderings", parameter_counts},
      {"gradient suite", gradient_suite},
      {"invariant suite", invariant_suite},
      {"overfit 16 tiles", overfit},
      {"real-time throughput", throughput},
      {"mIoU against brute force", miou_oracle},
      {"generator class fractions", generator_fractions},
      {"train determinism", [&] { return train_determinism(workdir); }},
  };
  const std::set<int> selected(only.begin(), only.end());
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    all = all && o.passed;
    std::printf("%s criterion %d (%s): %s [%.1fs]\n", o.passed ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
