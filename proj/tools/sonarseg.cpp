// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

// Command-line entry point. Exit codes: 0 success, 1 user error,
// 2 verification failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sonarseg/data.hpp"
#include "sonarseg/training.hpp"
#include "sonarseg/verification.hpp"

namespace {

using nlohmann::json;
using namespace sonarseg;

constexpr int kExitOk = 0;
constexpr int kExitUser = 1;
constexpr int kExitVerify = 2;

struct UserError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A subcommand's settings: typed defaults, overridden by a JSON config file,
// overridden in turn by flags given on the command line.
class Settings {
 public:
  struct Flag {
    std::string name;
    json fallback;
    std::string help;
  };

  Settings(CLI::App& parent, const std::string& name, const std::string& description, std::vector<Flag> flags)
      : flags_(std::move(flags)) {
    app_ = parent.add_subcommand(name, description);
    app_->add_option("--config", config_path_, "JSON object of flag values (flag names without dashes)");
    for (const auto& f : flags_) {
      if (f.fallback.is_boolean()) {
        app_->add_flag("--" + f.name + ",!--no-" + f.name, bools_[f.name], f.help);
      } else {
        app_->add_option("--" + f.name, raw_[f.name], f.help + " (default " + f.fallback.dump() + ")");
      }
    }
  }

  CLI::App* app() const { return app_; }
  bool chosen() const { return app_->parsed(); }

  // Resolves the effective settings; `explicit_keys` receives names set by
  // the config file or the command line.
  json resolve(std::set<std::string>* explicit_keys = nullptr) const {
    json out = json::object();
    for (const auto& f : flags_) out[f.name] = f.fallback;
    if (!config_path_.empty()) {
      std::ifstream in(config_path_);
      if (!in) throw UserError("cannot open config file " + config_path_);
      json file;
      try {
        in >> file;
      } catch (const json::exception& e) {
        throw UserError("config file " + config_path_ + " is not valid JSON: " + e.what());
      }
      if (!file.is_object()) throw UserError("config file must hold a JSON object");
      for (const auto& [key, value] : file.items()) {
        if (!out.contains(key)) throw UserError("unknown key '" + key + "' in config file");
        if (!same_kind(out[key], value)) {
          throw UserError("config key '" + key + "' expects a value like " + out[key].dump());
        }
        out[key] = value;
        if (explicit_keys) explicit_keys->insert(key);
      }
    }
    for (const auto& f : flags_) {
      const auto* opt = app_->get_option_no_throw("--" + f.name);
      if (!opt || opt->count() == 0) continue;
      out[f.name] = f.fallback.is_boolean() ? json(bools_.at(f.name)) : parse_value(f, raw_.at(f.name));
      if (explicit_keys) explicit_keys->insert(f.name);
    }
    return out;
  }

 private:
  static bool same_kind(const json& want, const json& got) {
    if (want.is_number()) return got.is_number();
    return want.type() == got.type();
  }

  static json parse_value(const Flag& f, const std::string& text) {
    try {
      std::size_t used = 0;
      if (f.fallback.is_number_unsigned()) {
        if (!text.empty() && text[0] == '-') throw std::invalid_argument("negative");
        const auto v = std::stoull(text, &used, 0);
        if (used == text.size()) return v;
      } else if (f.fallback.is_number_integer()) {
        const auto v = std::stoll(text, &used);
        if (used == text.size()) return v;
      } else if (f.fallback.is_number()) {
        const auto v = std::stod(text, &used);
        if (used == text.size()) return v;
      } else {
        return text;
      }
    } catch (const std::exception&) {
    }
    throw UserError("--" + f.name + ": cannot parse '" + text + "'");
  }

  CLI::App* app_ = nullptr;
  std::vector<Flag> flags_;
  std::string config_path_;
  std::map<std::string, std::string> raw_;
  std::map<std::string, bool> bools_;
};

void echo_config(const std::string& command, const json& effective) {
  std::cerr << "effective config (" << command << "): " << effective.dump() << "\n";
}

std::string require_path(const json& s, const std::string& key) {
  const auto v = s.at(key).get<std::string>();
  if (v.empty()) throw UserError("--" + key + " is required");
  return v;
}

std::vector<double> parse_numbers(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UserError(flag + ": '" + item + "' is not a number");
    }
  }
  return out;
}

std::array<double, kNumSeabedClasses> parse_four(const std::string& text, const std::string& flag) {
  const auto v = parse_numbers(text, flag);
  if (v.size() != kNumSeabedClasses) throw UserError(flag + " needs 4 comma-separated numbers");
  return {v[0], v[1], v[2], v[3]};
}

void write_json(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw UserError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

Model<float> load_model(const std::string& path) {
  if (!std::filesystem::exists(path)) throw UserError("checkpoint not found: " + path);
  return load_checkpoint<float>(path);
}

// ---- subcommands ------------------------------------------------------------

int run_gen_data(const json& s) {
  GenerateOptions opt;
  opt.height = s["height"].get<Index>();
  opt.width = s["width"].get<Index>();
  opt.count = s["count"].get<int>();
  opt.seed = s["seed"].get<std::uint64_t>();
  opt.class_mix = parse_four(s["class-mix"].get<std::string>(), "--class-mix");
  opt.split.train_ratio = s["train-ratio"].get<double>();
  opt.split.val_ratio = 1.0 - opt.split.train_ratio;
  opt.split.test_fraction = s["test-fraction"].get<double>();
  const std::string root = require_path(s, "out");
  const auto m = generate_dataset(root, opt);
  for (const auto& w : m.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << json{{"out", root},
                    {"tiles", m.entries.size()},
                    {"train", m.count(Split::kTrain)},
                    {"val", m.count(Split::kVal)},
                    {"test", m.count(Split::kTest)},
                    {"class_frequency", m.class_frequency},
                    {"warnings", m.warnings}}
                   .dump(2)
            << "\n";
  return kExitOk;
}

int run_train(const json& s, const std::set<std::string>& explicit_keys) {
  const std::filesystem::path data = require_path(s, "data");
  const std::filesystem::path out = s["out"].get<std::string>();
  TrainConfig cfg = TrainConfig::desk();
  if (s["full-schedule"].get<bool>()) {
    cfg.epochs = 100;
    cfg.batch_size = 64;
  }
  if (explicit_keys.count("epochs") || !s["full-schedule"].get<bool>()) cfg.epochs = s["epochs"].get<int>();
  if (explicit_keys.count("batch") || !s["full-schedule"].get<bool>()) cfg.batch_size = s["batch"].get<int>();
  cfg.base_lr = s["lr"].get<double>();
  cfg.weight_decay = s["weight-decay"].get<double>();
  cfg.warmup_epochs = s["warmup"].get<int>();
  cfg.poly_power = s["poly-power"].get<double>();
  cfg.seed = s["seed"].get<std::uint64_t>();
  cfg.augment = s["augment"].get<bool>();
  const auto weights = s["class-weights"].get<std::string>();
  if (weights != "auto") cfg.class_weights = parse_four(weights, "--class-weights");
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UserError(e.what());
  }

  const auto model_cfg = preset(s["preset"].get<std::string>());
  Model<float> model(model_cfg, s["init-seed"].get<std::uint64_t>(), s["preset"].get<std::string>());
  const auto manifest = read_manifest(data);
  const auto train_set = load_samples(data, manifest, Split::kTrain);
  const auto val_set = load_samples(data, manifest, Split::kVal);
  if (train_set.empty()) throw UserError("dataset " + data.string() + " has no training tiles");
  std::cerr << "training " << model.preset_name() << " (" << count_parameters(model) << " params) on "
            << train_set.size() << " tiles, " << val_set.size() << " validation tiles\n";

  std::filesystem::create_directories(out);
  json effective = s;
  effective["resolved_train_config"] = to_json(cfg);
  write_json(out / "config.json", effective);

  TrainHooks hooks;
  hooks.checkpoint_path = out / "checkpoint.ssg";
  hooks.on_epoch = [&](const EpochRecord& e) {
    std::cerr << "epoch " << e.epoch << "/" << cfg.epochs << " loss " << e.loss << " train_acc "
              << e.train_pixel_accuracy;
    if (e.val_miou) std::cerr << " val_miou " << *e.val_miou;
    std::cerr << " lr " << e.lr << "\n";
  };
  const auto result = train(model, train_set, val_set, cfg, hooks);
  write_json(out / "history.json", history_to_json(result));
  std::cout << json{{"checkpoint", (out / "checkpoint.ssg").string()},
                    {"history", (out / "history.json").string()},
                    {"epochs", result.history.size()},
                    {"best_epoch", result.best_epoch},
                    {"best_val_miou", result.best_val_miou ? json(*result.best_val_miou) : json(nullptr)}}
                   .dump(2)
            << "\n";
  return kExitOk;
}

int run_eval(const json& s) {
  const std::filesystem::path data = require_path(s, "data");
  const auto model = load_model(require_path(s, "checkpoint"));
  const auto split = split_from_string(s["split"].get<std::string>());
  const auto manifest = read_manifest(data);
  const auto samples = load_samples(data, manifest, split);
  if (samples.empty()) throw UserError("split '" + to_string(split) + "' of " + data.string() + " is empty");
  auto report = evaluate(model, samples, s["batch"].get<int>());
  const int iters = s["bench-iters"].get<int>();
  if (iters > 0) report.fps = benchmark_throughput(model, 256, 256, 1, iters).fps;
  auto j = to_json(report);
  j["preset"] = model.preset_name();
  j["split"] = to_string(split);
  j["tiles"] = samples.size();
  write_json(s["out"].get<std::string>(), j);
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

int run_segment(const json& s) {
  const std::filesystem::path input = require_path(s, "input");
  const std::filesystem::path output = require_path(s, "output");
  std::filesystem::path overlay_path = s["overlay"].get<std::string>();
  if (overlay_path.empty()) {
    overlay_path = output.parent_path() / (output.stem().string() + "_overlay.png");
  }
  if (!std::filesystem::exists(input)) throw UserError("input not found: " + input.string());
  const auto image = from_gray8(read_png_gray(input));
  if (image.height < kTileSize || image.width < kTileSize) {
    throw UserError("waterfall must be at least 256x256, got " + std::to_string(image.height) + "x" +
                    std::to_string(image.width));
  }

  std::vector<MaskTile> predicted;
  const auto layout = make_tile_layout(image.height, image.width);
  const auto oracle = s["oracle-mask"].get<std::string>();
  if (!oracle.empty()) {
    // Identity path: the "prediction" of every tile is the ground truth.
    const auto truth = read_png_indices(oracle);
    if (truth.height != image.height || truth.width != image.width) throw UserError("oracle mask size differs from input");
    for (const auto& o : layout.origins()) predicted.push_back({crop(truth, o, kTileSize, kTileSize), o});
  } else {
    const auto model = load_model(require_path(s, "checkpoint"));
    const auto origins = layout.origins();
    const auto batch = static_cast<std::size_t>(std::max(1, s["batch"].get<int>()));
    for (std::size_t start = 0; start < origins.size(); start += batch) {
      const auto end = std::min(origins.size(), start + batch);
      std::vector<Sample> tiles;
      for (std::size_t i = start; i < end; ++i) {
        tiles.push_back({crop(image, origins[i], kTileSize, kTileSize), Mask(kTileSize, kTileSize)});
      }
      const auto labels = argmax_labels(model.predict_logits(make_batch(tiles, 0, tiles.size()).first));
      for (std::size_t i = start; i < end; ++i) {
        Mask m(kTileSize, kTileSize);
        const auto offset = static_cast<std::ptrdiff_t>((i - start) * kTileSize * kTileSize);
        std::copy(labels.begin() + offset, labels.begin() + offset + kTileSize * kTileSize, m.pixels.begin());
        predicted.push_back({std::move(m), origins[i]});
      }
    }
  }
  const auto mask = stitch_masks(predicted, image.height, image.width);
  if (output.has_parent_path()) std::filesystem::create_directories(output.parent_path());
  write_png_palette(output, mask, mask_palette());
  write_png_rgb(overlay_path, image.height, image.width, overlay(image, mask));
  std::cout << json{{"mask", output.string()},
                    {"overlay", overlay_path.string()},
                    {"height", image.height},
                    {"width", image.width},
                    {"tiles", predicted.size()},
                    {"class_fractions", class_fractions(mask)}}
                   .dump(2)
            << "\n";
  return kExitOk;
}

int run_bench(const json& s) {
  const auto which = s["preset"].get<std::string>();
  const int iters = s["iters"].get<int>();
  if (iters < 1) throw UserError("--iters must be >= 1");
  const Index h = s["height"].get<Index>(), w = s["width"].get<Index>();
  std::vector<std::string> names = which == "all" ? preset_names() : std::vector<std::string>{which};
  json results = json::array();
  for (const auto& name : names) {
    Model<float> model(preset(name), kDefaultInitSeed, name);
    const auto r = benchmark_throughput(model, h, w, s["warmup"].get<int>(), iters);
    results.push_back({{"preset", name},
                       {"fps", r.fps},
                       {"median_latency_s", r.median_latency_s},
                       {"params", count_parameters(model)},
                       {"iters", iters},
                       {"input", {1, 1, h, w}},
                       {"device_note", s["device-note"]}});
  }
  std::cout << (results.size() == 1 ? results[0] : json{{"results", results}}).dump(2) << "\n";
  return kExitOk;
}

int run_verify(const json& s) {
  bool ok = true;
  for (const auto& block : gradient_check_blocks()) {
    const auto r = gradient_check(block, kGradCheckTolerance, s["seed"].get<std::uint64_t>());
    ok = ok && r.passed;
    std::printf("%s gradient_check/%s max_rel_error=%.3e checked=%lld skipped_at_kinks=%lld\n",
                r.passed ? "PASS" : "FAIL", block.c_str(), r.max_rel_error, static_cast<long long>(r.checked),
                static_cast<long long>(r.skipped));
  }
  for (const auto& r : run_invariant_suite()) {
    ok = ok && r.passed;
    std::printf("%s invariant/%s %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
  }
  std::printf("%s\n", ok ? "verify: all checks passed" : "verify: some checks failed");
  return ok ? kExitOk : kExitVerify;
}

int run_params(const json& s) {
  const auto filter = s["preset"].get<std::string>();
  const auto rows = parameter_report();
  bool ok = true, any = false;
  for (const auto& r : rows) {
    if (!filter.empty() && r.ref.label != filter) continue;
    any = true;
    ok = ok && r.within;
    std::printf("%-15s %-8s params=%-9lld reference=%.2fM ratio=%.3f %s\n", r.ref.label.c_str(), r.ref.table.c_str(),
                static_cast<long long>(r.count), r.ref.millions, r.ratio, r.within ? "PASS" : "FAIL");
  }
  if (!any) throw UserError("no parameter reference named '" + filter + "'");
  if (filter.empty()) {
    const auto order = check_parameter_orderings(rows);
    ok = ok && order.passed;
    std::printf("%s orderings: %s\n", order.passed ? "PASS" : "FAIL", order.detail.c_str());
  }
  return ok ? kExitOk : kExitVerify;
}

std::string default_mix() {
  std::ostringstream s;
  for (int c = 0; c < kNumSeabedClasses; ++c) s << (c ? "," : "") << kSurveyClassMix[c];
  return s.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sonarseg: side-scan sonar seabed segmentation"};
  app.require_subcommand(1);
  const auto desk = TrainConfig::desk();

  Settings gen(app, "gen-data", "Generate a synthetic tiled dataset",
               {{"out", "", "output dataset directory"},
                {"height", 1024, "waterfall height (pings)"},
                {"width", 512, "waterfall width (px)"},
                {"count", 10, "number of waterfalls"},
                {"seed", std::uint64_t{0}, "generator seed"},
                {"class-mix", default_mix(), "class shares: sand_ripples,rocks,maerl,fine_sediment"},
                {"train-ratio", 0.8, "train share of non-test tiles (rest is validation)"},
                {"test-fraction", 0.05, "test tiles relative to train tiles (whole waterfalls)"}});
  Settings tr(app, "train", "Train a model on a dataset directory",
              {{"data", "", "dataset directory"},
               {"out", "run", "output directory (checkpoint.ssg, history.json, config.json)"},
               {"preset", "ours", "model preset"},
               {"epochs", desk.epochs, "epochs"},
               {"batch", desk.batch_size, "batch size"},
               {"lr", desk.base_lr, "base learning rate"},
               {"weight-decay", desk.weight_decay, "AdamW weight decay"},
               {"warmup", desk.warmup_epochs, "warmup epochs"},
               {"poly-power", desk.poly_power, "polynomial decay exponent"},
               {"seed", std::uint64_t{0}, "shuffle and augmentation seed"},
               {"init-seed", kDefaultInitSeed, "parameter initialization seed"},
               {"class-weights", "auto", "\"auto\" or 4 comma-separated weights"},
               {"augment", true, "random augmentation (--no-augment disables)"},
               {"full-schedule", false, "100 epochs at batch 64 unless given explicitly"}});
  Settings ev(app, "eval", "Evaluate a checkpoint and write metrics.json",
              {{"checkpoint", "", "checkpoint file"},
               {"data", "", "dataset directory"},
               {"split", "test", "train, val or test"},
               {"out", "metrics.json", "metrics output path"},
               {"batch", 8, "batch size"},
               {"bench-iters", 5, "timed forwards for the fps field (0 skips)"}});
  Settings seg(app, "segment", "Segment a waterfall PNG by tiling, predicting and stitching",
               {{"checkpoint", "", "checkpoint file"},
                {"input", "", "8-bit waterfall PNG"},
                {"output", "", "mask PNG (palette)"},
                {"overlay", "", "overlay PNG (default <output>_overlay.png)"},
                {"oracle-mask", "", "use this ground-truth mask PNG as every tile's prediction"},
                {"batch", 4, "tiles per forward"}});
  Settings bench(app, "bench", "Single-image inference throughput as JSON",
                 {{"preset", "ours-dagger", "model preset or \"all\""},
                  {"device-note", "", "free-text hardware description echoed in the output"},
                  {"iters", 10, "timed iterations"},
                  {"warmup", 2, "untimed iterations"},
                  {"height", 256, "input height"},
                  {"width", 256, "input width"}});
  Settings ver(app, "verify", "Gradient checks and invariant suite",
               {{"seed", std::uint64_t{1}, "seed for random inputs and weights"}});
  Settings par(app, "params", "Parameter counts against published references",
               {{"preset", "", "only this row (e.g. ours, -MLP)"}});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUser;
  }

  try {
    std::set<std::string> explicit_keys;
    auto pick = [&](const Settings& st, const char* name) {
      auto s = st.resolve(&explicit_keys);
      echo_config(name, s);
      return s;
    };
    if (gen.chosen()) return run_gen_data(pick(gen, "gen-data"));
    if (tr.chosen()) {
      const auto s = pick(tr, "train");
      return run_train(s, explicit_keys);
    }
    if (ev.chosen()) return run_eval(pick(ev, "eval"));
    if (seg.chosen()) return run_segment(pick(seg, "segment"));
    if (bench.chosen()) return run_bench(pick(bench, "bench"));
    if (ver.chosen()) return run_verify(pick(ver, "verify"));
    if (par.chosen()) return run_params(pick(par, "params"));
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUser;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUser;
  }
  return kExitUser;
}
