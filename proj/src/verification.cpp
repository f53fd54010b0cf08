// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "sonarseg/verification.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "sonarseg/training.hpp"

namespace sonarseg {

namespace {

ModelConfig ablation(FfnKind ffn, MergeKind merge, bool aspp) {
  ModelConfig c = preset("ours");
  c.ffn = ffn;
  c.merge = merge;
  c.aux_aspp = aspp;
  return c;
}

template <typename T>
Index count(const ParameterList<T>& params, bool skip_norms = false) {
  Index n = 0;
  for (const auto& p : params) {
    if (skip_norms && p.name.find("norm") != std::string::npos) continue;
    n += p.var->value.numel();
  }
  return n;
}

std::string join(const std::vector<Index>& xs) {
  std::ostringstream s;
  for (std::size_t i = 0; i < xs.size(); ++i) s << (i ? "," : "") << xs[i];
  return s.str();
}

std::string sci(double v) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << v;
  return s.str();
}

}  // namespace

const std::vector<ParamReference>& parameter_references() {
  static const std::vector<ParamReference> refs{
      {"ours", "sizes", preset("ours"), 1.91},
      {"ours-ddagger", "sizes", preset("ours-ddagger"), 0.97},
      {"ours-ddagger2", "sizes", preset("ours-ddagger2"), 0.26},
      {"ours-dagger", "sizes", preset("ours-dagger"), 0.08},
      {"vanilla-simxca", "ablation", preset("vanilla-simxca"), 2.14},
      {"-MLP", "ablation", ablation(FfnKind::kGhost, MergeKind::kConv3x3S2, false), 1.98},
      {"+Multimerge", "ablation", ablation(FfnKind::kGhost, MergeKind::kMultiscale, false), 1.90},
      {"+ASSPP", "ablation", ablation(FfnKind::kGhost, MergeKind::kMultiscale, true), 1.91},
  };
  return refs;
}

std::vector<ParamRow> parameter_report() {
  std::vector<ParamRow> rows;
  for (const auto& ref : parameter_references()) {
    ParamRow r{ref, count_parameters(ref.config), 0.0, false};
    r.ratio = static_cast<double>(r.count) / (ref.millions * 1e6);
    r.within = std::abs(r.ratio - 1.0) <= kParamTolerance;
    rows.push_back(r);
  }
  return rows;
}

CheckResult check_parameter_orderings(const std::vector<ParamRow>& rows) {
  CheckResult res{"parameter_orderings", true, ""};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      const auto& a = rows[i];
      const auto& b = rows[j];
      if (a.ref.table != b.ref.table) continue;
      const int want = (a.ref.millions > b.ref.millions) - (a.ref.millions < b.ref.millions);
      const int got = (a.count > b.count) - (a.count < b.count);
      if (want != got) {
        res.passed = false;
        res.detail += a.ref.label + " vs " + b.ref.label + " out of order; ";
      }
    }
  }
  if (res.passed) res.detail = "all pairwise orderings match within each table";
  return res;
}

std::vector<Index> ffn_widths() {
  std::set<Index> w;
  for (const auto& name : preset_names()) {
    const auto c = preset(name);
    for (int s = 1; s <= kNumStages; ++s) w.insert(c.stage_channels(s));
  }
  return {w.begin(), w.end()};
}

std::vector<Index> merge_widths() {
  std::set<Index> w;
  for (const auto& name : preset_names()) {
    const auto c = preset(name);
    for (int s = 1; s <= kNumStages; ++s) w.insert(c.stage_channels(s) / 2);
  }
  return {w.begin(), w.end()};
}

Index ghost_ffn_params_without_norms(Index channels) {
  nn::Initializer init(0);
  GhostFfn<float> ffn(channels, init);
  ParameterList<float> p;
  ffn.collect(p, "");
  return count(p, true);
}

Index mlp_reference_params(Index channels) { return 4 * channels * channels + 3 * channels; }

Index patch_merge_params(Index channels) {
  nn::Initializer init(0);
  MultiscalePatchMerge<float> m(channels, init);
  ParameterList<float> p;
  m.collect(p, "");
  return count(p);
}

Index full_conv_merge_params(Index channels) { return 9 * channels * 2 * channels; }

CheckResult check_simxca_scale_invariance() {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> scale(0.5, 4.0);
  const Index B = 2, N = 16, C = 8;
  const int heads = 2;
  Tensor<double> qkv({B, N, 3 * C});
  for (auto& v : qkv.span()) v = normal(rng);
  Tensor<double> scaled = qkv;
  // One positive factor per Q channel and per K channel.
  for (Index c = 0; c < 2 * C; ++c) {
    const double s = scale(rng);
    for (Index b = 0; b < B; ++b) {
      for (Index n = 0; n < N; ++n) scaled[(b * N + n) * 3 * C + c] *= s;
    }
  }
  NoGradGuard guard;
  const auto a = ops::simxca_core(constant(qkv), heads, kSimXcaEps)->value;
  const auto b = ops::simxca_core(constant(scaled), heads, kSimXcaEps)->value;
  const double drift = max_abs_diff(a, b);
  return {"simxca_scale_invariance", drift <= 1e-6, "max drift " + sci(drift) + " (limit 1e-6)"};
}

CheckResult check_attention_permutation_equivariance() {
  std::mt19937_64 rng(12);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  nn::Initializer init(12);
  const Index B = 2, N = 64, C = 16;
  SimXcaAttention<float> attn(C, 2, init);
  Tensor<float> x({B, N, C});
  for (auto& v : x.span()) v = normal(rng);
  std::vector<Index> perm(static_cast<std::size_t>(N));
  for (Index i = 0; i < N; ++i) perm[static_cast<std::size_t>(i)] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor<float> xp({B, N, C});
  for (Index b = 0; b < B; ++b) {
    for (Index n = 0; n < N; ++n) {
      for (Index c = 0; c < C; ++c) xp[(b * N + n) * C + c] = x[(b * N + perm[static_cast<std::size_t>(n)]) * C + c];
    }
  }
  NoGradGuard guard;
  const auto y = attn(constant(x))->value;
  const auto yp = attn(constant(xp))->value;
  double worst = 0.0;
  for (Index b = 0; b < B; ++b) {
    for (Index n = 0; n < N; ++n) {
      for (Index c = 0; c < C; ++c) {
        const double d = yp[(b * N + n) * C + c] - y[(b * N + perm[static_cast<std::size_t>(n)]) * C + c];
        worst = std::max(worst, std::abs(d));
      }
    }
  }
  return {"attention_permutation_equivariance", worst <= 1e-5,
          "max deviation " + sci(worst) + " (limit 1e-5)"};
}

CheckResult check_shape_ladder() {
  CheckResult res{"shape_ladder", true, ""};
  for (const auto& name : preset_names()) {
    const auto cfg = preset(name);
    Model<float> model(cfg, kDefaultInitSeed, name);
    for (Index size : {Index{256}, Index{512}}) {
      NoGradGuard guard;
      auto image = constant(Tensor<float>({1, 1, size, size}, 0.5f));
      const auto stages = model.encode(image);
      for (int s = 0; s < kNumStages; ++s) {
        const Shape want{1, cfg.stage_channels(s + 1), size >> (s + 2), size >> (s + 2)};
        if (stages.stages[s]->value.shape() != want) {
          res.passed = false;
          res.detail += name + "@" + std::to_string(size) + " stage " + std::to_string(s + 1) + " " +
                        shape_str(stages.stages[s]->value.shape()) + "; ";
        }
      }
      const auto logits = model.predict_logits(image->value);
      if (logits.shape() != Shape{1, cfg.num_classes, size, size}) {
        res.passed = false;
        res.detail += name + "@" + std::to_string(size) + " logits " + shape_str(logits.shape()) + "; ";
      }
    }
  }
  if (res.passed) res.detail = "all presets at 256 and 512";
  return res;
}

CheckResult check_ghost_ffn_inequality() {
  CheckResult res{"ghost_ffn_param_inequality", true, ""};
  std::vector<Index> failing;
  for (Index w : ffn_widths()) {
    if (ghost_ffn_params_without_norms(w) >= mlp_reference_params(w)) failing.push_back(w);
  }
  res.passed = failing.empty();
  res.detail = failing.empty() ? "ghost < MLP(2C') at widths " + join(ffn_widths())
                               : "ghost >= MLP(2C') at widths " + join(failing) + " of " + join(ffn_widths());
  return res;
}

CheckResult check_patch_merge_inequality() {
  CheckResult res{"patch_merge_param_inequality", true, ""};
  std::vector<Index> checked, failing;
  for (Index w : merge_widths()) {
    if (w < kMergeInequalityMinWidth) continue;
    checked.push_back(w);
    if (patch_merge_params(w) >= full_conv_merge_params(w)) failing.push_back(w);
  }
  res.passed = failing.empty();
  res.detail = failing.empty() ? "multiscale < 3x3 s2 conv at widths " + join(checked)
                               : "multiscale >= conv at widths " + join(failing);
  return res;
}

CheckResult check_tile_stitch_roundtrip() {
  CheckResult res{"tile_stitch_roundtrip", true, ""};
  for (auto [h, w] : {std::pair<Index, Index>{256, 256}, {600, 256}, {512, 512}, {700, 389}}) {
    auto wf = generate_synthetic_waterfall(h, w, static_cast<std::uint64_t>(h * 31 + w));
    // Sprinkle ignore labels so they round-trip too.
    for (std::size_t i = 0; i < wf.mask.pixels.size(); i += 97) wf.mask.pixels[i] = kIgnoreLabel;
    std::vector<MaskTile> tiles;
    for (auto& t : tile_waterfall(wf.waterfall.intensity, wf.mask)) tiles.push_back({std::move(t.mask), t.origin});
    if (!(stitch_masks(tiles, h, w) == wf.mask)) {
      res.passed = false;
      res.detail += std::to_string(h) + "x" + std::to_string(w) + " differs; ";
    }
  }
  if (res.passed) res.detail = "256x256, 600x256, 512x512, 700x389 exact";
  return res;
}

CheckResult check_poly_lr_boundaries() {
  const double base = 6e-5;
  const double a = poly_lr(0, 1000, 30, base, 0.9);
  const double b = poly_lr(30, 1000, 30, base, 0.9);
  const double c = poly_lr(1000, 1000, 30, base, 0.9);
  const bool ok = a == 0.0 && b == base && c == 0.0;
  std::ostringstream s;
  s << "lr(0)=" << a << " lr(warmup)=" << b << " lr(total)=" << c;
  return {"poly_lr_boundaries", ok, s.str()};
}

std::vector<CheckResult> run_invariant_suite() {
  return {check_simxca_scale_invariance(), check_attention_permutation_equivariance(), check_shape_ladder(),
          check_ghost_ffn_inequality(),    check_patch_merge_inequality(),             check_tile_stitch_roundtrip(),
          check_poly_lr_boundaries()};
}

}  // namespace sonarseg
