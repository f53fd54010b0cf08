// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "sonarseg/config.hpp"
#include "sonarseg/tensor.hpp"

namespace sonarseg {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Published parameter counts (millions) for the four model sizes and the
// ablation ladder.
struct ParamReference {
  std::string label;
  std::string table;  // "sizes" (model variants) or "ablation" (ablation ladder)
  ModelConfig config;
  double millions = 0.0;
};

const std::vector<ParamReference>& parameter_references();

inline constexpr double kParamTolerance = 0.10;

struct ParamRow {
  ParamReference ref;
  Index count = 0;
  double ratio = 0.0;  // count / reference
  bool within = false;
};

std::vector<ParamRow> parameter_report();

// Every pair of rows in the same table must order like the references.
CheckResult check_parameter_orderings(const std::vector<ParamRow>& rows);

// Widths C' at which blocks are instantiated across all presets.
std::vector<Index> ffn_widths();    // stage channels
std::vector<Index> merge_widths();  // patch-merge input channels

Index ghost_ffn_params_without_norms(Index channels);
Index mlp_reference_params(Index channels);  // 4C'^2 + 3C'
Index patch_merge_params(Index channels);
Index full_conv_merge_params(Index channels);  // 9 * C' * 2C'

inline constexpr Index kMergeInequalityMinWidth = 12;

CheckResult check_simxca_scale_invariance();
CheckResult check_attention_permutation_equivariance();
CheckResult check_shape_ladder();
CheckResult check_ghost_ffn_inequality();
CheckResult check_patch_merge_inequality();
CheckResult check_tile_stitch_roundtrip();
CheckResult check_poly_lr_boundaries();

std::vector<CheckResult> run_invariant_suite();

}  // namespace sonarseg
