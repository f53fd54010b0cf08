// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "sonarseg/model.hpp"
#include "sonarseg/verification.hpp"
#include "support.hpp"

using namespace sonarseg;
using sonarseg::testing::params_of;
using sonarseg::testing::randn;

namespace {

// Direct loop transcription of the SimXCA core in long double, one head at a
// time: L1-normalize each Q and K channel over tokens, A = Qn^T Kn,
// out = V A.
std::vector<long double> simxca_oracle(const Tensor<double>& qkv, int heads, double eps) {
  const Index B = qkv.dim(0), N = qkv.dim(1), C = qkv.dim(2) / 3, d = C / heads;
  std::vector<long double> out(static_cast<std::size_t>(B * N * C), 0.0L);
  auto at = [&](Index b, Index n, Index c) -> long double { return qkv[(b * N + n) * 3 * C + c]; };
  for (Index b = 0; b < B; ++b) {
    for (int h = 0; h < heads; ++h) {
      std::vector<long double> qn(static_cast<std::size_t>(N * d)), kn(qn.size());
      for (Index i = 0; i < d; ++i) {
        long double sq = 0, sk = 0;
        for (Index n = 0; n < N; ++n) {
          sq += std::fabs(at(b, n, h * d + i));
          sk += std::fabs(at(b, n, C + h * d + i));
        }
        for (Index n = 0; n < N; ++n) {
          qn[static_cast<std::size_t>(n * d + i)] = at(b, n, h * d + i) / (sq + eps);
          kn[static_cast<std::size_t>(n * d + i)] = at(b, n, C + h * d + i) / (sk + eps);
        }
      }
      for (Index n = 0; n < N; ++n) {
        for (Index j = 0; j < d; ++j) {
          long double acc = 0;
          for (Index i = 0; i < d; ++i) {
            long double a = 0;
            for (Index m = 0; m < N; ++m) a += qn[static_cast<std::size_t>(m * d + i)] * kn[static_cast<std::size_t>(m * d + j)];
            acc += at(b, n, 2 * C + h * d + i) * a;
          }
          out[static_cast<std::size_t>((b * N + n) * C + h * d + j)] = acc;
        }
      }
    }
  }
  return out;
}

double max_diff(const Tensor<double>& got, const std::vector<long double>& want) {
  double worst = 0.0;
  for (Index i = 0; i < got.numel(); ++i) {
    worst = std::max(worst, static_cast<double>(std::fabs(got[i] - want[static_cast<std::size_t>(i)])));
  }
  return worst;
}

}  // namespace

TEST_CASE("simxca core matches a brute-force oracle") {
  SUBCASE("N=5, C'=4, one head") {
    const auto qkv = randn<double>({1, 5, 12}, 101);
    NoGradGuard guard;
    const auto got = ops::simxca_core(constant(qkv), 1, kSimXcaEps)->value;
    CHECK(got.shape() == Shape{1, 5, 4});
    CHECK(max_diff(got, simxca_oracle(qkv, 1, kSimXcaEps)) <= 1e-6);
  }
  SUBCASE("two batches, two heads") {
    const auto qkv = randn<double>({2, 7, 24}, 102);
    NoGradGuard guard;
    const auto got = ops::simxca_core(constant(qkv), 2, kSimXcaEps)->value;
    CHECK(max_diff(got, simxca_oracle(qkv, 2, kSimXcaEps)) <= 1e-6);
  }
}

TEST_CASE("simxca attention keeps the token sequence shape") {
  nn::Initializer init(3);
  SimXcaAttention<float> attn(24, 2, init);
  NoGradGuard guard;
  const auto y = attn(constant(randn<float>({1, 4096, 24}, 4)))->value;
  CHECK(y.shape() == Shape{1, 4096, 24});
  CHECK(all_finite(y));
}

TEST_CASE("simxca multiply-accumulate count is linear in tokens") {
  for (auto [c, h] : {std::pair<Index, int>{24, 2}, {48, 4}, {192, 16}}) {
    const Index d = c / h;
    for (Index n : {Index{1}, Index{64}, Index{4096}}) {
      CHECK(simxca_macs(n, c, h) == n * (4 * c * c + 2 * c * d));
      CHECK(simxca_macs(2 * n, c, h) == 2 * simxca_macs(n, c, h));
    }
  }
}

TEST_CASE("simxca invariants") {
  CHECK(check_simxca_scale_invariance().passed);
  CHECK(check_attention_permutation_equivariance().passed);
}

TEST_CASE("stem halves resolution into C/2 channels") {
  nn::Initializer init(5);
  NoGradGuard guard;
  SUBCASE("C=24") {
    Stem<float> stem(24, init);
    CHECK(stem(constant(Tensor<float>({2, 1, 256, 256}, 0.3f)))->value.shape() == Shape{2, 12, 128, 128});
  }
  SUBCASE("C=8") {
    Stem<float> stem(8, init);
    CHECK(stem(constant(Tensor<float>({1, 1, 32, 32})))->value.shape() == Shape{1, 4, 16, 16});
  }
  SUBCASE("zero input gives the bias everywhere") {
    Stem<double> stem(8, init);
    auto params = params_of(stem);
    for (const auto& p : params) {
      if (sonarseg::testing::ends_with(p.name, "bias")) p.var->value = randn<double>(p.var->value.shape(), 6);
    }
    const Tensor<double>* bias = nullptr;
    for (const auto& p : params) {
      if (sonarseg::testing::ends_with(p.name, "bias")) bias = &p.var->value;
    }
    REQUIRE(bias != nullptr);
    const auto y = stem(constant(Tensor<double>({1, 1, 32, 32})))->value;
    for (Index c = 0; c < 4; ++c) {
      for (Index i = 0; i < 16; ++i) {
        for (Index j = 0; j < 16; ++j) CHECK(y.at4(0, c, i, j) == (*bias)[c]);
      }
    }
  }
  SUBCASE("rejects sides not divisible by 32") {
    Stem<float> stem(8, init);
    CHECK_THROWS(stem(constant(Tensor<float>({1, 1, 48, 64}))));
  }
}

TEST_CASE("multiscale patch merge") {
  nn::Initializer init(7);
  NoGradGuard guard;
  SUBCASE("stage-2 and stage-4 shapes") {
    MultiscalePatchMerge<float> m12(12, init);
    CHECK(m12(constant(randn<float>({1, 12, 128, 128}, 8)))->value.shape() == Shape{1, 24, 64, 64});
    MultiscalePatchMerge<float> m96(96, init);
    CHECK(m96(constant(randn<float>({1, 96, 16, 16}, 9)))->value.shape() == Shape{1, 192, 8, 8});
  }
  SUBCASE("fewer parameters than a full 3x3 stride-2 conv at C'=12") {
    CHECK(patch_merge_params(12) < 9 * 12 * 24);
    CHECK(full_conv_merge_params(12) == 2592);
  }
  SUBCASE("inequality holds at every stage width from 12 up") { CHECK(check_patch_merge_inequality().passed); }
}

TEST_CASE("patch merge bias gradients on a zero input equal the pooled-path value") {
  // With x = 0 every branch is constant per channel, so the output is an
  // affine function of the biases; d/d(bias_c) sum(out * r) = sum_{b,y,x} r_c.
  nn::Initializer init(10);
  MultiscalePatchMerge<double> merge(4, init);
  auto params = params_of(merge);
  const auto r = randn<double>({2, 8, 4, 4}, 11);
  auto x = leaf(Tensor<double>({2, 4, 8, 8}));
  backward(ops::dot_with(merge(x), r));
  std::vector<double> want(8, 0.0);
  for (Index b = 0; b < 2; ++b) {
    for (Index c = 0; c < 8; ++c) {
      for (Index i = 0; i < 16; ++i) want[static_cast<std::size_t>(c)] += r[(b * 8 + c) * 16 + i];
    }
  }
  int biases = 0;
  for (const auto& p : params) {
    if (p.name != "proj.bias" && p.name != "residual.bias") continue;
    ++biases;
    for (Index c = 0; c < 8; ++c) CHECK(p.var->grad[c] == doctest::Approx(want[static_cast<std::size_t>(c)]).epsilon(1e-12));
  }
  CHECK(biases == 2);
}

TEST_CASE("ghost ffn") {
  nn::Initializer init(12);
  SUBCASE("shape on an 8x8 grid") {
    GhostFfn<float> ffn(24, init);
    NoGradGuard guard;
    CHECK(ffn(constant(randn<float>({1, 64, 24}, 13)), Grid{8, 8})->value.shape() == Shape{1, 64, 24});
  }
  SUBCASE("zero weights and biases give a zero output") {
    GhostFfn<double> ffn(8, init);
    sonarseg::testing::zero_weights_and_biases(params_of(ffn));
    NoGradGuard guard;
    const auto y = ffn(constant(randn<double>({2, 16, 8}, 14)), Grid{4, 4})->value;
    CHECK(y == Tensor<double>({2, 16, 8}));
  }
  SUBCASE("grid must match the token count") {
    GhostFfn<float> ffn(8, init);
    NoGradGuard guard;
    CHECK_THROWS(ffn(constant(Tensor<float>({1, 16, 8})), Grid{4, 5}));
  }
  SUBCASE("parameter count without norms") {
    // primary C'^2, three 3x3 depthwise 27C', projection 2C'^2 + C'.
    for (Index w : ffn_widths()) {
      INFO("width " << w);
      CHECK(ghost_ffn_params_without_norms(w) == 3 * w * w + 28 * w);
      CHECK(mlp_reference_params(w) == 4 * w * w + 3 * w);
    }
  }
}

// Known failure: 3C'^2 + 28C' < 4C'^2 + 3C' needs C' > 25, and every preset
// has a stage narrower than that. Reported as FAIL by the acceptance run.
TEST_CASE("ghost ffn is smaller than an expansion-2 MLP at every stage width" * doctest::may_fail()) {
  for (Index w : ffn_widths()) {
    INFO("width " << w);
    CHECK(ghost_ffn_params_without_norms(w) < mlp_reference_params(w));
  }
}

TEST_CASE("transformer layer preserves shape") {
  nn::Initializer init(15);
  TransformerLayer<float> layer(48, 4, FfnKind::kGhost, init);
  NoGradGuard guard;
  CHECK(layer(constant(randn<float>({2, 256, 48}, 16)), Grid{16, 16})->value.shape() == Shape{2, 256, 48});
}

TEST_CASE("encoder stage ladder") {
  NoGradGuard guard;
  SUBCASE("ours at 256") {
    Model<float> model(preset("ours"));
    const auto out = model.encode(constant(Tensor<float>({1, 1, 256, 256}, 0.5f)));
    CHECK(out.stages[0]->value.shape() == Shape{1, 24, 64, 64});
    CHECK(out.stages[1]->value.shape() == Shape{1, 48, 32, 32});
    CHECK(out.stages[2]->value.shape() == Shape{1, 96, 16, 16});
    CHECK(out.stages[3]->value.shape() == Shape{1, 192, 8, 8});
  }
  SUBCASE("ours-dagger at 64") {
    Model<float> model(preset("ours-dagger"));
    const auto out = model.encode(constant(Tensor<float>({1, 1, 64, 64}, 0.5f)));
    CHECK(out.stages[0]->value.shape() == Shape{1, 8, 16, 16});
    CHECK(out.stages[1]->value.shape() == Shape{1, 16, 8, 8});
    CHECK(out.stages[2]->value.shape() == Shape{1, 32, 4, 4});
    CHECK(out.stages[3]->value.shape() == Shape{1, 64, 2, 2});
  }
}

TEST_CASE("blocks stay finite on large uniform inputs") {
  nn::Initializer init(17);
  NoGradGuard guard;
  const auto tokens = sonarseg::testing::uniform<float>({2, 64, 16}, 18, -10.0, 10.0);
  SimXcaAttention<float> attn(16, 2, init);
  GhostFfn<float> ffn(16, init);
  TransformerLayer<float> layer(16, 2, FfnKind::kGhost, init);
  CHECK(all_finite(attn(constant(tokens))->value));
  CHECK(all_finite(ffn(constant(tokens), Grid{8, 8})->value));
  CHECK(all_finite(layer(constant(tokens), Grid{8, 8})->value));
  MultiscalePatchMerge<float> merge(16, init);
  CHECK(all_finite(merge(constant(sonarseg::testing::uniform<float>({2, 16, 8, 8}, 19, -10.0, 10.0)))->value));
  Stem<float> stem(16, init);
  CHECK(all_finite(stem(constant(sonarseg::testing::uniform<float>({1, 1, 64, 64}, 20, -10.0, 10.0)))->value));
}

TEST_CASE("flatten and unflatten round-trip bit-identically") {
  const auto x = randn<float>({2, 5, 4, 6}, 21);
  NoGradGuard guard;
  const auto tokens = ops::to_tokens(constant(x));
  CHECK(tokens->value.shape() == Shape{2, 24, 5});
  CHECK(ops::from_tokens(tokens, 4, 6)->value == x);
}
