// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "sonarseg/model.hpp"
#include "sonarseg/verification.hpp"
#include "support.hpp"

using namespace sonarseg;
using sonarseg::testing::randn;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "sonarseg_model_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

bool within(Index count, double millions) { return std::abs(count / (millions * 1e6) - 1.0) <= 0.10; }

}  // namespace

TEST_CASE("presets") {
  SUBCASE("ours") {
    const auto c = preset("ours");
    CHECK(c.embed_dim == 24);
    CHECK(c.depths == std::array<int, 4>{3, 6, 12, 3});
  }
  SUBCASE("narrow variants") {
    CHECK(preset("ours-ddagger2").embed_dim == 12);
    CHECK(preset("ours-dagger").embed_dim == 8);
    CHECK(preset("ours-dagger").depths == std::array<int, 4>{1, 1, 3, 1});
  }
  SUBCASE("unknown name") { CHECK_THROWS_AS(preset("nope"), std::invalid_argument); }
  SUBCASE("config JSON round-trip") {
    for (const auto& name : preset_names()) CHECK(model_config_from_json(to_json(preset(name))) == preset(name));
  }
}

TEST_CASE("config validation") {
  auto c = preset("ours");
  c.embed_dim = 10;
  c.heads = {3, 4, 8, 16};
  CHECK_THROWS_AS(Model<float>{c}, std::invalid_argument);
  auto z = preset("ours-dagger");
  z.depths = {1, 0, 3, 1};
  CHECK_THROWS_AS(Model<float>{z}, std::invalid_argument);
}

TEST_CASE("parameter counts against published sizes") {
  CHECK(within(count_parameters(preset("ours")), 1.91));
  CHECK(within(count_parameters(preset("ours-dagger")), 0.08));
  CHECK(within(count_parameters(preset("vanilla-simxca")), 2.14));
  for (const auto& row : parameter_report()) {
    INFO(row.ref.label << " ratio " << row.ratio);
    CHECK(row.within);
  }
  CHECK(check_parameter_orderings(parameter_report()).passed);
  const Index dagger = count_parameters(preset("ours-dagger"));
  const Index dd2 = count_parameters(preset("ours-ddagger2"));
  const Index dd = count_parameters(preset("ours-ddagger"));
  const Index ours = count_parameters(preset("ours"));
  CHECK(dagger < dd2);
  CHECK(dd2 < dd);
  CHECK(dd < ours);
  Model<float> model(preset("ours"));
  CHECK(count_parameters(model) == ours);
}

TEST_CASE("forward shapes") {
  NoGradGuard guard;
  Model<float> model(preset("ours"));
  CHECK(model.predict_logits(Tensor<float>({1, 1, 256, 256})).shape() == Shape{1, 4, 256, 256});
  CHECK(model.predict_logits(Tensor<float>({1, 1, 512, 512})).shape() == Shape{1, 4, 512, 512});
  CHECK_THROWS(model.predict_logits(Tensor<float>({1, 3, 256, 256})));
  CHECK_THROWS(model.predict_logits(Tensor<float>({1, 1, 200, 256})));
}

TEST_CASE("shape ladder over every preset") { CHECK(check_shape_ladder().passed); }

TEST_CASE("initialization is a function of the seed") {
  Model<float> a(preset("ours-dagger"), 5), b(preset("ours-dagger"), 5), c(preset("ours-dagger"), 6);
  bool same = true, differs = false;
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    same = same && a.parameters()[i].var->value == b.parameters()[i].var->value;
    differs = differs || !(a.parameters()[i].var->value == c.parameters()[i].var->value);
  }
  CHECK(same);
  CHECK(differs);
}

TEST_CASE("samples in a batch do not interact") {
  Model<float> model(preset("ours-dagger"));
  const auto x = randn<float>({2, 1, 64, 64}, 9);
  const auto both = model.predict_logits(x);
  const Index plane = 64 * 64;
  for (Index b = 0; b < 2; ++b) {
    Tensor<float> one({1, 1, 64, 64});
    std::copy(x.data() + b * plane, x.data() + (b + 1) * plane, one.data());
    const auto single = model.predict_logits(one);
    double worst = 0.0;
    for (Index i = 0; i < single.numel(); ++i) worst = std::max(worst, double(std::abs(single[i] - both[b * single.numel() + i])));
    CHECK(worst <= 1e-5);
  }
}

TEST_CASE("checkpoint round-trip is bit-identical") {
  Model<float> model(preset("ours-dagger"), 11, "ours-dagger");
  // Move off the init so a loader that re-initializes would be caught.
  for (const auto& p : model.parameters()) p.var->value = randn<float>(p.var->value.shape(), p.var->value.numel());
  const auto path = scratch("roundtrip.ssg");
  save_checkpoint(model, path, {{"note", "test"}});
  nlohmann::json extra;
  const auto loaded = load_checkpoint<float>(path, &extra);
  CHECK(extra.at("note") == "test");
  CHECK(loaded.preset_name() == "ours-dagger");
  CHECK(loaded.config() == model.config());
  REQUIRE(loaded.parameters().size() == model.parameters().size());
  for (std::size_t i = 0; i < loaded.parameters().size(); ++i) {
    CHECK(loaded.parameters()[i].name == model.parameters()[i].name);
    CHECK(loaded.parameters()[i].var->value == model.parameters()[i].var->value);
  }
  const auto x = randn<float>({1, 1, 64, 64}, 12);
  CHECK(loaded.predict_logits(x) == model.predict_logits(x));
}

TEST_CASE("corrupt checkpoints are rejected") {
  const auto path = scratch("bad.ssg");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTACKPT";
  }
  CHECK_THROWS(load_checkpoint<float>(path));
  CHECK_THROWS(load_checkpoint<float>(scratch("missing.ssg")));
}
