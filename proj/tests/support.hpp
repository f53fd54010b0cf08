// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <string>

#include "sonarseg/model.hpp"

namespace sonarseg::testing {

template <typename T>
Tensor<T> randn(Shape shape, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.span()) v = static_cast<T>(normal(rng));
  return t;
}

template <typename T>
Tensor<T> uniform(Shape shape, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.span()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
Index count(const ParameterList<T>& params) {
  Index n = 0;
  for (const auto& p : params) n += p.var->value.numel();
  return n;
}

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Zeroes every convolution / linear weight and every bias; norm gains and
// shifts keep their init (gain 1, shift 0).
template <typename T>
void zero_weights_and_biases(const ParameterList<T>& params) {
  for (const auto& p : params) {
    if (ends_with(p.name, "weight") || ends_with(p.name, "bias")) p.var->value.fill(T{0});
  }
}

template <template <typename> class Block, typename T>
ParameterList<T> params_of(const Block<T>& block) {
  ParameterList<T> out;
  block.collect(out, "");
  return out;
}

}  // namespace sonarseg::testing
