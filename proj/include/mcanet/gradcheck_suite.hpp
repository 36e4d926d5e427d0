#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mcanet/gradcheck.hpp"

namespace mcanet {

inline constexpr double kGradCheckTolerance = 1e-5;
// Elementwise relu/maxpool inputs are drawn at least this far from a kink.
inline constexpr double kElementwiseKinkMargin = 0.1;
// Composed ops redraw their inputs until every relu input is at least this
// far from zero and no finite-difference perturbation flips a relu.
inline constexpr double kComposedKinkMargin = 1e-4;

struct GradCheckCase {
  std::string name;
  std::function<GradCheckReport()> run;
};

// Every differentiable op in f64: conv2d variants, batchnorm, relu, maxpool,
// linear, softmax with temperature, sigmoid + BCE, channel slice/concat, the
// attention head (single and multi-head), conv units, both block kinds and
// the composed tiny-network loss for both head kinds.
std::vector<GradCheckCase> gradcheck_suite(std::uint64_t seed = 0x6a09e667);

}  // namespace mcanet
