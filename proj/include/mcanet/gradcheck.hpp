#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mcanet/tensor.hpp"

namespace mcanet {

// A differentiable function of several f64 tensors. `backward` receives the
// same inputs plus dL/d(output) and returns dL/d(input_k) for every input.
struct DifferentiableOp {
  std::string name;
  std::function<Tensor<double>(std::span<const Tensor<double>>)> forward;
  std::function<std::vector<Tensor<double>>(std::span<const Tensor<double>>,
                                            const Tensor<double>&)>
      backward;
  // Optional: identifies the piecewise-linear region (relu on/off pattern) of
  // the most recent forward. Perturbations that change it are counted as
  // kink crossings.
  std::function<std::uint64_t()> kink_signature;
};

struct GradCheckOptions {
  double step = 1e-5;
  // Gradients smaller than this are compared on an absolute scale.
  double magnitude_floor = 1e-4;
  // 0 checks every coordinate; otherwise a seeded random subset per input.
  std::size_t max_coords_per_input = 0;
  std::uint64_t seed = 0x5eed;
};

struct GradCheckReport {
  std::string op_name;
  std::vector<double> max_rel_error;  // one entry per input
  std::size_t coords_checked = 0;
  // Smallest distance of any relu input from zero at the checked point, for
  // ops that contain relus; infinity otherwise.
  double kink_margin = std::numeric_limits<double>::infinity();
  std::size_t kink_crossings = 0;

  double worst() const;
  bool passed(double tolerance) const { return kink_crossings == 0 && worst() < tolerance; }
};

// Compares analytic gradients against fourth-order central differences,
// (8[L(x+h) - L(x-h)] - [L(x+2h) - L(x-2h)]) / 12h, of the scalar
// L = sum(r * op(inputs)) for a fixed random projection r.
// Relative error per coordinate is |a - n| / max(|a|, |n|, magnitude_floor).
// Throws ConfigError if two forward evaluations differ bitwise.
GradCheckReport gradient_check(const DifferentiableOp& op, std::vector<Tensor<double>> inputs,
                               const GradCheckOptions& options = {});

// Random tensor with entries uniform in [lo, hi]; entries with |x| < margin are
// pushed out to +-margin so relu/maxpool kinks stay out of reach of the step.
Tensor<double> random_tensor(const Dims& dims, std::uint64_t seed, double lo = -1.0,
                             double hi = 1.0, double margin = 0.0);

}  // namespace mcanet
