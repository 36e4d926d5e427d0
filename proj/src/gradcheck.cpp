#include "mcanet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mcanet {

double GradCheckReport::worst() const {
  double w = 0;
  for (double e : max_rel_error) w = std::max(w, e);
  return w;
}

Tensor<double> random_tensor(const Dims& dims, std::uint64_t seed, double lo, double hi,
                             double margin) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<double> t(dims);
  for (auto& v : t.data()) {
    v = dist(rng);
    if (std::abs(v) < margin) v = v < 0 ? -margin : margin;
  }
  return t;
}

namespace {

double projected(const Tensor<double>& out, const Tensor<double>& r) {
  double s = 0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * r[i];
  return s;
}

}  // namespace

GradCheckReport gradient_check(const DifferentiableOp& op, std::vector<Tensor<double>> inputs,
                               const GradCheckOptions& options) {
  for (const auto& t : inputs) {
    if (!t.all_finite()) throw ConfigError("gradient_check: non-finite input to " + op.name);
  }
  const Tensor<double> out = op.forward(inputs);
  const std::uint64_t region = op.kink_signature ? op.kink_signature() : 0;
  auto crossed = [&] { return op.kink_signature && op.kink_signature() != region; };
  const Tensor<double> again = op.forward(inputs);
  if (!(out == again)) {
    throw ConfigError("gradient_check: op '" + op.name + "' is not deterministic; refusing");
  }
  const Tensor<double> r = random_tensor(out.dims(), options.seed ^ 0x9e3779b97f4a7c15ULL);
  const std::vector<Tensor<double>> analytic = op.backward(inputs, r);
  if (analytic.size() != inputs.size()) {
    throw ConfigError("gradient_check: backward of '" + op.name + "' returned " +
                      std::to_string(analytic.size()) + " gradients for " +
                      std::to_string(inputs.size()) + " inputs");
  }

  GradCheckReport report{op.name, {}, 0};
  std::mt19937_64 pick(options.seed);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (!analytic[k].same_dims(inputs[k])) {
      throw ConfigError("gradient_check: gradient " + std::to_string(k) + " of '" + op.name +
                        "' has dims " + dims_to_string(analytic[k].dims()));
    }
    std::vector<std::size_t> coords(inputs[k].size());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords_per_input && coords.size() > options.max_coords_per_input) {
      std::shuffle(coords.begin(), coords.end(), pick);
      coords.resize(options.max_coords_per_input);
    }
    double worst = 0;
    for (std::size_t i : coords) {
      const double saved = inputs[k][i];
      auto at = [&](double offset) {
        inputs[k][i] = saved + offset;
        const double v = projected(op.forward(inputs), r);
        report.kink_crossings += crossed();
        return v;
      };
      const double h = options.step;
      const double d1 = at(h) - at(-h);
      const double d2 = at(2 * h) - at(-2 * h);
      inputs[k][i] = saved;
      const double numeric = (8 * d1 - d2) / (12 * h);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.magnitude_floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    report.coords_checked += coords.size();
    report.max_rel_error.push_back(worst);
  }
  return report;
}

}  // namespace mcanet
