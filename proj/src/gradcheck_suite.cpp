#include "mcanet/gradcheck_suite.hpp"

#include <algorithm>
#include <memory>
#include <numeric>
#include <random>

#include "mcanet/backbone.hpp"
#include "mcanet/csra.hpp"
#include "mcanet/errors.hpp"
#include "mcanet/layers.hpp"
#include "mcanet/model.hpp"
#include "mcanet/ops.hpp"
#include "mcanet/rng.hpp"
#include "mcanet/training.hpp"

namespace mcanet {

namespace {

using Td = Tensor<double>;
using Inputs = std::span<const Td>;

// Distinct values on a 0.1 grid (plus a small jitter), shuffled: every
// pooling window has a unique maximum at least ~0.1 above the runner-up.
Td spaced_tensor(const Dims& dims, std::uint64_t seed) {
  Td t(dims);
  std::vector<std::size_t> idx(t.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::uniform_real_distribution<double> jitter(-0.01, 0.01);
  const double offset = 0.05 * static_cast<double>(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = 0.1 * static_cast<double>(idx[i]) - offset + jitter(rng);
  }
  return t;
}

GradCheckReport check(DifferentiableOp op, std::vector<Td> inputs, std::size_t max_coords = 0,
                      double margin = std::numeric_limits<double>::infinity()) {
  GradCheckOptions options;
  options.max_coords_per_input = max_coords;
  GradCheckReport r = gradient_check(op, std::move(inputs), options);
  r.kink_margin = margin;
  return r;
}

// Wraps a module with parameters: input 0 is the module input, inputs 1..P
// are written into the parameters before every evaluation.
template <typename Module>
struct ModuleHarness {
  std::shared_ptr<Module> module;
  std::vector<Param<double>*> params;
  std::function<Td(Module&, const Td&)> forward;
  std::function<Td(Module&, const Td&)> backward;
  std::function<std::uint64_t(const Module&)> signature;

  void load(Inputs in) const {
    for (std::size_t k = 0; k < params.size(); ++k) params[k]->value = in[k + 1];
  }

  DifferentiableOp op(std::string name) const {
    ModuleHarness h = *this;
    DifferentiableOp op;
    op.name = std::move(name);
    op.forward = [h](Inputs in) {
      h.load(in);
      return h.forward(*h.module, in[0]);
    };
    if (h.signature) op.kink_signature = [h] { return h.signature(*h.module); };
    op.backward = [h](Inputs in, const Td& g) {
      h.load(in);
      for (auto* p : h.params) p->zero_grad();
      h.forward(*h.module, in[0]);
      std::vector<Td> grads{h.backward(*h.module, g)};
      for (auto* p : h.params) grads.push_back(p->grad);
      return grads;
    };
    return op;
  }

  std::vector<Td> inputs(Td x) const {
    std::vector<Td> in{std::move(x)};
    for (auto* p : params) in.push_back(p->value);
    return in;
  }
};

// Redraws the module input until every relu input clears the margin.
template <typename Module, typename Margin>
GradCheckReport check_module(const std::string& name, ModuleHarness<Module> h, const Dims& input_dims,
                             std::uint64_t seed, std::size_t max_coords, Margin margin_of) {
  for (std::uint64_t attempt = 0; attempt < 200; ++attempt) {
    Td x = random_tensor(input_dims, derive_seed(seed, {attempt}));
    h.forward(*h.module, x);
    const double margin = static_cast<double>(margin_of(*h.module));
    if (margin < kComposedKinkMargin) continue;
    GradCheckReport r = check(h.op(name), h.inputs(std::move(x)), max_coords, margin);
    if (r.kink_crossings == 0) return r;
  }
  throw NumericError("gradcheck: no kink-free input found for " + name);
}

GradCheckCase conv_case(std::string name, std::uint64_t seed, Dims in, Dims w, bool bias, ConvGeometry geo) {
  return {name, [=] {
            DifferentiableOp op;
            op.name = name;
            op.forward = [=](Inputs x) { return conv2d(x[0], x[1], bias ? &x[2] : nullptr, geo); };
            op.backward = [=](Inputs x, const Td& g) {
              auto r = conv2d_backward(x[0], x[1], bias, g, geo);
              std::vector<Td> out{r.input, r.weight};
              if (bias) out.push_back(r.bias);
              return out;
            };
            std::vector<Td> inputs{random_tensor(in, seed), random_tensor(w, seed + 1)};
            if (bias) inputs.push_back(random_tensor(Dims{w[0]}, seed + 2));
            return check(op, std::move(inputs));
          }};
}

}  // namespace

std::vector<GradCheckCase> gradcheck_suite(std::uint64_t seed) {
  std::vector<GradCheckCase> cases;
  auto s = [seed](std::uint64_t id) { return derive_seed(seed, {id}); };

  cases.push_back(conv_case("conv2d 3x3 stride 1 pad 1 + bias", s(1), {2, 3, 5, 5}, {4, 3, 3, 3}, true, {1, 1}));
  cases.push_back(conv_case("conv2d 3x3 stride 2 pad 1", s(2), {2, 2, 7, 7}, {3, 2, 3, 3}, false, {2, 1}));
  cases.push_back(conv_case("conv2d 1x1 stride 2", s(3), {2, 4, 6, 6}, {3, 4, 1, 1}, false, {2, 0}));
  cases.push_back(conv_case("conv2d 7x7 stride 2 pad 3", s(4), {1, 3, 9, 9}, {2, 3, 7, 7}, false, {2, 3}));

  cases.push_back({"batchnorm2d train", [=] {
                     DifferentiableOp op;
                     op.name = "batchnorm2d train";
                     op.forward = [](Inputs x) {
                       BatchNormStats<double> st(x[1].size());
                       return batchnorm2d(x[0], x[1], x[2], st, Mode::kTrain, 1e-5);
                     };
                     op.backward = [](Inputs x, const Td& g) {
                       BatchNormStats<double> st(x[1].size());
                       BatchNormCache<double> cache;
                       batchnorm2d(x[0], x[1], x[2], st, Mode::kTrain, 1e-5, &cache);
                       auto r = batchnorm2d_backward(cache, x[1], g);
                       return std::vector<Td>{r.input, r.gamma, r.beta};
                     };
                     return check(op, {random_tensor({3, 2, 3, 3}, s(5)), random_tensor({2}, s(6), 0.5, 1.5),
                                       random_tensor({2}, s(7))});
                   }});

  cases.push_back({"relu", [=] {
                     DifferentiableOp op;
                     op.name = "relu";
                     op.forward = [](Inputs x) { return relu(x[0]); };
                     op.backward = [](Inputs x, const Td& g) { return std::vector<Td>{relu_backward(x[0], g)}; };
                     Td x = random_tensor({2, 3, 4, 4}, s(8), -1, 1, kElementwiseKinkMargin);
                     double margin = std::numeric_limits<double>::infinity();
                     for (double v : x.data()) margin = std::min(margin, std::abs(v));
                     return check(op, {x}, 0, margin);
                   }});

  cases.push_back({"maxpool2d 3x3 stride 2 pad 1", [=] {
                     const PoolGeometry geo{3, 2, 1};
                     DifferentiableOp op;
                     op.name = "maxpool2d 3x3 stride 2 pad 1";
                     op.forward = [=](Inputs x) { return maxpool2d(x[0], geo).output; };
                     op.backward = [=](Inputs x, const Td& g) {
                       auto r = maxpool2d(x[0], geo);
                       return std::vector<Td>{maxpool2d_backward(x[0].dims(), r.argmax, g)};
                     };
                     return check(op, {spaced_tensor({2, 2, 7, 7}, s(9))}, 0, kElementwiseKinkMargin - 0.02);
                   }});

  cases.push_back({"linear + bias", [=] {
                     DifferentiableOp op;
                     op.name = "linear + bias";
                     op.forward = [](Inputs x) { return linear(x[0], x[1], &x[2]); };
                     op.backward = [](Inputs x, const Td& g) {
                       auto r = linear_backward(x[0], x[1], true, g);
                       return std::vector<Td>{r.input, r.weight, r.bias};
                     };
                     return check(op, {random_tensor({3, 5}, s(10)), random_tensor({4, 5}, s(11)),
                                       random_tensor({4}, s(12))});
                   }});

  for (double t : {0.5, 3.0}) {
    const std::string name = "softmax temperature " + std::to_string(t).substr(0, 3);
    cases.push_back({name, [=] {
                       DifferentiableOp op;
                       op.name = name;
                       op.forward = [=](Inputs x) { return softmax_with_temperature(x[0], t, 1); };
                       op.backward = [=](Inputs x, const Td& g) {
                         return std::vector<Td>{
                             softmax_with_temperature_backward(softmax_with_temperature(x[0], t, 1), g, t, 1)};
                       };
                       return check(op, {random_tensor({3, 6}, s(13))});
                     }});
  }

  cases.push_back({"sigmoid + bce", [=] {
                     Td labels({3, 4});
                     std::mt19937_64 rng(s(14));
                     for (auto& v : labels.data()) v = static_cast<double>(rng() & 1);
                     DifferentiableOp op;
                     op.name = "sigmoid + bce";
                     op.forward = [=](Inputs x) { return Td({1}, bce_with_logits(x[0], labels).loss); };
                     op.backward = [=](Inputs x, const Td& g) {
                       Td grad = bce_with_logits(x[0], labels).grad_logits;
                       for (auto& v : grad.data()) v *= g[0];
                       return std::vector<Td>{grad};
                     };
                     return check(op, {random_tensor({3, 4}, s(15), -3, 3)});
                   }});

  cases.push_back({"channel slice + concat", [=] {
                     DifferentiableOp op;
                     op.name = "channel slice + concat";
                     op.forward = [](Inputs x) {
                       std::vector<Td> parts{channel_slice(x[0], 1, 2), x[1]};
                       return channel_concat<double>(parts);
                     };
                     op.backward = [](Inputs x, const Td& g) {
                       Td gx = Td::zeros_like(x[0]);
                       const Td g_slice = channel_slice(g, 0, 2);
                       const std::size_t n = x[0].dim(0), c = x[0].dim(1), hw = x[0].dim(2) * x[0].dim(3);
                       for (std::size_t b = 0; b < n; ++b)
                         for (std::size_t k = 0; k < 2; ++k)
                           for (std::size_t j = 0; j < hw; ++j)
                             gx[(b * c + k + 1) * hw + j] = g_slice[(b * 2 + k) * hw + j];
                       return std::vector<Td>{gx, channel_slice(g, 2, x[1].dim(1))};
                     };
                     return check(op, {random_tensor({2, 4, 3, 3}, s(16)), random_tensor({2, 3, 3, 3}, s(17))});
                   }});

  for (double t : {1.0, 99.0}) {
    const std::string name = "csra head T=" + std::to_string(static_cast<int>(t));
    cases.push_back({name, [=] {
                       DifferentiableOp op;
                       op.name = name;
                       op.forward = [=](Inputs x) { return csra_head_forward(FeatureMap<double>{x[0]}, x[1], t, 0.1); };
                       op.backward = [=](Inputs x, const Td& g) {
                         auto r = csra_head_backward(FeatureMap<double>{x[0]}, x[1], t, 0.1, g);
                         return std::vector<Td>{r.features, r.classifier};
                       };
                       return check(op, {random_tensor({2, 5, 3, 3}, s(18), 0, 0.2), random_tensor({4, 5}, s(19))});
                     }});
  }

  cases.push_back({"multi-head csra H=4", [=] {
                     const CsraHeadConfig cfg = CsraHeadConfig::with_heads(4, 4, 0.3);
                     DifferentiableOp op;
                     op.name = "multi-head csra H=4";
                     op.forward = [=](Inputs x) { return multi_head_forward(FeatureMap<double>{x[0]}, x[1], cfg); };
                     op.backward = [=](Inputs x, const Td& g) {
                       auto r = multi_head_backward(FeatureMap<double>{x[0]}, x[1], cfg, g);
                       return std::vector<Td>{r.features, r.classifier};
                     };
                     return check(op, {random_tensor({2, 5, 3, 3}, s(20), 0, 0.2), random_tensor({4, 5}, s(21))});
                   }});

  cases.push_back({"conv unit (conv + bn + relu)", [=] {
                     std::mt19937_64 rng(s(22));
                     ModuleHarness<ConvUnit<double>> h;
                     h.module = std::make_shared<ConvUnit<double>>(
                         "unit", ConvUnitSpec{3, 4, 3, {1, 1}, true, true}, rng);
                     h.module->collect_parameters(h.params);
                     h.forward = [](ConvUnit<double>& m, const Td& x) { return m.forward(x, Mode::kTrain); };
                     h.backward = [](ConvUnit<double>& m, const Td& g) { return m.backward(g); };
                     h.signature = [](const ConvUnit<double>& m) { return m.relu_signature(); };
                     return check_module("conv unit (conv + bn + relu)", h, {2, 3, 4, 4}, s(23), 0,
                                         [](ConvUnit<double>& m) { return m.relu_margin(); });
                   }});

  struct BlockCase {
    std::string name;
    BlockSpec spec;
    Dims input;
  };
  const std::vector<BlockCase> blocks{
      {"res2net block stride 1 (projected skip)", {BlockKind::kRes2Net, 6, 8, 10, 1, 4, true, true}, {2, 6, 4, 4}},
      {"res2net block stride 1 (identity skip)", {BlockKind::kRes2Net, 8, 8, 8, 1, 4, true, true}, {2, 8, 4, 4}},
      {"res2net block stride 2", {BlockKind::kRes2Net, 6, 8, 10, 2, 4, true, true}, {2, 6, 5, 5}},
      {"resnet block stride 2", {BlockKind::kResNet, 6, 4, 10, 2, 1, true, true}, {2, 6, 5, 5}},
  };
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const BlockCase bc = blocks[i];
    cases.push_back({bc.name, [=] {
                       std::mt19937_64 rng(s(30 + i));
                       ModuleHarness<BottleneckBlock<double>> h;
                       h.module = std::make_shared<BottleneckBlock<double>>("block", bc.spec, rng);
                       h.module->collect_parameters(h.params);
                       h.forward = [](BottleneckBlock<double>& m, const Td& x) { return m.forward(x, Mode::kTrain); };
                       h.backward = [](BottleneckBlock<double>& m, const Td& g) { return m.backward(g); };
                       h.signature = [](const BottleneckBlock<double>& m) { return m.relu_signature(); };
                       return check_module(bc.name, h, bc.input, s(40 + i), 0,
                                           [](BottleneckBlock<double>& m) { return m.relu_margin(); });
                     }});
  }

  // Composed network: images and every parameter in, batch BCE loss out.
  struct NetCase {
    std::string name;
    BlockKind block;
    HeadKind head;
  };
  const std::vector<NetCase> nets{
      {"tiny network loss (res2net + csra H=2)", BlockKind::kRes2Net, HeadKind::kCsra},
      {"tiny network loss (resnet + gap)", BlockKind::kResNet, HeadKind::kGap},
  };
  for (std::size_t i = 0; i < nets.size(); ++i) {
    const NetCase nc = nets[i];
    cases.push_back({nc.name, [=] {
                       ModelConfig cfg;
                       cfg.backbone = BackboneConfig::preset("tiny");
                       cfg.backbone.block_kind = nc.block;
                       cfg.backbone.input_size = 8;
                       cfg.head = CsraHeadConfig::with_heads(3, 2, 0.1);
                       cfg.head_kind = nc.head;
                       auto model = std::make_shared<Model<double>>(cfg, s(50 + i));
                       Td labels({3, 3});
                       std::mt19937_64 rng(s(52 + i));
                       for (auto& v : labels.data()) v = static_cast<double>(rng() & 1);

                       ModuleHarness<Model<double>> h;
                       h.module = model;
                       h.params = model->parameters();
                       auto logits = std::make_shared<Td>();
                       h.forward = [labels, logits](Model<double>& m, const Td& x) {
                         *logits = m.forward(x, Mode::kTrain);
                         return Td({1}, bce_with_logits(*logits, labels).loss);
                       };
                       h.backward = [labels, logits](Model<double>& m, const Td& g) {
                         Td grad = bce_with_logits(*logits, labels).grad_logits;
                         for (auto& v : grad.data()) v *= g[0];
                         return m.backward(grad);
                       };
                       h.signature = [](const Model<double>& m) { return m.backbone().relu_signature(); };
                       return check_module(nc.name, h, {3, 3, 8, 8}, s(60 + i), 8,
                                           [](Model<double>& m) { return m.backbone().relu_margin(); });
                     }});
  }
  return cases;
}

}  // namespace mcanet
