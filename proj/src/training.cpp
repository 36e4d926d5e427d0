#include "mcanet/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <random>
#include <thread>

#include "mcanet/bounded_queue.hpp"
#include "mcanet/ops.hpp"
#include "mcanet/rng.hpp"

namespace mcanet {

template <typename T>
void check_binary_labels(const Tensor<T>& labels) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != T(0) && labels[i] != T(1)) {
      throw DataError("label value " + std::to_string(labels[i]) + " at flat index " +
                      std::to_string(i) + " is not 0 or 1");
    }
  }
}

template <typename T>
Tensor<T> labels_to_tensor(std::span<const LabeledSample<T>> samples) {
  if (samples.empty()) throw DataError("no samples");
  const std::size_t c = samples[0].labels.size();
  Tensor<T> out(Dims{samples.size(), c});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].labels.size() != c) throw DataError("inconsistent label vector lengths");
    for (std::size_t j = 0; j < c; ++j) {
      const auto v = samples[i].labels[j];
      if (v > 1) throw DataError("label value " + std::to_string(v) + " is not 0 or 1");
      out.at(i, j) = static_cast<T>(v);
    }
  }
  return out;
}

template <typename T>
T bce_loss(const Tensor<T>& probs, const Tensor<T>& labels) {
  if (probs.rank() != 2 || !probs.same_dims(labels)) {
    throw ConfigError("bce_loss expects matching [N,C] tensors, got " +
                      dims_to_string(probs.dims()) + " and " + dims_to_string(labels.dims()));
  }
  check_binary_labels(labels);
  const double eps = kProbabilityClamp;
  double total = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(static_cast<double>(probs[i]), eps, 1.0 - eps);
    total -= labels[i] == T(1) ? std::log(p) : std::log(1.0 - p);
  }
  return static_cast<T>(total / static_cast<double>(probs.dim(0)));
}

template <typename T>
BceResult<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& labels) {
  const Tensor<T> probs = sigmoid(logits);
  BceResult<T> r{bce_loss(probs, labels), Tensor<T>::zeros_like(logits)};
  const T inv_n = T(1) / static_cast<T>(logits.dim(0));
  for (std::size_t i = 0; i < logits.size(); ++i) r.grad_logits[i] = (probs[i] - labels[i]) * inv_n;
  return r;
}

std::string_view to_string(LrSchedule s) { return s == LrSchedule::kConstant ? "constant" : "cosine"; }

LrSchedule parse_lr_schedule(std::string_view text) {
  if (text == "constant") return LrSchedule::kConstant;
  if (text == "cosine") return LrSchedule::kCosine;
  throw ConfigError("unknown lr schedule '" + std::string(text) + "' (expected constant|cosine)");
}

void OptimConfig::validate() const {
  if (!(lr_head >= 0) || !(lr_backbone >= 0)) throw ConfigError("learning rates must be >= 0");
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum must be in [0,1)");
  if (!(weight_decay >= 0)) throw ConfigError("weight decay must be >= 0");
  if (warmup_steps < -1) throw ConfigError("warmup_steps must be >= 0 (or -1 for one epoch)");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
}

double warmup_lr(std::size_t step, double base_lr, std::size_t warmup_steps) {
  if (warmup_steps == 0) return base_lr;
  return base_lr * std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(warmup_steps));
}

double scheduled_lr(std::size_t step, double base_lr, std::size_t warmup_steps,
                    std::size_t total_steps, LrSchedule schedule) {
  if (step < warmup_steps || schedule == LrSchedule::kConstant) {
    return warmup_lr(step, base_lr, warmup_steps);
  }
  if (total_steps <= warmup_steps) return base_lr;
  const double progress = std::min(1.0, static_cast<double>(step - warmup_steps) /
                                            static_cast<double>(total_steps - warmup_steps));
  return base_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

template <typename T>
void sgd_momentum_step(std::span<Param<T>* const> params, LearningRates lr, double momentum,
                       double weight_decay) {
  for (const Param<T>* p : params) {
    if (!p->grad.all_finite()) {
      throw NumericError("non-finite gradient in '" + p->name + "'; optimizer step aborted");
    }
  }
  const T mu = static_cast<T>(momentum);
  for (Param<T>* p : params) {
    const T rate = static_cast<T>(p->group == ParamGroup::kHead ? lr.head : lr.backbone);
    const T wd = p->weight_decay ? static_cast<T>(weight_decay) : T(0);
    auto v = p->momentum.data();
    auto w = p->value.data();
    auto g = p->grad.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = mu * v[i] + g[i] + wd * w[i];
      w[i] -= rate * v[i];
    }
  }
}

template <typename T>
Tensor<T> stack_images(std::span<const LabeledSample<T>> samples) {
  if (samples.empty()) throw DataError("cannot stack zero images");
  const Dims& d = samples[0].image.dims();
  if (d.size() != 3) throw ConfigError("sample images must be [3,S,S], got " + dims_to_string(d));
  Tensor<T> out(Dims{samples.size(), d[0], d[1], d[2]});
  const std::size_t each = samples[0].image.size();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].image.dims() != d) throw DataError("inconsistent image sizes in batch");
    std::copy(samples[i].image.data().begin(), samples[i].image.data().end(),
              out.data().begin() + i * each);
  }
  return out;
}

template <typename T>
Tensor<T> predict_scores(Model<T>& model, std::span<const LabeledSample<T>> samples,
                         std::size_t batch_size) {
  std::vector<Tensor<T>> parts;
  for (std::size_t b = 0; b < samples.size(); b += batch_size) {
    const auto chunk = samples.subspan(b, std::min(batch_size, samples.size() - b));
    parts.push_back(sigmoid(model.forward(stack_images(chunk), Mode::kEval)));
  }
  return concat0<T>(parts);
}

template <typename T>
Trainer<T>::Trainer(Model<T>& model, std::span<const LabeledSample<T>> data,
                    TrainerOptions options)
    : model_(model), data_(data), options_(std::move(options)) {
  options_.optim.validate();
  options_.augment.validate();
}

template <typename T>
std::size_t Trainer<T>::steps_per_epoch() const {
  return (data_.size() + options_.optim.batch_size - 1) / options_.optim.batch_size;
}

template <typename T>
typename Trainer<T>::Batch Trainer<T>::make_batch(const std::vector<std::size_t>& order,
                                                  std::size_t begin, std::size_t count) const {
  std::vector<LabeledSample<T>> samples;
  samples.reserve(count);
  for (std::size_t i = begin; i < begin + count; ++i) {
    const LabeledSample<T>& s = data_[order[i]];
    if (options_.augment_enabled) {
      std::mt19937_64 rng(derive_seed(options_.seed, {epoch_, order[i], 0xa7}));
      samples.push_back(augment(s, rng, options_.image_size, options_.augment));
    } else if (s.image.dim(1) != options_.image_size || s.image.dim(2) != options_.image_size) {
      samples.push_back({resize_bilinear(s.image, options_.image_size, options_.image_size), s.labels});
    } else {
      samples.push_back(s);
    }
  }
  return Batch{stack_images<T>(samples), labels_to_tensor<T>(samples)};
}

template <typename T>
EpochStats Trainer<T>::train_epoch() {
  if (data_.empty()) throw DataError("training set is empty");
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::size_t> order(data_.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng(derive_seed(options_.seed, {epoch_, 0x5f}));
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  const std::size_t bs = options_.optim.batch_size;
  const std::size_t n_steps = steps_per_epoch();
  const std::size_t warmup = options_.optim.resolved_warmup(n_steps);
  const std::size_t total = n_steps * options_.optim.epochs;

  BoundedQueue<Batch> queue(options_.prefetch);
  std::exception_ptr producer_error;
  std::jthread producer([&] {
    try {
      for (std::size_t b = 0; b < n_steps; ++b) {
        const std::size_t begin = b * bs;
        if (!queue.push(make_batch(order, begin, std::min(bs, data_.size() - begin)))) break;
      }
    } catch (...) {
      producer_error = std::current_exception();
    }
    queue.close();
  });

  EpochStats stats;
  stats.epoch = epoch_;
  double loss_sum = 0;
  try {
    auto params = model_.parameters();
    while (auto batch = queue.pop()) {
      StepRecord rec;
      rec.epoch = epoch_;
      rec.step = step_;
      rec.lr_head = scheduled_lr(step_, options_.optim.lr_head, warmup, total, options_.optim.schedule);
      rec.lr_backbone =
          scheduled_lr(step_, options_.optim.lr_backbone, warmup, total, options_.optim.schedule);
      model_.zero_grad();
      const Tensor<T> logits = model_.forward(batch->images, Mode::kTrain);
      BceResult<T> bce = bce_with_logits(logits, batch->labels);
      model_.backward(bce.grad_logits);
      sgd_momentum_step<T>(params, {rec.lr_head, rec.lr_backbone}, options_.optim.momentum,
                           options_.optim.weight_decay);
      rec.loss = static_cast<double>(bce.loss);
      loss_sum += rec.loss;
      stats.steps.push_back(rec);
      if (on_step) on_step(rec);
      ++step_;
    }
  } catch (...) {
    queue.close();
    throw;
  }
  producer.join();
  if (producer_error) std::rethrow_exception(producer_error);

  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  stats.mean_loss = loss_sum / static_cast<double>(stats.steps.size());
  stats.images_per_second = secs > 0 ? static_cast<double>(data_.size()) / secs : 0;
  ++epoch_;
  return stats;
}

#define MCANET_INSTANTIATE_TRAINING(T)                                                       \
  template void check_binary_labels(const Tensor<T>&);                                       \
  template Tensor<T> labels_to_tensor(std::span<const LabeledSample<T>>);                    \
  template T bce_loss(const Tensor<T>&, const Tensor<T>&);                                   \
  template BceResult<T> bce_with_logits(const Tensor<T>&, const Tensor<T>&);                 \
  template void sgd_momentum_step(std::span<Param<T>* const>, LearningRates, double, double); \
  template Tensor<T> stack_images(std::span<const LabeledSample<T>>);                        \
  template Tensor<T> predict_scores(Model<T>&, std::span<const LabeledSample<T>>, std::size_t); \
  template class Trainer<T>;

MCANET_INSTANTIATE_TRAINING(float)
MCANET_INSTANTIATE_TRAINING(double)

}  // namespace mcanet
