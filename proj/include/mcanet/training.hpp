#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mcanet/data.hpp"
#include "mcanet/label_matrix.hpp"
#include "mcanet/model.hpp"

namespace mcanet {

inline constexpr double kProbabilityClamp = 1e-7;

// Labels as an [N, C] tensor of 0/1; throws DataError on any other value.
template <typename T>
Tensor<T> labels_to_tensor(std::span<const LabeledSample<T>> samples);

template <typename T>
void check_binary_labels(const Tensor<T>& labels);

// Per instance: -sum_i [y_i log p_i + (1 - y_i) log(1 - p_i)] with p clamped
// to [eps, 1 - eps]; averaged over the batch.
template <typename T>
T bce_loss(const Tensor<T>& probs, const Tensor<T>& labels);

template <typename T>
struct BceResult {
  T loss;
  Tensor<T> grad_logits;  // (sigmoid(z) - y) / N
};

template <typename T>
BceResult<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& labels);

enum class LrSchedule { kConstant, kCosine };
std::string_view to_string(LrSchedule s);
LrSchedule parse_lr_schedule(std::string_view text);

struct OptimConfig {
  double lr_head = 0.1;
  double lr_backbone = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  long warmup_steps = -1;  // -1: one epoch worth of steps
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  LrSchedule schedule = LrSchedule::kConstant;

  void validate() const;
  std::size_t resolved_warmup(std::size_t steps_per_epoch) const {
    return warmup_steps < 0 ? steps_per_epoch : static_cast<std::size_t>(warmup_steps);
  }
};

// base_lr * min(1, (step + 1) / warmup_steps); base_lr when warmup_steps == 0.
double warmup_lr(std::size_t step, double base_lr, std::size_t warmup_steps);

// Warmup followed by either a constant rate or cosine decay to zero at total_steps.
double scheduled_lr(std::size_t step, double base_lr, std::size_t warmup_steps,
                    std::size_t total_steps, LrSchedule schedule);

struct LearningRates {
  double head = 0;
  double backbone = 0;
};

// v <- momentum * v + grad + wd * value (wd only where enabled)
// value <- value - lr * v
// Checks every gradient before touching any parameter; throws NumericError
// on NaN/Inf.
template <typename T>
void sgd_momentum_step(std::span<Param<T>* const> params, LearningRates lr, double momentum,
                       double weight_decay);

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;  // global step index
  double lr_head = 0;
  double lr_backbone = 0;
  double loss = 0;
};

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0;
  double images_per_second = 0;
  std::vector<StepRecord> steps;
};

struct TrainerOptions {
  OptimConfig optim;
  AugmentConfig augment;
  bool augment_enabled = true;
  std::size_t image_size = 32;
  std::uint64_t seed = 1;
  std::size_t prefetch = 2;  // batches prepared ahead of the training step
};

// Owns the epoch loop. The shuffle order of epoch e and the augmentation of
// sample i in epoch e depend only on (seed, e, i), so a run resumed from a
// checkpoint at an epoch boundary continues the uninterrupted trajectory.
template <typename T>
class Trainer {
 public:
  Trainer(Model<T>& model, std::span<const LabeledSample<T>> data, TrainerOptions options);

  EpochStats train_epoch();

  std::size_t epoch() const { return epoch_; }
  std::size_t global_step() const { return step_; }
  void set_position(std::size_t epoch, std::size_t step) {
    epoch_ = epoch;
    step_ = step;
  }
  std::size_t steps_per_epoch() const;
  const TrainerOptions& options() const { return options_; }

  std::function<void(const StepRecord&)> on_step;

 private:
  struct Batch {
    Tensor<T> images;
    Tensor<T> labels;
  };
  Batch make_batch(const std::vector<std::size_t>& order, std::size_t begin, std::size_t count) const;

  Model<T>& model_;
  std::span<const LabeledSample<T>> data_;
  TrainerOptions options_;
  std::size_t epoch_ = 0;
  std::size_t step_ = 0;
};

// Stack [3,S,S] sample images into [N,3,S,S].
template <typename T>
Tensor<T> stack_images(std::span<const LabeledSample<T>> samples);

// Eval-mode sigmoid scores for every sample, [N, C].
template <typename T>
Tensor<T> predict_scores(Model<T>& model, std::span<const LabeledSample<T>> samples,
                         std::size_t batch_size = 32);

extern template class Trainer<float>;
extern template class Trainer<double>;

}  // namespace mcanet
