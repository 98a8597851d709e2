#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ippg/losses.hpp"
#include "ippg/signal_core.hpp"
#include "ippg/unet_model.hpp"

namespace ippg {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  std::size_t epochs = 8;
  std::size_t batch_size = 96;
  double lr0 = 1.0e-4;
  double decay = 0.05;  // lr(e) = lr0 * (1 - decay)^e
  AdamHyper adam;
  std::uint64_t seed = 0;
  LossConfig loss;
  AugmentConfig augment;
  BandConfig band;
  double fps = kFrameRate;
  Exec exec = Exec::parallel;

  void validate(bool allow_zero_epochs = false) const;
};

struct Fold {
  std::string test_subject;
  std::vector<std::string> train_subjects;
};

struct FoldPlan {
  std::vector<Fold> folds;

  // Throws BadConfig if any leave-one-subject-out invariant is broken.
  void validate(std::span<const std::string> subjects) const;
};

FoldPlan loso_split(std::span<const std::string> subject_ids);

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

// Bias-corrected Adam update in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr, const AdamHyper& hyper = {});

struct BatchInfo {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::span<const WindowPair* const> windows;
};

struct TrainHooks {
  std::function<void(const BatchInfo&)> on_batch;
};

struct TrainResult {
  ModelParams params;
  std::vector<double> batch_losses;
  std::vector<double> epoch_losses;  // mean batch loss per epoch
  std::vector<std::size_t> epoch_sizes;
};

// Mean loss and mean parameter gradient of a U-net over a batch. Samples are
// grouped in fixed chunks and reduced in order, so the result is independent
// of the OpenMP thread count.
double unet_batch_gradient(const ModelParams& params, std::span<const WindowPair* const> batch,
                           const LossConfig& loss, std::span<double> grad, Exec exec);

// Same computation, one sample at a time with reference kernels.
double unet_batch_gradient_serial(const ModelParams& params,
                                  std::span<const WindowPair* const> batch,
                                  const LossConfig& loss, std::span<double> grad);

// Training set for one epoch: every window plus, when augmentation is on,
// two resampled copies at rates (1+r, 1-r) drawn per window.
std::vector<WindowPair> augmented_epoch(std::span<const WindowPair> windows,
                                        const TrainConfig& cfg, std::mt19937_64& rng);

TrainResult train_fold(std::span<const WindowPair> windows, const TrainConfig& cfg,
                       const UnetSpec& spec, const TrainHooks& hooks = {});

// Input fed to the HR estimator: band-passed, z-scored waveform.
std::vector<double> hr_estimator_input(std::span<const double> waveform, const BandConfig& band,
                                       double fps);

// Trains only the HR estimator on outputs of a frozen U-net.
TrainResult train_fdl_stage2(const ModelParams& frozen_unet, std::span<const WindowPair> windows,
                             const TrainConfig& cfg, const HrEstimatorSpec& spec,
                             const TrainHooks& hooks = {});

// Counts audited batches; throws BadConfig when a window of the held-out
// subject reaches training.
class LosoAuditor {
 public:
  explicit LosoAuditor(std::string test_subject) : test_subject_(std::move(test_subject)) {}

  void check(const BatchInfo& batch);
  std::size_t batches_checked() const { return batches_; }
  std::size_t windows_checked() const { return windows_; }

 private:
  std::string test_subject_;
  std::size_t batches_ = 0;
  std::size_t windows_ = 0;
};

}  // namespace ippg
