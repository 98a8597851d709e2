#include "ippg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "ippg/error.hpp"

namespace ippg {

void TrainConfig::validate(bool allow_zero_epochs) const {
  if ((!allow_zero_epochs && epochs == 0) || batch_size == 0) {
    throw Error(ErrorCode::BadConfig, "epochs and batch_size must be >= 1");
  }
  if (!(decay >= 0.0 && decay < 1.0)) throw Error(ErrorCode::BadConfig, "decay must be in [0, 1)");
  if (!(lr0 > 0.0)) throw Error(ErrorCode::BadConfig, "learning rate must be positive");
  loss.validate();
  if (augment.enabled) augment.validate();
  band.validate(fps);
}

void FoldPlan::validate(std::span<const std::string> subjects) const {
  const std::set<std::string> all(subjects.begin(), subjects.end());
  if (folds.size() != all.size()) throw Error(ErrorCode::BadConfig, "fold count != subject count");
  std::set<std::string> tested;
  for (const auto& f : folds) {
    if (!tested.insert(f.test_subject).second) {
      throw Error(ErrorCode::BadConfig, f.test_subject + " tested twice");
    }
    std::set<std::string> fold_set(f.train_subjects.begin(), f.train_subjects.end());
    if (fold_set.contains(f.test_subject)) {
      throw Error(ErrorCode::BadConfig, f.test_subject + " appears in its own training set");
    }
    fold_set.insert(f.test_subject);
    if (fold_set != all) throw Error(ErrorCode::BadConfig, "fold does not cover all subjects");
  }
  if (tested != all) throw Error(ErrorCode::BadConfig, "not every subject is tested");
}

FoldPlan loso_split(std::span<const std::string> subject_ids) {
  const std::set<std::string> ids(subject_ids.begin(), subject_ids.end());
  if (ids.size() < 2) throw Error(ErrorCode::NeedTwoSubjects, "LOSO needs at least two subjects");
  FoldPlan plan;
  for (const auto& test : ids) {
    Fold f;
    f.test_subject = test;
    for (const auto& other : ids) {
      if (other != test) f.train_subjects.push_back(other);
    }
    plan.folds.push_back(std::move(f));
  }
  return plan;
}

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
  return cfg.lr0 * std::pow(1.0 - cfg.decay, static_cast<double>(epoch));
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr, const AdamHyper& hyper) {
  if (grads.size() != params.size()) {
    throw Error(ErrorCode::ShapeMismatch, "gradient and parameter sizes differ");
  }
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) {
    throw Error(ErrorCode::ShapeMismatch, "optimizer state does not match parameters");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g;
    state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
  }
}

namespace {

constexpr std::size_t kChunk = 4;

double sample_gradient(const ModelParams& params, const WindowPair& w, const LossConfig& loss,
                       UnetTape& tape, std::span<double> grad, Exec exec) {
  const auto& est = unet_forward(params, w.input, tape, exec);
  const double value = loss_value(loss, est, w.label);
  const auto g = loss_gradient(loss, est, w.label);
  unet_backward(params, tape, g, grad, exec);
  return value;
}

}  // namespace

double unet_batch_gradient(const ModelParams& params, std::span<const WindowPair* const> batch,
                           const LossConfig& loss, std::span<double> grad, Exec exec) {
  if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "empty training batch");
  const std::size_t n_chunks = (batch.size() + kChunk - 1) / kChunk;
  std::vector<std::vector<double>> partial(n_chunks);
  std::vector<double> losses(batch.size());
  const auto n = static_cast<std::ptrdiff_t>(n_chunks);

#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t ci = 0; ci < n; ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    UnetTape tape;
    partial[c].assign(params.size(), 0.0);
    const std::size_t end = std::min(batch.size(), (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) {
      losses[i] = sample_gradient(params, *batch[i], loss, tape, partial[c], exec);
    }
  }

  std::fill(grad.begin(), grad.end(), 0.0);
  for (const auto& p : partial) {
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += p[i];
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (double& g : grad) g *= inv;
  return std::accumulate(losses.begin(), losses.end(), 0.0) * inv;
}

double unet_batch_gradient_serial(const ModelParams& params,
                                  std::span<const WindowPair* const> batch,
                                  const LossConfig& loss, std::span<double> grad) {
  if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "empty training batch");
  std::fill(grad.begin(), grad.end(), 0.0);
  UnetTape tape;
  double total = 0.0;
  for (const WindowPair* w : batch) {
    total += sample_gradient(params, *w, loss, tape, grad, Exec::reference);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (double& g : grad) g *= inv;
  return total * inv;
}

std::vector<WindowPair> augmented_epoch(std::span<const WindowPair> windows,
                                        const TrainConfig& cfg, std::mt19937_64& rng) {
  std::vector<WindowPair> out(windows.begin(), windows.end());
  if (!cfg.augment.enabled) return out;
  out.reserve(3 * windows.size());
  for (const auto& w : windows) {
    const auto [up, down] = draw_augment_rates(cfg.augment, rng);
    out.push_back(resample_augment(w, up, cfg.fps, cfg.band));
    out.push_back(resample_augment(w, down, cfg.fps, cfg.band));
  }
  return out;
}

namespace {

// Seeded per-epoch permutation of [0, n).
std::vector<std::size_t> shuffled(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace

TrainResult train_fold(std::span<const WindowPair> windows, const TrainConfig& cfg,
                       const UnetSpec& spec, const TrainHooks& hooks) {
  cfg.validate();
  if (windows.empty()) throw Error(ErrorCode::EmptyTrainSet, "no training windows");
  if (cfg.loss.kind == LossKind::fdl) {
    throw Error(ErrorCode::BadConfig, "fdl trains the HR estimator via train_fdl_stage2");
  }
  TrainResult result;
  result.params = init_params(spec, cfg.seed);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  AdamState adam;
  std::vector<double> grad(result.params.size());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    const auto data = augmented_epoch(windows, cfg, rng);
    const auto order = shuffled(data.size(), rng);
    result.epoch_sizes.push_back(data.size());

    std::vector<const WindowPair*> batch;
    double epoch_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(&data[order[i]]);
      const double loss = unet_batch_gradient(result.params, batch, cfg.loss, grad, cfg.exec);
      adam_step(result.params.values, grad, adam, lr, cfg.adam);
      if (hooks.on_batch) hooks.on_batch({epoch, n_batches, loss, lr, batch});
      result.batch_losses.push_back(loss);
      epoch_sum += loss;
      ++n_batches;
    }
    result.epoch_losses.push_back(epoch_sum / static_cast<double>(n_batches));
  }
  return result;
}

std::vector<double> hr_estimator_input(std::span<const double> waveform, const BandConfig& band,
                                       double fps) {
  return normalize_window(bandpass_window(waveform, band, fps));
}

TrainResult train_fdl_stage2(const ModelParams& frozen_unet, std::span<const WindowPair> windows,
                             const TrainConfig& cfg, const HrEstimatorSpec& spec,
                             const TrainHooks& hooks) {
  cfg.validate(true);
  if (windows.empty()) throw Error(ErrorCode::EmptyTrainSet, "no training windows");
  TrainResult result;
  result.params = init_params(spec, cfg.seed);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  AdamState adam;
  std::vector<double> grad(result.params.size());

  // The U-net is frozen, so features of un-augmented windows are computed once.
  auto features_of = [&](std::span<const WindowPair> ws) {
    std::vector<std::vector<double>> f(ws.size());
    const auto n = static_cast<std::ptrdiff_t>(ws.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const auto& w = ws[static_cast<std::size_t>(i)];
      const auto est = unet_forward(frozen_unet, w.input, cfg.exec);
      f[static_cast<std::size_t>(i)] = hr_estimator_input(
          std::span<const double>(est).subspan(w.label_offset, w.label.size()), cfg.band, cfg.fps);
    }
    return f;
  };
  const auto base_features = features_of(windows);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    std::vector<WindowPair> extra;
    std::vector<std::vector<double>> extra_features;
    if (cfg.augment.enabled) {
      auto data = augmented_epoch(windows, cfg, rng);
      extra.assign(std::make_move_iterator(data.begin() + static_cast<std::ptrdiff_t>(windows.size())),
                   std::make_move_iterator(data.end()));
      extra_features = features_of(extra);
    }
    const std::size_t total = windows.size() + extra.size();
    auto window_at = [&](std::size_t i) -> const WindowPair& {
      return i < windows.size() ? windows[i] : extra[i - windows.size()];
    };
    auto feature_at = [&](std::size_t i) -> const std::vector<double>& {
      return i < windows.size() ? base_features[i] : extra_features[i - windows.size()];
    };
    const auto order = shuffled(total, rng);
    result.epoch_sizes.push_back(total);

    std::vector<const WindowPair*> batch;
    double epoch_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < total; start += cfg.batch_size) {
      const std::size_t end = std::min(total, start + cfg.batch_size);
      const std::size_t b = end - start;
      batch.clear();
      std::vector<HrTape> tapes(b);
      std::vector<double> est(b), label(b);
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t idx = order[start + i];
        batch.push_back(&window_at(idx));
        est[i] = hr_estimator_forward(result.params, feature_at(idx), tapes[i], cfg.exec);
        label[i] = window_at(idx).label_hr;
      }
      const double loss = fdl_loss(est, label);
      const auto g = loss_gradient({.kind = LossKind::fdl}, est, label);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t i = 0; i < b; ++i) {
        hr_estimator_backward(result.params, tapes[i], g[i], grad, cfg.exec);
      }
      adam_step(result.params.values, grad, adam, lr, cfg.adam);
      if (hooks.on_batch) hooks.on_batch({epoch, n_batches, loss, lr, batch});
      result.batch_losses.push_back(loss);
      epoch_sum += loss;
      ++n_batches;
    }
    result.epoch_losses.push_back(epoch_sum / static_cast<double>(n_batches));
  }
  return result;
}

void LosoAuditor::check(const BatchInfo& batch) {
  for (const WindowPair* w : batch.windows) {
    if (w->subject_id == test_subject_) {
      throw Error(ErrorCode::BadConfig, "held-out subject " + test_subject_ +
                                            " found in training batch " +
                                            std::to_string(batch.batch) + " of epoch " +
                                            std::to_string(batch.epoch));
    }
    ++windows_;
  }
  ++batches_;
}

}  // namespace ippg
