#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ippg {

enum class LossKind { pearson, ws1, ws2, fdl };

std::string to_string(LossKind k);
LossKind parse_loss_kind(const std::string& s);

struct LossConfig {
  LossKind kind = LossKind::pearson;
  std::size_t max_shift = 15;      // WS-1
  std::size_t extended_len = 350;  // WS-2 input length
  std::size_t label_len = 300;

  void validate() const;
};

// Pearson correlation; throws DegenerateSignal if either side is constant.
double pearson(std::span<const double> a, std::span<const double> b);

double neg_pearson(std::span<const double> est, std::span<const double> label);

// Which alignment produced a shifted-correlation loss.
struct ShiftResult {
  double value = 0.0;
  std::size_t shift = 0;
  // true: est[x..L] vs label[0..L-x]; false: est[0..L-x] vs label[x..L].
  bool est_leads = true;
};

ShiftResult ws1_loss(std::span<const double> est, std::span<const double> label,
                     std::size_t max_shift);

struct OffsetResult {
  double value = 0.0;
  std::size_t offset = 0;
};

OffsetResult ws2_loss(std::span<const double> est, std::span<const double> label);

double fdl_loss(std::span<const double> est_hr, std::span<const double> label_hr);

// d(-pearson(est, label)) / d(est).
std::vector<double> neg_pearson_gradient(std::span<const double> est,
                                         std::span<const double> label);

// Loss value for the configured kind. For fdl, est/label are HR batches.
double loss_value(const LossConfig& cfg, std::span<const double> est,
                  std::span<const double> label);

// Gradient of loss_value w.r.t. est. Shifted losses route the gradient
// through the winning alignment only.
std::vector<double> loss_gradient(const LossConfig& cfg, std::span<const double> est,
                                  std::span<const double> label);

}  // namespace ippg
