#include "ippg/losses.hpp"

#include <cmath>

#include "ippg/error.hpp"

namespace ippg {

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::pearson: return "pearson";
    case LossKind::ws1: return "ws1";
    case LossKind::ws2: return "ws2";
    case LossKind::fdl: return "fdl";
  }
  return "?";
}

LossKind parse_loss_kind(const std::string& s) {
  if (s == "pearson") return LossKind::pearson;
  if (s == "ws1") return LossKind::ws1;
  if (s == "ws2") return LossKind::ws2;
  if (s == "fdl") return LossKind::fdl;
  throw Error(ErrorCode::BadConfig, "unknown loss '" + s + "'");
}

void LossConfig::validate() const {
  if (extended_len <= label_len) {
    throw Error(ErrorCode::BadConfig, "extended_len must exceed the label length");
  }
  if (kind == LossKind::ws1 && max_shift + 1 >= label_len) {
    throw Error(ErrorCode::BadConfig, "max_shift must be below the window length - 1");
  }
}

namespace {

struct Moments {
  double saa = 0.0;
  double sbb = 0.0;
  double sab = 0.0;
  double mean_a = 0.0;
  double mean_b = 0.0;
};

Moments centered_moments(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw Error(ErrorCode::ShapeMismatch, "correlation needs two equal-length series");
  }
  const double n = static_cast<double>(a.size());
  Moments m;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m.mean_a += a[i];
    m.mean_b += b[i];
  }
  m.mean_a /= n;
  m.mean_b /= n;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - m.mean_a;
    const double db = b[i] - m.mean_b;
    m.saa += da * da;
    m.sbb += db * db;
    m.sab += da * db;
  }
  const double floor = 1e-30 * n;
  if (!(m.saa > floor) || !(m.sbb > floor)) {
    throw Error(ErrorCode::DegenerateSignal, "constant series has no correlation");
  }
  return m;
}

// Gradient of -pearson(a, b) w.r.t. a, written into out.
void neg_pearson_grad_into(std::span<const double> a, std::span<const double> b,
                           std::span<double> out) {
  const Moments m = centered_moments(a, b);
  const double denom = std::sqrt(m.saa * m.sbb);
  const double rho = m.sab / denom;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - m.mean_a;
    const double db = b[i] - m.mean_b;
    out[i] = -(db / denom - rho * da / m.saa);
  }
}

void check_equal(std::span<const double> est, std::span<const double> label) {
  if (est.size() != label.size()) {
    throw Error(ErrorCode::ShapeMismatch, "estimate and label lengths differ");
  }
}

}  // namespace

double pearson(std::span<const double> a, std::span<const double> b) {
  const Moments m = centered_moments(a, b);
  return m.sab / std::sqrt(m.saa * m.sbb);
}

double neg_pearson(std::span<const double> est, std::span<const double> label) {
  check_equal(est, label);
  return -pearson(est, label);
}

ShiftResult ws1_loss(std::span<const double> est, std::span<const double> label,
                     std::size_t max_shift) {
  check_equal(est, label);
  const std::size_t len = est.size();
  if (len <= max_shift + 1) {
    throw Error(ErrorCode::TooShort, "window must be longer than max_shift + 1");
  }
  ShiftResult best;
  double best_rho = pearson(est, label);
  for (std::size_t x = 1; x <= max_shift; ++x) {
    const std::size_t n = len - x;
    const double lead = pearson(est.subspan(x, n), label.first(n));
    if (lead > best_rho) best_rho = lead, best.shift = x, best.est_leads = true;
    const double lag = pearson(est.first(n), label.subspan(x, n));
    if (lag > best_rho) best_rho = lag, best.shift = x, best.est_leads = false;
  }
  best.value = -best_rho;
  return best;
}

OffsetResult ws2_loss(std::span<const double> est, std::span<const double> label) {
  if (est.size() < label.size()) {
    throw Error(ErrorCode::ShapeMismatch, "extended estimate shorter than label");
  }
  OffsetResult best;
  double best_rho = pearson(est.first(label.size()), label);
  for (std::size_t o = 1; o + label.size() <= est.size(); ++o) {
    const double rho = pearson(est.subspan(o, label.size()), label);
    if (rho > best_rho) best_rho = rho, best.offset = o;
  }
  best.value = -best_rho;
  return best;
}

double fdl_loss(std::span<const double> est_hr, std::span<const double> label_hr) {
  if (est_hr.empty()) throw Error(ErrorCode::EmptyBatch, "empty HR batch");
  check_equal(est_hr, label_hr);
  double s = 0.0;
  for (std::size_t i = 0; i < est_hr.size(); ++i) {
    const double d = est_hr[i] - label_hr[i];
    s += d * d;
  }
  return s / static_cast<double>(est_hr.size());
}

std::vector<double> neg_pearson_gradient(std::span<const double> est,
                                         std::span<const double> label) {
  check_equal(est, label);
  std::vector<double> g(est.size());
  neg_pearson_grad_into(est, label, g);
  return g;
}

namespace {

void check_ws2_lengths(const LossConfig& cfg, std::span<const double> est,
                       std::span<const double> label) {
  if (est.size() != cfg.extended_len || label.size() != cfg.label_len) {
    throw Error(ErrorCode::ShapeMismatch, "WS-2 expects estimate of " +
                                              std::to_string(cfg.extended_len) +
                                              " and label of " + std::to_string(cfg.label_len));
  }
}

}  // namespace

double loss_value(const LossConfig& cfg, std::span<const double> est,
                  std::span<const double> label) {
  switch (cfg.kind) {
    case LossKind::pearson: return neg_pearson(est, label);
    case LossKind::ws1: return ws1_loss(est, label, cfg.max_shift).value;
    case LossKind::ws2:
      check_ws2_lengths(cfg, est, label);
      return ws2_loss(est, label).value;
    case LossKind::fdl: return fdl_loss(est, label);
  }
  return 0.0;
}

std::vector<double> loss_gradient(const LossConfig& cfg, std::span<const double> est,
                                  std::span<const double> label) {
  std::vector<double> g(est.size(), 0.0);
  switch (cfg.kind) {
    case LossKind::pearson:
      check_equal(est, label);
      neg_pearson_grad_into(est, label, g);
      break;
    case LossKind::ws1: {
      const ShiftResult r = ws1_loss(est, label, cfg.max_shift);
      const std::size_t n = est.size() - r.shift;
      if (r.est_leads) {
        neg_pearson_grad_into(est.subspan(r.shift, n), label.first(n),
                              std::span<double>(g).subspan(r.shift, n));
      } else {
        neg_pearson_grad_into(est.first(n), label.subspan(r.shift, n),
                              std::span<double>(g).first(n));
      }
      break;
    }
    case LossKind::ws2: {
      check_ws2_lengths(cfg, est, label);
      const OffsetResult r = ws2_loss(est, label);
      neg_pearson_grad_into(est.subspan(r.offset, label.size()), label,
                            std::span<double>(g).subspan(r.offset, label.size()));
      break;
    }
    case LossKind::fdl: {
      if (est.empty()) throw Error(ErrorCode::EmptyBatch, "empty HR batch");
      check_equal(est, label);
      const double scale = 2.0 / static_cast<double>(est.size());
      for (std::size_t i = 0; i < est.size(); ++i) g[i] = scale * (est[i] - label[i]);
      break;
    }
  }
  return g;
}

}  // namespace ippg
