#include "ippg/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace ippg::kernels {

namespace {

// Output samples t in [begin, end) whose tap j lands inside the input.
struct TapRange {
  std::size_t begin;
  std::size_t end;
};

TapRange tap_range(const ConvShape& s, std::size_t j, std::size_t in_len, std::size_t out_len) {
  const std::size_t pad = s.pad();
  const std::size_t begin = j < pad ? (pad - j + s.stride - 1) / s.stride : 0;
  if (in_len + pad < j + 1) return {0, 0};
  const std::size_t end = std::min(out_len, (in_len - 1 + pad - j) / s.stride + 1);
  return {begin, std::max(begin, end)};
}

// Small layers are not worth a thread team.
bool worth_parallel(const ConvShape& s, std::size_t out_len) {
  return !omp_in_parallel() && s.weight_count() * out_len > 32768;
}

}  // namespace

namespace reference {

void conv1d_forward(const ConvShape& s, std::span<const double> weight,
                    std::span<const double> bias, std::span<const double> in,
                    std::size_t in_len, std::span<double> out) {
  const std::size_t out_len = s.out_len(in_len);
  const auto pad = static_cast<std::ptrdiff_t>(s.pad());
  for (std::size_t o = 0; o < s.out_ch; ++o) {
    for (std::size_t t = 0; t < out_len; ++t) {
      double acc = bias[o];
      for (std::size_t c = 0; c < s.in_ch; ++c) {
        for (std::size_t j = 0; j < s.kernel; ++j) {
          const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(t * s.stride + j) - pad;
          if (idx < 0 || idx >= static_cast<std::ptrdiff_t>(in_len)) continue;
          acc += weight[(o * s.in_ch + c) * s.kernel + j] * in[c * in_len + idx];
        }
      }
      out[o * out_len + t] = acc;
    }
  }
}

void conv1d_backward(const ConvShape& s, std::span<const double> weight,
                     std::span<const double> in, std::size_t in_len,
                     std::span<const double> grad_out, std::span<double> grad_in,
                     std::span<double> grad_w, std::span<double> grad_b) {
  const std::size_t out_len = s.out_len(in_len);
  const auto pad = static_cast<std::ptrdiff_t>(s.pad());
  if (!grad_in.empty()) std::fill(grad_in.begin(), grad_in.end(), 0.0);
  for (std::size_t o = 0; o < s.out_ch; ++o) {
    for (std::size_t t = 0; t < out_len; ++t) {
      const double g = grad_out[o * out_len + t];
      grad_b[o] += g;
      for (std::size_t c = 0; c < s.in_ch; ++c) {
        for (std::size_t j = 0; j < s.kernel; ++j) {
          const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(t * s.stride + j) - pad;
          if (idx < 0 || idx >= static_cast<std::ptrdiff_t>(in_len)) continue;
          const std::size_t w = (o * s.in_ch + c) * s.kernel + j;
          grad_w[w] += g * in[c * in_len + idx];
          if (!grad_in.empty()) grad_in[c * in_len + idx] += g * weight[w];
        }
      }
    }
  }
}

}  // namespace reference

namespace parallel {

namespace {

constexpr std::size_t kOB = 4;   // output channels per register block
constexpr std::size_t kTB = 16;  // time samples per register block
constexpr std::size_t kLanes = 8;

std::size_t round_up(std::size_t n, std::size_t m) { return (n + m - 1) / m * m; }

// rows x len copied into rows x (lead + len_rounded + tail) with zero borders.
std::vector<double> padded_rows(std::span<const double> x, std::size_t rows, std::size_t len,
                                std::size_t lead, std::size_t width) {
  std::vector<double> out(rows * width, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(x.data() + r * len, len, out.data() + r * width + lead);
  }
  return out;
}

using v8d = double __attribute__((vector_size(64)));

inline v8d load8(const double* p) {
  v8d v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store8(double* p, v8d v, std::size_t n) {
  double tmp[kLanes];
  std::memcpy(tmp, &v, sizeof v);
  std::copy_n(tmp, n, p);
}

// y[o][t] = bias[o] + sum_c sum_j w[o][c][j] * xp[c][t + j] for t < len, where
// xp rows have width >= round_up(len, kTB) + kernel - 1.
void conv_stride1_padded(std::size_t out_ch, std::size_t in_ch, std::size_t kernel,
                         const double* w, const double* bias, const double* xp,
                         std::size_t width, std::size_t len, double* y, bool par) {
  const std::size_t len_r = round_up(len, kTB);
  const std::size_t n_blocks = (out_ch + kOB - 1) / kOB;
  const auto nb = static_cast<std::ptrdiff_t>(n_blocks);
  const std::size_t ck = in_ch * kernel;

#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t bi = 0; bi < nb; ++bi) {
    const std::size_t o0 = static_cast<std::size_t>(bi) * kOB;
    const std::size_t ob = std::min(kOB, out_ch - o0);
    // Rows past out_ch reuse the last real row and are never stored.
    const double* wr[kOB];
    double b[kOB];
    for (std::size_t oo = 0; oo < kOB; ++oo) {
      const std::size_t o = o0 + std::min(oo, ob - 1);
      wr[oo] = w + o * ck;
      b[oo] = bias ? bias[o] : 0.0;
    }
    for (std::size_t t0 = 0; t0 < len_r; t0 += kTB) {
      v8d acc[kOB][2];
      for (std::size_t oo = 0; oo < kOB; ++oo) {
        acc[oo][0] = v8d{} + b[oo];
        acc[oo][1] = v8d{} + b[oo];
      }
      for (std::size_t c = 0; c < in_ch; ++c) {
        const double* xr = xp + c * width + t0;
        for (std::size_t j = 0; j < kernel; ++j) {
          const v8d x0 = load8(xr + j);
          const v8d x1 = load8(xr + j + kLanes);
          const std::size_t q = c * kernel + j;
          for (std::size_t oo = 0; oo < kOB; ++oo) {
            const double wv = wr[oo][q];
            acc[oo][0] += wv * x0;
            acc[oo][1] += wv * x1;
          }
        }
      }
      const std::size_t tn = std::min(kTB, len - t0);
      for (std::size_t oo = 0; oo < ob; ++oo) {
        double* yr = y + (o0 + oo) * len + t0;
        store8(yr, acc[oo][0], std::min(kLanes, tn));
        if (tn > kLanes) store8(yr + kLanes, acc[oo][1], tn - kLanes);
      }
    }
  }
}

// gw[o][c][j] += sum_t g[o][t] * xp[c][t + j]; g rows have width g_width (a
// multiple of 8, zero padded beyond len), xp rows have width >= g_width + kernel - 1.
void conv_weight_grad_stride1(std::size_t out_ch, std::size_t in_ch, std::size_t kernel,
                              const double* gp, std::size_t g_width, const double* xp,
                              std::size_t x_width, double* gw, bool par) {
  const std::size_t ck = in_ch * kernel;
  const std::size_t n_blocks = (out_ch + kOB - 1) / kOB;
  const auto nb = static_cast<std::ptrdiff_t>(n_blocks);
  constexpr std::size_t kQB = 4;  // (c, j) pairs per block

#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t bi = 0; bi < nb; ++bi) {
    const std::size_t o0 = static_cast<std::size_t>(bi) * kOB;
    const std::size_t ob = std::min(kOB, out_ch - o0);
    const double* gs[kOB];
    for (std::size_t oo = 0; oo < kOB; ++oo) gs[oo] = gp + (o0 + std::min(oo, ob - 1)) * g_width;
    for (std::size_t q0 = 0; q0 < ck; q0 += kQB) {
      const std::size_t qb = std::min(kQB, ck - q0);
      const double* xs[kQB];
      for (std::size_t qq = 0; qq < kQB; ++qq) {
        const std::size_t q = q0 + std::min(qq, qb - 1);
        xs[qq] = xp + (q / kernel) * x_width + (q % kernel);
      }
      v8d acc[kOB][kQB] = {};
      for (std::size_t t = 0; t < g_width; t += kLanes) {
        v8d xv[kQB];
        for (std::size_t qq = 0; qq < kQB; ++qq) xv[qq] = load8(xs[qq] + t);
        for (std::size_t oo = 0; oo < kOB; ++oo) {
          const v8d gv = load8(gs[oo] + t);
          for (std::size_t qq = 0; qq < kQB; ++qq) acc[oo][qq] += gv * xv[qq];
        }
      }
      for (std::size_t oo = 0; oo < ob; ++oo) {
        for (std::size_t qq = 0; qq < qb; ++qq) {
          double s = 0.0;
          for (std::size_t l = 0; l < kLanes; ++l) s += acc[oo][qq][l];
          gw[(o0 + oo) * ck + q0 + qq] += s;
        }
      }
    }
  }
}

void forward_strided(const ConvShape& s, std::span<const double> weight,
                     std::span<const double> bias, std::span<const double> in,
                     std::size_t in_len, std::span<double> out, bool par) {
  const std::size_t out_len = s.out_len(in_len);
  const std::size_t pad = s.pad();
  const auto n_out = static_cast<std::ptrdiff_t>(s.out_ch);
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t oi = 0; oi < n_out; ++oi) {
    const auto o = static_cast<std::size_t>(oi);
    double* y = out.data() + o * out_len;
    std::fill(y, y + out_len, bias[o]);
    for (std::size_t c = 0; c < s.in_ch; ++c) {
      const double* x = in.data() + c * in_len;
      const double* wk = weight.data() + (o * s.in_ch + c) * s.kernel;
      for (std::size_t j = 0; j < s.kernel; ++j) {
        const auto [t0, t1] = tap_range(s, j, in_len, out_len);
        const double w = wk[j];
        for (std::size_t t = t0; t < t1; ++t) y[t] += w * x[t * s.stride + j - pad];
      }
    }
  }
}

void backward_strided(const ConvShape& s, std::span<const double> weight,
                      std::span<const double> in, std::size_t in_len,
                      std::span<const double> grad_out, std::span<double> grad_in,
                      std::span<double> grad_w, std::span<double> grad_b, bool par) {
  const std::size_t out_len = s.out_len(in_len);
  const std::size_t pad = s.pad();
  const std::size_t stride = s.stride;
  const auto n_out = static_cast<std::ptrdiff_t>(s.out_ch);
  const auto n_in = static_cast<std::ptrdiff_t>(s.in_ch);

#pragma omp parallel if (par)
  {
#pragma omp for schedule(static) nowait
    for (std::ptrdiff_t oi = 0; oi < n_out; ++oi) {
      const auto o = static_cast<std::size_t>(oi);
      const double* g = grad_out.data() + o * out_len;
      double gb = 0.0;
      for (std::size_t t = 0; t < out_len; ++t) gb += g[t];
      grad_b[o] += gb;
      for (std::size_t c = 0; c < s.in_ch; ++c) {
        const double* x = in.data() + c * in_len;
        double* gw = grad_w.data() + (o * s.in_ch + c) * s.kernel;
        for (std::size_t j = 0; j < s.kernel; ++j) {
          const auto [t0, t1] = tap_range(s, j, in_len, out_len);
          double acc = 0.0;
          for (std::size_t t = t0; t < t1; ++t) acc += g[t] * x[t * stride + j - pad];
          gw[j] += acc;
        }
      }
    }

    if (!grad_in.empty()) {
#pragma omp for schedule(static)
      for (std::ptrdiff_t ci = 0; ci < n_in; ++ci) {
        const auto c = static_cast<std::size_t>(ci);
        double* gx = grad_in.data() + c * in_len;
        std::fill(gx, gx + in_len, 0.0);
        for (std::size_t o = 0; o < s.out_ch; ++o) {
          const double* g = grad_out.data() + o * out_len;
          const double* wk = weight.data() + (o * s.in_ch + c) * s.kernel;
          for (std::size_t j = 0; j < s.kernel; ++j) {
            const auto [t0, t1] = tap_range(s, j, in_len, out_len);
            const double w = wk[j];
            for (std::size_t t = t0; t < t1; ++t) gx[t * stride + j - pad] += w * g[t];
          }
        }
      }
    }
  }
}

}  // namespace

void conv1d_forward(const ConvShape& s, std::span<const double> weight,
                    std::span<const double> bias, std::span<const double> in,
                    std::size_t in_len, std::span<double> out) {
  const bool par = worth_parallel(s, s.out_len(in_len));
  if (s.stride != 1) {
    forward_strided(s, weight, bias, in, in_len, out, par);
    return;
  }
  const std::size_t pad = s.pad();
  const std::size_t width = round_up(in_len, kTB) + s.kernel - 1;
  const auto xp = padded_rows(in, s.in_ch, in_len, pad, width);
  conv_stride1_padded(s.out_ch, s.in_ch, s.kernel, weight.data(), bias.data(), xp.data(), width,
                      in_len, out.data(), par);
}

void conv1d_backward(const ConvShape& s, std::span<const double> weight,
                     std::span<const double> in, std::size_t in_len,
                     std::span<const double> grad_out, std::span<double> grad_in,
                     std::span<double> grad_w, std::span<double> grad_b) {
  const bool par = worth_parallel(s, s.out_len(in_len));
  if (s.stride != 1) {
    backward_strided(s, weight, in, in_len, grad_out, grad_in, grad_w, grad_b, par);
    return;
  }
  const std::size_t len = in_len;
  const std::size_t pad = s.pad();
  const std::size_t k = s.kernel;

  for (std::size_t o = 0; o < s.out_ch; ++o) {
    double gb = 0.0;
    for (std::size_t t = 0; t < len; ++t) gb += grad_out[o * len + t];
    grad_b[o] += gb;
  }

  // Weight gradient: correlate zero-padded grad rows with padded input rows.
  const std::size_t g_width = round_up(len, kLanes);
  const auto gp = padded_rows(grad_out, s.out_ch, len, 0, g_width);
  const std::size_t x_width = g_width + k - 1;
  const auto xp = padded_rows(in, s.in_ch, len, pad, x_width);
  conv_weight_grad_stride1(s.out_ch, s.in_ch, k, gp.data(), g_width, xp.data(), x_width,
                           grad_w.data(), par);

  if (grad_in.empty()) return;
  // Input gradient: forward conv of the output gradient with flipped,
  // transposed kernels wt[c][o][k-1-j] = w[o][c][j].
  std::vector<double> wt(s.weight_count());
  for (std::size_t o = 0; o < s.out_ch; ++o) {
    for (std::size_t c = 0; c < s.in_ch; ++c) {
      for (std::size_t j = 0; j < k; ++j) {
        wt[(c * s.out_ch + o) * k + (k - 1 - j)] = weight[(o * s.in_ch + c) * k + j];
      }
    }
  }
  const std::size_t width = round_up(len, kTB) + k - 1;
  const auto gpp = padded_rows(grad_out, s.out_ch, len, pad, width);
  conv_stride1_padded(s.in_ch, s.out_ch, k, wt.data(), nullptr, gpp.data(), width, len,
                      grad_in.data(), par);
}

}  // namespace parallel

void conv1d_forward(Exec exec, const ConvShape& s, std::span<const double> weight,
                    std::span<const double> bias, std::span<const double> in,
                    std::size_t in_len, std::span<double> out) {
  if (exec == Exec::reference) {
    reference::conv1d_forward(s, weight, bias, in, in_len, out);
  } else {
    parallel::conv1d_forward(s, weight, bias, in, in_len, out);
  }
}

void conv1d_backward(Exec exec, const ConvShape& s, std::span<const double> weight,
                     std::span<const double> in, std::size_t in_len,
                     std::span<const double> grad_out, std::span<double> grad_in,
                     std::span<double> grad_w, std::span<double> grad_b) {
  if (exec == Exec::reference) {
    reference::conv1d_backward(s, weight, in, in_len, grad_out, grad_in, grad_w, grad_b);
  } else {
    parallel::conv1d_backward(s, weight, in, in_len, grad_out, grad_in, grad_w, grad_b);
  }
}

void tanh_inplace(std::span<double> x) {
  for (double& v : x) v = std::tanh(v);
}

void tanh_backward(std::span<const double> y, std::span<double> grad) {
  for (std::size_t i = 0; i < y.size(); ++i) grad[i] *= 1.0 - y[i] * y[i];
}

void avg_pool2(std::size_t channels, std::span<const double> in, std::size_t in_len,
               std::span<double> out) {
  const std::size_t out_len = in_len / 2;
  for (std::size_t c = 0; c < channels; ++c) {
    const double* x = in.data() + c * in_len;
    double* y = out.data() + c * out_len;
    for (std::size_t t = 0; t < out_len; ++t) y[t] = 0.5 * (x[2 * t] + x[2 * t + 1]);
  }
}

void avg_pool2_backward(std::size_t channels, std::span<const double> grad_out,
                        std::size_t in_len, std::span<double> grad_in) {
  const std::size_t out_len = in_len / 2;
  for (std::size_t c = 0; c < channels; ++c) {
    const double* g = grad_out.data() + c * out_len;
    double* gx = grad_in.data() + c * in_len;
    std::fill(gx, gx + in_len, 0.0);
    for (std::size_t t = 0; t < out_len; ++t) {
      gx[2 * t] = 0.5 * g[t];
      gx[2 * t + 1] = 0.5 * g[t];
    }
  }
}

namespace {

struct InterpTap {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

InterpTap interp_tap(std::size_t i, std::size_t in_len, std::size_t out_len) {
  if (in_len == 1 || out_len == 1) return {0, 0, 0.0};
  const double pos = static_cast<double>(i) * static_cast<double>(in_len - 1) /
                     static_cast<double>(out_len - 1);
  const auto lo = std::min(static_cast<std::size_t>(pos), in_len - 1);
  const std::size_t hi = std::min(lo + 1, in_len - 1);
  return {lo, hi, pos - static_cast<double>(lo)};
}

}  // namespace

void upsample_linear(std::size_t channels, std::span<const double> in, std::size_t in_len,
                     std::span<double> out, std::size_t out_len) {
  for (std::size_t i = 0; i < out_len; ++i) {
    const InterpTap tap = interp_tap(i, in_len, out_len);
    for (std::size_t c = 0; c < channels; ++c) {
      const double* x = in.data() + c * in_len;
      out[c * out_len + i] = (1.0 - tap.frac) * x[tap.lo] + tap.frac * x[tap.hi];
    }
  }
}

void upsample_linear_backward(std::size_t channels, std::span<const double> grad_out,
                              std::size_t out_len, std::span<double> grad_in,
                              std::size_t in_len) {
  for (std::size_t i = 0; i < out_len; ++i) {
    const InterpTap tap = interp_tap(i, in_len, out_len);
    for (std::size_t c = 0; c < channels; ++c) {
      const double g = grad_out[c * out_len + i];
      grad_in[c * in_len + tap.lo] += (1.0 - tap.frac) * g;
      grad_in[c * in_len + tap.hi] += tap.frac * g;
    }
  }
}

}  // namespace ippg::kernels
