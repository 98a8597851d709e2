#pragma once

// 1D convolution and resampling kernels used by the networks.
//
// Two implementations of the convolution are kept side by side:
//   reference::  direct per-output-sample sums, serial, used as the test oracle
//   parallel::   register-blocked SIMD loops over zero-padded copies, OpenMP
//                across blocks of output channels
// Each block of output channels (forward, weight gradient) or input channels
// (input gradient, computed as a forward pass with flipped kernels) is owned by
// one thread and summed in a fixed order, so results do not depend on the
// thread count.

#include <cstddef>
#include <span>

namespace ippg::kernels {

// "Same" padding convolution: out_len = ceil(in_len / stride), pad = kernel / 2.
struct ConvShape {
  std::size_t out_ch = 1;
  std::size_t in_ch = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;

  std::size_t pad() const { return kernel / 2; }
  std::size_t out_len(std::size_t in_len) const { return (in_len + stride - 1) / stride; }
  std::size_t weight_count() const { return out_ch * in_ch * kernel; }
};

enum class Exec { reference, parallel };

namespace reference {

void conv1d_forward(const ConvShape& s, std::span<const double> weight,
                    std::span<const double> bias, std::span<const double> in,
                    std::size_t in_len, std::span<double> out);

// Accumulates into grad_w / grad_b; overwrites grad_in unless it is empty.
void conv1d_backward(const ConvShape& s, std::span<const double> weight,
                     std::span<const double> in, std::size_t in_len,
                     std::span<const double> grad_out, std::span<double> grad_in,
                     std::span<double> grad_w, std::span<double> grad_b);

}  // namespace reference

namespace parallel {

void conv1d_forward(const ConvShape& s, std::span<const double> weight,
                    std::span<const double> bias, std::span<const double> in,
                    std::size_t in_len, std::span<double> out);

void conv1d_backward(const ConvShape& s, std::span<const double> weight,
                     std::span<const double> in, std::size_t in_len,
                     std::span<const double> grad_out, std::span<double> grad_in,
                     std::span<double> grad_w, std::span<double> grad_b);

}  // namespace parallel

void conv1d_forward(Exec exec, const ConvShape& s, std::span<const double> weight,
                    std::span<const double> bias, std::span<const double> in,
                    std::size_t in_len, std::span<double> out);

void conv1d_backward(Exec exec, const ConvShape& s, std::span<const double> weight,
                     std::span<const double> in, std::size_t in_len,
                     std::span<const double> grad_out, std::span<double> grad_in,
                     std::span<double> grad_w, std::span<double> grad_b);

void tanh_inplace(std::span<double> x);
// grad *= 1 - y^2
void tanh_backward(std::span<const double> y, std::span<double> grad);

// Mean of sample pairs per channel; out_len = in_len / 2.
void avg_pool2(std::size_t channels, std::span<const double> in, std::size_t in_len,
               std::span<double> out);
void avg_pool2_backward(std::size_t channels, std::span<const double> grad_out,
                        std::size_t in_len, std::span<double> grad_in);

// Corner-aligned linear interpolation from in_len to out_len samples per channel.
void upsample_linear(std::size_t channels, std::span<const double> in, std::size_t in_len,
                     std::span<double> out, std::size_t out_len);
// Accumulates into grad_in.
void upsample_linear_backward(std::size_t channels, std::span<const double> grad_out,
                              std::size_t out_len, std::span<double> grad_in,
                              std::size_t in_len);

}  // namespace ippg::kernels
