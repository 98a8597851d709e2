#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ippg/kernels.hpp"
#include "ippg/matrix.hpp"

namespace ippg {

using kernels::Exec;

// Encoder/decoder 1D U-net. Channels double per level: base, 2*base, ...,
// bottleneck 2^levels * base. Hidden layers use tanh, the output layer is a
// linear pointwise convolution to one channel.
struct UnetSpec {
  std::size_t in_channels = 23;
  std::size_t levels = 2;
  std::size_t base_channels = 16;
  std::size_t kernel_len = 5;

  void validate() const;
  std::size_t min_length() const { return std::size_t{1} << levels; }
};

// Strided conv stack -> global average pool -> affine -> scaled scalar (bpm).
struct HrEstimatorSpec {
  std::vector<std::size_t> channels = {16, 32, 64};
  std::size_t kernel_len = 7;
  std::size_t stride = 2;
  std::size_t input_len = 300;
  // Fixed multiplier on the affine output so its unit scale covers bpm values.
  double output_scale = 100.0;

  void validate() const;
};

enum class ModelKind { unet, hr_estimator };

struct LayerShape {
  kernels::ConvShape conv;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
};

struct ModelParams {
  ModelKind kind = ModelKind::unet;
  UnetSpec unet;
  HrEstimatorSpec hr;
  std::uint64_t seed = 0;
  std::vector<LayerShape> layers;
  std::vector<double> values;

  std::span<const double> weight(std::size_t layer) const;
  std::span<const double> bias(std::size_t layer) const;
  std::size_t size() const { return values.size(); }
};

// Layer table for the given shape, values zero-filled.
ModelParams make_layout(const UnetSpec& spec);
ModelParams make_layout(const HrEstimatorSpec& spec);

// Kernels ~ U[-sqrt(1/fan_in), +sqrt(1/fan_in)], biases 0.
ModelParams init_params(const UnetSpec& spec, std::uint64_t seed);
ModelParams init_params(const HrEstimatorSpec& spec, std::uint64_t seed);

// Activations kept for the backward pass.
struct UnetTape {
  std::vector<std::size_t> lens;  // lens[l] = length at level l
  std::vector<double> input;
  std::vector<std::vector<double>> enc_act;
  std::vector<std::vector<double>> pooled;
  std::vector<double> bottleneck;
  std::vector<std::vector<double>> dec_in;
  std::vector<std::vector<double>> dec_act;
  std::vector<double> output;
};

std::vector<double> unet_forward(const ModelParams& params, const Matrix& input,
                                 Exec exec = Exec::parallel);
const std::vector<double>& unet_forward(const ModelParams& params, const Matrix& input,
                                        UnetTape& tape, Exec exec = Exec::parallel);

// grad += d(upstream . output)/d(params) for the forward pass recorded in tape.
void unet_backward(const ModelParams& params, const UnetTape& tape,
                   std::span<const double> upstream, std::span<double> grad,
                   Exec exec = Exec::parallel);

// Recomputes the forward pass and returns the parameter gradient.
std::vector<double> unet_backward(const ModelParams& params, const Matrix& input,
                                  std::span<const double> upstream,
                                  Exec exec = Exec::parallel);

struct HrTape {
  std::vector<double> input;
  std::vector<std::vector<double>> act;  // post-tanh per conv layer
  std::vector<std::size_t> lens;         // lens[0] = input length
  std::vector<double> pooled;
  double output = 0.0;
};

double hr_estimator_forward(const ModelParams& params, std::span<const double> waveform,
                            Exec exec = Exec::parallel);
double hr_estimator_forward(const ModelParams& params, std::span<const double> waveform,
                            HrTape& tape, Exec exec = Exec::parallel);

// grad += upstream * d(output)/d(params).
void hr_estimator_backward(const ModelParams& params, const HrTape& tape, double upstream,
                           std::span<double> grad, Exec exec = Exec::parallel);

// FNV-1a over the raw parameter bytes.
std::uint64_t params_checksum(const ModelParams& params);

// Binary checkpoint: magic, JSON descriptor block, little-endian f64 values.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const std::map<std::string, std::string>& meta = {});
ModelParams load_checkpoint(const std::filesystem::path& path,
                            std::map<std::string, std::string>* meta = nullptr);

}  // namespace ippg
