#include "ippg/unet_model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include <json.hpp>

#include "ippg/error.hpp"
#include "ippg/hash.hpp"

namespace ippg {

using kernels::ConvShape;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void UnetSpec::validate() const {
  if (in_channels == 0 || levels == 0 || base_channels == 0 || kernel_len % 2 == 0) {
    throw Error(ErrorCode::BadConfig, "U-net needs levels >= 1, channels > 0, odd kernel");
  }
}

void HrEstimatorSpec::validate() const {
  if (channels.empty() || kernel_len % 2 == 0 || stride == 0 || input_len == 0) {
    throw Error(ErrorCode::BadConfig, "HR estimator needs conv layers, odd kernel, stride > 0");
  }
}

std::span<const double> ModelParams::weight(std::size_t layer) const {
  const auto& l = layers[layer];
  return {values.data() + l.weight_offset, l.conv.weight_count()};
}

std::span<const double> ModelParams::bias(std::size_t layer) const {
  const auto& l = layers[layer];
  return {values.data() + l.bias_offset, l.conv.out_ch};
}

namespace {

void push_layer(ModelParams& p, ConvShape conv) {
  LayerShape l;
  l.conv = conv;
  l.weight_offset = p.values.size();
  l.bias_offset = l.weight_offset + conv.weight_count();
  p.values.resize(l.bias_offset + conv.out_ch, 0.0);
  p.layers.push_back(l);
}

std::size_t channels_at(const UnetSpec& s, std::size_t level) {
  return s.base_channels << level;
}

void init_values(ModelParams& p, std::uint64_t seed) {
  p.seed = seed;
  std::mt19937_64 rng(seed);
  for (const auto& l : p.layers) {
    const double bound = std::sqrt(1.0 / static_cast<double>(l.conv.in_ch * l.conv.kernel));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = 0; i < l.conv.weight_count(); ++i) p.values[l.weight_offset + i] = dist(rng);
  }
}

std::span<double> grad_w(std::span<double> g, const LayerShape& l) {
  return g.subspan(l.weight_offset, l.conv.weight_count());
}
std::span<double> grad_b(std::span<double> g, const LayerShape& l) {
  return g.subspan(l.bias_offset, l.conv.out_ch);
}

// Layer indices inside a U-net layout.
struct UnetIndex {
  std::size_t levels;
  std::size_t enc(std::size_t l) const { return l; }
  std::size_t bottleneck() const { return levels; }
  std::size_t dec(std::size_t l) const { return 2 * levels - l; }
  std::size_t out() const { return 2 * levels + 1; }
};

}  // namespace

ModelParams make_layout(const UnetSpec& spec) {
  spec.validate();
  ModelParams p;
  p.kind = ModelKind::unet;
  p.unet = spec;
  const std::size_t k = spec.kernel_len;
  for (std::size_t l = 0; l < spec.levels; ++l) {
    const std::size_t in = l == 0 ? spec.in_channels : channels_at(spec, l - 1);
    push_layer(p, {channels_at(spec, l), in, k, 1});
  }
  push_layer(p, {channels_at(spec, spec.levels), channels_at(spec, spec.levels - 1), k, 1});
  for (std::size_t l = spec.levels; l-- > 0;) {
    push_layer(p, {channels_at(spec, l), channels_at(spec, l + 1) + channels_at(spec, l), k, 1});
  }
  push_layer(p, {1, spec.base_channels, 1, 1});
  return p;
}

ModelParams make_layout(const HrEstimatorSpec& spec) {
  spec.validate();
  ModelParams p;
  p.kind = ModelKind::hr_estimator;
  p.hr = spec;
  std::size_t in = 1;
  for (std::size_t ch : spec.channels) {
    push_layer(p, {ch, in, spec.kernel_len, spec.stride});
    in = ch;
  }
  push_layer(p, {1, in, 1, 1});
  return p;
}

ModelParams init_params(const UnetSpec& spec, std::uint64_t seed) {
  ModelParams p = make_layout(spec);
  init_values(p, seed);
  return p;
}

ModelParams init_params(const HrEstimatorSpec& spec, std::uint64_t seed) {
  ModelParams p = make_layout(spec);
  init_values(p, seed);
  return p;
}

const std::vector<double>& unet_forward(const ModelParams& params, const Matrix& input,
                                        UnetTape& tape, Exec exec) {
  const UnetSpec& spec = params.unet;
  const UnetIndex idx{spec.levels};
  if (params.kind != ModelKind::unet || input.rows() != spec.in_channels) {
    throw Error(ErrorCode::ShapeMismatch, "U-net expects " + std::to_string(spec.in_channels) +
                                              " input channels");
  }
  const std::size_t len = input.cols();
  if (len < spec.min_length()) {
    throw Error(ErrorCode::TooShort, "input length " + std::to_string(len) + " < 2^levels");
  }
  const std::size_t n = spec.levels;

  tape.lens.assign(n + 1, len);
  for (std::size_t l = 1; l <= n; ++l) tape.lens[l] = tape.lens[l - 1] / 2;
  tape.input.assign(input.flat().begin(), input.flat().end());
  tape.enc_act.resize(n);
  tape.pooled.resize(n);
  tape.dec_in.resize(n);
  tape.dec_act.resize(n);

  auto conv_tanh = [&](std::size_t layer, std::span<const double> in, std::size_t in_len,
                       std::vector<double>& out) {
    const auto& conv = params.layers[layer].conv;
    out.resize(conv.out_ch * in_len);
    kernels::conv1d_forward(exec, conv, params.weight(layer), params.bias(layer), in, in_len, out);
    kernels::tanh_inplace(out);
  };

  std::span<const double> cur = tape.input;
  for (std::size_t l = 0; l < n; ++l) {
    conv_tanh(idx.enc(l), cur, tape.lens[l], tape.enc_act[l]);
    const std::size_t ch = params.layers[idx.enc(l)].conv.out_ch;
    tape.pooled[l].resize(ch * tape.lens[l + 1]);
    kernels::avg_pool2(ch, tape.enc_act[l], tape.lens[l], tape.pooled[l]);
    cur = tape.pooled[l];
  }
  conv_tanh(idx.bottleneck(), cur, tape.lens[n], tape.bottleneck);

  const std::vector<double>* up = &tape.bottleneck;
  std::size_t up_ch = params.layers[idx.bottleneck()].conv.out_ch;
  for (std::size_t l = n; l-- > 0;) {
    const std::size_t skip_ch = params.layers[idx.enc(l)].conv.out_ch;
    const std::size_t ln = tape.lens[l];
    auto& cat = tape.dec_in[l];
    cat.resize((up_ch + skip_ch) * ln);
    kernels::upsample_linear(up_ch, *up, tape.lens[l + 1], cat, ln);
    std::copy(tape.enc_act[l].begin(), tape.enc_act[l].end(), cat.begin() + up_ch * ln);
    conv_tanh(idx.dec(l), cat, ln, tape.dec_act[l]);
    up = &tape.dec_act[l];
    up_ch = params.layers[idx.dec(l)].conv.out_ch;
  }

  tape.output.resize(len);
  kernels::conv1d_forward(exec, params.layers[idx.out()].conv, params.weight(idx.out()),
                          params.bias(idx.out()), *up, len, tape.output);
  return tape.output;
}

std::vector<double> unet_forward(const ModelParams& params, const Matrix& input, Exec exec) {
  UnetTape tape;
  return unet_forward(params, input, tape, exec);
}

void unet_backward(const ModelParams& params, const UnetTape& tape,
                   std::span<const double> upstream, std::span<double> grad, Exec exec) {
  const std::size_t n = params.unet.levels;
  const UnetIndex idx{n};
  if (tape.lens.size() != n + 1 || upstream.size() != tape.lens[0] ||
      grad.size() != params.size()) {
    throw Error(ErrorCode::ShapeMismatch, "backward shapes do not match the forward pass");
  }
  auto layer = [&](std::size_t i) -> const LayerShape& { return params.layers[i]; };
  auto conv_back = [&](std::size_t i, std::span<const double> in, std::size_t in_len,
                       std::span<const double> g, std::span<double> g_in) {
    kernels::conv1d_backward(exec, layer(i).conv, params.weight(i), in, in_len, g, g_in,
                             grad_w(grad, layer(i)), grad_b(grad, layer(i)));
  };

  // Output layer.
  std::vector<double> g_up(params.unet.base_channels * tape.lens[0]);
  conv_back(idx.out(), tape.dec_act[0], tape.lens[0], upstream, g_up);

  std::vector<std::vector<double>> g_skip(n);
  for (std::size_t l = 0; l < n; ++l) {
    const auto& conv = layer(idx.dec(l)).conv;
    const std::size_t ln = tape.lens[l];
    kernels::tanh_backward(tape.dec_act[l], g_up);
    std::vector<double> g_cat(conv.in_ch * ln);
    conv_back(idx.dec(l), tape.dec_in[l], ln, g_up, g_cat);

    const std::size_t skip_ch = layer(idx.enc(l)).conv.out_ch;
    const std::size_t up_ch = conv.in_ch - skip_ch;
    g_skip[l].assign(g_cat.begin() + up_ch * ln, g_cat.end());
    std::vector<double> g_prev(up_ch * tape.lens[l + 1], 0.0);
    kernels::upsample_linear_backward(up_ch, std::span<const double>(g_cat).first(up_ch * ln),
                                      ln, g_prev, tape.lens[l + 1]);
    g_up = std::move(g_prev);
  }

  // g_up now holds the gradient w.r.t. the bottleneck activation.
  kernels::tanh_backward(tape.bottleneck, g_up);
  std::vector<double> g_pool(layer(idx.bottleneck()).conv.in_ch * tape.lens[n]);
  conv_back(idx.bottleneck(), tape.pooled[n - 1], tape.lens[n], g_up, g_pool);

  for (std::size_t l = n; l-- > 0;) {
    const std::size_t ch = layer(idx.enc(l)).conv.out_ch;
    const std::size_t ln = tape.lens[l];
    std::vector<double> g_act(ch * ln);
    kernels::avg_pool2_backward(ch, g_pool, ln, g_act);
    for (std::size_t i = 0; i < g_act.size(); ++i) g_act[i] += g_skip[l][i];
    kernels::tanh_backward(tape.enc_act[l], g_act);
    if (l == 0) {
      conv_back(idx.enc(0), tape.input, ln, g_act, {});
    } else {
      g_pool.assign(layer(idx.enc(l)).conv.in_ch * ln, 0.0);
      conv_back(idx.enc(l), tape.pooled[l - 1], ln, g_act, g_pool);
    }
  }
}

std::vector<double> unet_backward(const ModelParams& params, const Matrix& input,
                                  std::span<const double> upstream, Exec exec) {
  UnetTape tape;
  unet_forward(params, input, tape, exec);
  std::vector<double> grad(params.size(), 0.0);
  unet_backward(params, tape, upstream, grad, exec);
  return grad;
}

double hr_estimator_forward(const ModelParams& params, std::span<const double> waveform,
                            HrTape& tape, Exec exec) {
  if (params.kind != ModelKind::hr_estimator || waveform.size() != params.hr.input_len) {
    throw Error(ErrorCode::ShapeMismatch, "HR estimator expects a " +
                                              std::to_string(params.hr.input_len) +
                                              "-sample waveform");
  }
  const std::size_t n_conv = params.layers.size() - 1;
  tape.input.assign(waveform.begin(), waveform.end());
  tape.act.resize(n_conv);
  tape.lens.assign(1, waveform.size());
  std::span<const double> cur = tape.input;
  for (std::size_t i = 0; i < n_conv; ++i) {
    const auto& conv = params.layers[i].conv;
    const std::size_t out_len = conv.out_len(tape.lens[i]);
    tape.act[i].resize(conv.out_ch * out_len);
    kernels::conv1d_forward(exec, conv, params.weight(i), params.bias(i), cur, tape.lens[i],
                            tape.act[i]);
    kernels::tanh_inplace(tape.act[i]);
    tape.lens.push_back(out_len);
    cur = tape.act[i];
  }
  const auto& last = params.layers[n_conv - 1].conv;
  const std::size_t len = tape.lens.back();
  tape.pooled.assign(last.out_ch, 0.0);
  for (std::size_t c = 0; c < last.out_ch; ++c) {
    double s = 0.0;
    for (std::size_t t = 0; t < len; ++t) s += tape.act.back()[c * len + t];
    tape.pooled[c] = s / static_cast<double>(len);
  }
  const auto w = params.weight(n_conv);
  double y = params.bias(n_conv)[0];
  for (std::size_t c = 0; c < tape.pooled.size(); ++c) y += w[c] * tape.pooled[c];
  tape.output = params.hr.output_scale * y;
  return tape.output;
}

double hr_estimator_forward(const ModelParams& params, std::span<const double> waveform,
                            Exec exec) {
  HrTape tape;
  return hr_estimator_forward(params, waveform, tape, exec);
}

void hr_estimator_backward(const ModelParams& params, const HrTape& tape, double upstream,
                           std::span<double> grad, Exec exec) {
  if (grad.size() != params.size() || tape.act.size() + 1 != params.layers.size()) {
    throw Error(ErrorCode::ShapeMismatch, "HR estimator gradient layout mismatch");
  }
  const std::size_t n_conv = params.layers.size() - 1;
  const auto& head = params.layers[n_conv];
  const double dy = upstream * params.hr.output_scale;
  const auto w = params.weight(n_conv);
  auto gw = grad_w(grad, head);
  for (std::size_t c = 0; c < tape.pooled.size(); ++c) gw[c] += dy * tape.pooled[c];
  grad_b(grad, head)[0] += dy;

  const std::size_t len = tape.lens.back();
  std::vector<double> g(tape.act.back().size());
  for (std::size_t c = 0; c < tape.pooled.size(); ++c) {
    const double gc = dy * w[c] / static_cast<double>(len);
    std::fill(g.begin() + c * len, g.begin() + (c + 1) * len, gc);
  }
  for (std::size_t i = n_conv; i-- > 0;) {
    const auto& l = params.layers[i];
    kernels::tanh_backward(tape.act[i], g);
    std::span<const double> in = i == 0 ? std::span<const double>(tape.input) : tape.act[i - 1];
    std::vector<double> g_in(i == 0 ? 0 : l.conv.in_ch * tape.lens[i]);
    kernels::conv1d_backward(exec, l.conv, params.weight(i), in, tape.lens[i], g, g_in,
                             grad_w(grad, l), grad_b(grad, l));
    g = std::move(g_in);
  }
}

std::uint64_t params_checksum(const ModelParams& params) {
  return fnv1a(params.values.data(), params.values.size() * sizeof(double));
}

namespace {

constexpr std::array<char, 8> kMagic = {'I', 'P', 'P', 'G', 'C', 'K', 'P', '1'};

nlohmann::json descriptor(const ModelParams& p) {
  nlohmann::json d;
  d["seed"] = p.seed;
  d["count"] = p.values.size();
  if (p.kind == ModelKind::unet) {
    d["kind"] = "unet";
    d["in_channels"] = p.unet.in_channels;
    d["levels"] = p.unet.levels;
    d["base_channels"] = p.unet.base_channels;
    d["kernel_len"] = p.unet.kernel_len;
  } else {
    d["kind"] = "hr_estimator";
    d["channels"] = p.hr.channels;
    d["kernel_len"] = p.hr.kernel_len;
    d["stride"] = p.hr.stride;
    d["input_len"] = p.hr.input_len;
    d["output_scale"] = p.hr.output_scale;
  }
  return d;
}

void put_u64(std::ostream& os, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    const int c = is.get();
    if (c == EOF) throw Error(ErrorCode::Io, "truncated checkpoint");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const std::map<std::string, std::string>& meta) {
  nlohmann::json d = descriptor(params);
  if (!meta.empty()) d["meta"] = meta;
  const std::string text = d.dump();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path.string());
  os.write(kMagic.data(), kMagic.size());
  put_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  put_u64(os, params.values.size());
  for (double v : params.values) put_u64(os, std::bit_cast<std::uint64_t>(v));
  if (!os) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path,
                            std::map<std::string, std::string>* meta) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::MissingCheckpoint, path.string());
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw Error(ErrorCode::Io, path.string() + " is not a checkpoint");
  const std::uint64_t text_len = get_u64(is);
  std::string text(text_len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(text_len));
  if (!is) throw Error(ErrorCode::Io, "truncated checkpoint descriptor");
  const auto d = nlohmann::json::parse(text);

  ModelParams p;
  if (d.at("kind") == "unet") {
    UnetSpec s;
    s.in_channels = d.at("in_channels");
    s.levels = d.at("levels");
    s.base_channels = d.at("base_channels");
    s.kernel_len = d.at("kernel_len");
    p = make_layout(s);
  } else {
    HrEstimatorSpec s;
    s.channels = d.at("channels").get<std::vector<std::size_t>>();
    s.kernel_len = d.at("kernel_len");
    s.stride = d.at("stride");
    s.input_len = d.at("input_len");
    s.output_scale = d.at("output_scale");
    p = make_layout(s);
  }
  p.seed = d.at("seed");
  const std::uint64_t count = get_u64(is);
  if (count != p.values.size()) {
    throw Error(ErrorCode::ShapeMismatch, "checkpoint holds " + std::to_string(count) +
                                              " values, layout needs " +
                                              std::to_string(p.values.size()));
  }
  for (double& v : p.values) v = std::bit_cast<double>(get_u64(is));
  if (meta && d.contains("meta")) *meta = d["meta"].get<std::map<std::string, std::string>>();
  return p;
}

}  // namespace ippg
