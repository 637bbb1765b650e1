// SPDX-License-Identifier: Apache-2.0
#include "protomm/encoder.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace protomm {

namespace {

struct ConvSpec {
  std::string path;
  int in = 0;
  int out = 0;
  int kernel = 1;
  int stride = 1;
  int pad = 0;
  int weight = -1;  // index into weights: conv, then gamma, beta
  int buffer = -1;  // index into buffers: running mean, running var
};

struct BlockSpec {
  ConvSpec reduce, spatial, expand;
  std::optional<ConvSpec> shortcut;
};

struct Plan {
  ConvSpec stem;
  std::vector<BlockSpec> blocks;
  int linear = -1;  // weight, bias follow
  int final_channels = 0;
  int strided_ops = 0;
};

Plan build_plan(const EncoderConfig& c) {
  Plan plan;
  int w_idx = 0;
  int b_idx = 0;
  auto make = [&](std::string path, int in, int out, int kernel, int stride) {
    ConvSpec s{std::move(path), in, out, kernel, stride, (kernel - 1) / 2, w_idx, b_idx};
    w_idx += 3;
    b_idx += 2;
    return s;
  };
  plan.stem = make("stem", c.in_channels, c.base_width, c.kernel_size, c.stride);
  plan.strided_ops = c.stride > 1 ? 1 : 0;
  int channels = c.base_width;
  for (std::size_t stage = 0; stage < c.block_layout.size(); ++stage) {
    const int width = c.base_width << stage;
    const int out = width * c.expansion;
    for (int b = 0; b < c.block_layout[stage]; ++b) {
      const int stride = b == 0 ? c.stride : 1;
      if (stride > 1) ++plan.strided_ops;
      const std::string p = "stage" + std::to_string(stage) + ".block" + std::to_string(b);
      BlockSpec blk;
      blk.reduce = make(p + ".reduce", channels, width, 1, 1);
      blk.spatial = make(p + ".spatial", width, width, c.kernel_size, stride);
      blk.expand = make(p + ".expand", width, out, 1, 1);
      if (stride != 1 || channels != out) blk.shortcut = make(p + ".shortcut", channels, out, 1, stride);
      plan.blocks.push_back(std::move(blk));
      channels = out;
    }
  }
  plan.final_channels = channels;
  plan.linear = w_idx;
  return plan;
}

template <typename S>
void init_tensors(EncoderParams<S>& p, const Plan& plan) {
  const auto& c = p.config;
  auto add_conv = [&](const ConvSpec& s) {
    const int fan_in = s.in * s.kernel;
    Rng rng = derive_rng(p.seed, {static_cast<std::uint64_t>(p.weights.size())});
    std::normal_distribution<double> n(0.0, std::sqrt(2.0 / fan_in));
    Vec<S> w(static_cast<Eigen::Index>(s.out) * fan_in);
    for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = static_cast<S>(n(rng));
    p.weights.push_back({s.path + ".conv.weight", {s.out, s.in, s.kernel}, std::move(w)});
    p.weights.push_back({s.path + ".bn.weight", {s.out}, Vec<S>::Ones(s.out)});
    p.weights.push_back({s.path + ".bn.bias", {s.out}, Vec<S>::Zero(s.out)});
    p.buffers.push_back({s.path + ".bn.running_mean", {s.out}, Vec<S>::Zero(s.out)});
    p.buffers.push_back({s.path + ".bn.running_var", {s.out}, Vec<S>::Ones(s.out)});
  };
  add_conv(plan.stem);
  for (const auto& b : plan.blocks) {
    add_conv(b.reduce);
    add_conv(b.spatial);
    add_conv(b.expand);
    if (b.shortcut) add_conv(*b.shortcut);
  }
  Rng rng = derive_rng(p.seed, {static_cast<std::uint64_t>(p.weights.size())});
  const double bound = 1.0 / std::sqrt(static_cast<double>(plan.final_channels));
  std::uniform_real_distribution<double> u(-bound, bound);
  Vec<S> w(static_cast<Eigen::Index>(c.embed_dim) * plan.final_channels);
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = static_cast<S>(u(rng));
  Vec<S> bias(c.embed_dim);
  for (Eigen::Index i = 0; i < bias.size(); ++i) bias[i] = static_cast<S>(u(rng));
  p.weights.push_back({"head.linear.weight", {c.embed_dim, plan.final_channels}, std::move(w)});
  p.weights.push_back({"head.linear.bias", {c.embed_dim}, std::move(bias)});
}

int floor_div(int a, int b) { return a / b - (a % b != 0 && (a < 0) != (b < 0)); }

int out_length(int t_in, const ConvSpec& s) { return (t_in + 2 * s.pad - s.kernel) / s.stride + 1; }

template <typename S>
using MapMat = Eigen::Map<const Mat<S>>;

template <typename S>
MapMat<S> conv_weight(const EncoderParams<S>& p, const ConvSpec& s) {
  return MapMat<S>(p.weights[s.weight].data.data(), s.out, static_cast<Eigen::Index>(s.in) * s.kernel);
}

// x: (B·T_in)×C_in  →  (B·T_out)×(C_in·K) with column index ci·K + k.
template <typename S>
Mat<S> im2col(const Mat<S>& x, int batch, int t_in, const ConvSpec& s, int t_out) {
  Mat<S> cols = Mat<S>::Zero(static_cast<Eigen::Index>(batch) * t_out,
                             static_cast<Eigen::Index>(s.in) * s.kernel);
  for (int ci = 0; ci < s.in; ++ci) {
    const S* src = x.col(ci).data();
    for (int k = 0; k < s.kernel; ++k) {
      S* dst = cols.col(static_cast<Eigen::Index>(ci) * s.kernel + k).data();
      // valid output range: 0 <= to·stride + k − pad < t_in
      const int lo = std::max(0, (s.pad - k + s.stride - 1) / s.stride);
      const int hi = std::min(t_out, floor_div(t_in - 1 + s.pad - k, s.stride) + 1);
      for (int b = 0; b < batch; ++b) {
        const S* in_b = src + static_cast<std::ptrdiff_t>(b) * t_in;
        S* out_b = dst + static_cast<std::ptrdiff_t>(b) * t_out;
        for (int to = lo; to < hi; ++to) out_b[to] = in_b[to * s.stride + k - s.pad];
      }
    }
  }
  return cols;
}

template <typename S>
Mat<S> col2im(const Mat<S>& dcols, int batch, int t_in, const ConvSpec& s, int t_out) {
  Mat<S> dx = Mat<S>::Zero(static_cast<Eigen::Index>(batch) * t_in, s.in);
  for (int ci = 0; ci < s.in; ++ci) {
    S* dst = dx.col(ci).data();
    for (int k = 0; k < s.kernel; ++k) {
      const S* src = dcols.col(static_cast<Eigen::Index>(ci) * s.kernel + k).data();
      const int lo = std::max(0, (s.pad - k + s.stride - 1) / s.stride);
      const int hi = std::min(t_out, floor_div(t_in - 1 + s.pad - k, s.stride) + 1);
      for (int b = 0; b < batch; ++b) {
        S* in_b = dst + static_cast<std::ptrdiff_t>(b) * t_in;
        const S* out_b = src + static_cast<std::ptrdiff_t>(b) * t_out;
        for (int to = lo; to < hi; ++to) in_b[to * s.stride + k - s.pad] += out_b[to];
      }
    }
  }
  return dx;
}

bool is_pointwise(const ConvSpec& s) { return s.kernel == 1 && s.stride == 1 && s.pad == 0; }

template <typename S>
Mat<S> conv_bn_forward(EncoderParams<S>& p, const ConvSpec& s, const Mat<S>& x, int batch,
                       int t_in, Mode mode, bool update, ConvBNCache<S>* cache) {
  const int t_out = out_length(t_in, s);
  const auto w = conv_weight(p, s);
  Mat<S> y;
  if (is_pointwise(s)) {
    y.noalias() = x * w.transpose();
    if (cache) cache->cols = x;
  } else {
    Mat<S> cols = im2col(x, batch, t_in, s, t_out);
    y.noalias() = cols * w.transpose();
    if (cache) cache->cols = std::move(cols);
  }

  const auto& gamma = p.weights[s.weight + 1].data;
  const auto& beta = p.weights[s.weight + 2].data;
  auto& rmean = p.buffers[s.buffer].data;
  auto& rvar = p.buffers[s.buffer + 1].data;
  const S eps = static_cast<S>(p.config.bn_eps);
  const Eigen::Index n = y.rows();

  if (mode == Mode::train) {
    const RowVec<S> mean = y.colwise().mean();
    y.rowwise() -= mean;
    const RowVec<S> var = y.array().square().colwise().sum() / static_cast<S>(n);
    const RowVec<S> inv_std = (var.array() + eps).rsqrt();
    y.array().rowwise() *= inv_std.array();
    if (cache) {
      cache->xhat = y;
      cache->inv_std = inv_std;
    }
    if (update) {
      const S m = static_cast<S>(p.config.bn_momentum);
      const S unbias = n > 1 ? static_cast<S>(n) / static_cast<S>(n - 1) : S(1);
      rmean = (S(1) - m) * rmean + m * mean.transpose();
      rvar = (S(1) - m) * rvar + m * unbias * var.transpose();
    }
  } else {
    const RowVec<S> inv_std = (rvar.array() + eps).rsqrt().transpose();
    y.rowwise() -= rmean.transpose();
    y.array().rowwise() *= inv_std.array();
  }
  y.array().rowwise() *= gamma.transpose().array();
  y.rowwise() += beta.transpose();
  if (cache) {
    cache->t_in = t_in;
    cache->t_out = t_out;
  }
  return y;
}

// Returns dX; accumulates dW, dγ, dβ.
template <typename S>
Mat<S> conv_bn_backward(const EncoderParams<S>& p, const ConvSpec& s, const ConvBNCache<S>& cache,
                        const Mat<S>& dy, int batch, ParamGrads<S>& grads) {
  const auto& gamma = p.weights[s.weight + 1].data;
  const Eigen::Index n = dy.rows();
  grads[s.weight + 1] += (dy.array() * cache.xhat.array()).colwise().sum().transpose().matrix();
  grads[s.weight + 2] += dy.colwise().sum().transpose();

  Mat<S> dxhat = dy;
  dxhat.array().rowwise() *= gamma.transpose().array();
  const RowVec<S> sum_dxhat = dxhat.colwise().sum();
  const RowVec<S> sum_dxhat_xhat = (dxhat.array() * cache.xhat.array()).colwise().sum();
  Mat<S> dz = dxhat * static_cast<S>(n);
  dz.rowwise() -= sum_dxhat;
  dz.array() -= cache.xhat.array().rowwise() * sum_dxhat_xhat.array();
  dz.array().rowwise() *= (cache.inv_std.array() / static_cast<S>(n));

  const auto w = conv_weight(p, s);
  Eigen::Map<Mat<S>> dw(grads[s.weight].data(), s.out, static_cast<Eigen::Index>(s.in) * s.kernel);
  dw.noalias() += dz.transpose() * cache.cols;
  Mat<S> dcols = dz * w;
  if (is_pointwise(s)) return dcols;
  return col2im(dcols, batch, cache.t_in, s, cache.t_out);
}

template <typename S>
void relu_inplace(Mat<S>& x) {
  x = x.cwiseMax(S(0));
}

template <typename S>
Mat<S> relu_backward(const Mat<S>& out, const Mat<S>& grad) {
  return (out.array() > S(0)).select(grad, S(0));
}

const Plan& cached_plan(const EncoderConfig& c) {
  thread_local EncoderConfig last;
  thread_local Plan plan;
  thread_local bool valid = false;
  if (!valid || !(last == c)) {
    plan = build_plan(c);
    last = c;
    valid = true;
  }
  return plan;
}

}  // namespace

int EncoderConfig::min_length() const {
  int strided = stride > 1 ? 1 : 0;
  for (int n : block_layout) {
    if (n > 0 && stride > 1) ++strided;
  }
  int len = 1;
  for (int i = 0; i < strided; ++i) len *= stride;
  return len;
}

int EncoderConfig::final_channels() const {
  return block_layout.empty() ? base_width
                              : (base_width << (block_layout.size() - 1)) * expansion;
}

void EncoderConfig::validate() const {
  if (in_channels < 1) throw ConfigError("encoder.in_channels", "must be >= 1");
  if (kernel_size < 1 || kernel_size % 2 == 0) throw ConfigError("encoder.kernel_size", "must be a positive odd number");
  if (stride < 1) throw ConfigError("encoder.stride", "must be >= 1");
  if (embed_dim < 1) throw ConfigError("encoder.embed_dim", "must be >= 1");
  if (base_width < 1 || expansion < 1) throw ConfigError("encoder.base_width", "base_width and expansion must be positive");
  for (int n : block_layout) {
    if (n < 1) throw ConfigError("encoder.block_layout", "every stage needs at least one block");
  }
}

int audit_weighted_layers(const EncoderConfig& config) {
  const Plan plan = build_plan(config);
  int count = plan.stem.weight >= 0 ? 1 : 0;
  // shortcuts are projections, not depth
  for (const auto& b : plan.blocks) {
    for (const ConvSpec* conv : {&b.reduce, &b.spatial, &b.expand}) count += conv->weight >= 0 ? 1 : 0;
  }
  return count + (plan.linear >= 0 ? 1 : 0);
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = {{"in_channels", c.in_channels}, {"kernel_size", c.kernel_size},
       {"stride", c.stride},           {"embed_dim", c.embed_dim},
       {"block_layout", c.block_layout}, {"base_width", c.base_width},
       {"expansion", c.expansion},     {"bn_momentum", c.bn_momentum},
       {"bn_eps", c.bn_eps}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  c.in_channels = j.at("in_channels").get<int>();
  c.kernel_size = j.at("kernel_size").get<int>();
  c.stride = j.at("stride").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.block_layout = j.at("block_layout").get<std::vector<int>>();
  c.base_width = j.at("base_width").get<int>();
  c.expansion = j.value("expansion", 4);
  c.bn_momentum = j.value("bn_momentum", 0.1);
  c.bn_eps = j.value("bn_eps", 1e-5);
}

template <typename S>
std::size_t EncoderParams<S>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += static_cast<std::size_t>(w.data.size());
  return n;
}

template <typename S>
const NamedTensor<S>& EncoderParams<S>::weight(std::string_view name) const {
  for (const auto& w : weights) {
    if (w.name == name) return w;
  }
  throw Error("encoder has no tensor '" + std::string(name) + "'");
}

template <typename S>
ParamGrads<S> zero_grads(const EncoderParams<S>& params) {
  ParamGrads<S> g;
  g.reserve(params.weights.size());
  for (const auto& w : params.weights) g.push_back(Vec<S>::Zero(w.data.size()));
  return g;
}

template <typename S>
EncoderParams<S> init_encoder_unchecked(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  EncoderParams<S> p;
  p.config = config;
  p.seed = seed;
  init_tensors(p, build_plan(config));
  return p;
}

template <typename S>
EncoderParams<S> init_encoder(const EncoderConfig& config, std::uint64_t seed) {
  const int layers = audit_weighted_layers(config);
  if (layers != 26) {
    throw Error("encoder layout audits to " + std::to_string(layers) +
                " weighted layers; a ResNet-26 needs 26");
  }
  return init_encoder_unchecked<S>(config, seed);
}

template <typename S>
InputBatch<S> pack_batch(const std::vector<const TimeSeriesWindow*>& windows) {
  if (windows.empty()) throw Error("pack_batch: empty batch");
  const int t_len = windows.front()->length();
  const int channels = windows.front()->channels();
  InputBatch<S> out;
  out.batch = static_cast<int>(windows.size());
  out.length = t_len;
  out.data.resize(static_cast<Eigen::Index>(out.batch) * t_len, channels);
  for (int b = 0; b < out.batch; ++b) {
    const auto& w = *windows[b];
    if (w.length() != t_len || w.channels() != channels) {
      throw Error("pack_batch: windows differ in shape");
    }
    out.data.middleRows(static_cast<Eigen::Index>(b) * t_len, t_len) = w.samples.cast<S>();
  }
  return out;
}

template <typename S>
InputBatch<S> pack_fused_batch(const std::vector<std::vector<const TimeSeriesWindow*>>& per_modality) {
  if (per_modality.empty()) throw Error("pack_fused_batch: no modalities");
  std::vector<InputBatch<S>> parts;
  int channels = 0;
  for (const auto& m : per_modality) {
    parts.push_back(pack_batch<S>(m));
    channels += static_cast<int>(parts.back().data.cols());
    if (parts.back().length != parts.front().length || parts.back().batch != parts.front().batch) {
      throw Error("pack_fused_batch: modalities differ in length or batch size");
    }
  }
  InputBatch<S> out;
  out.batch = parts.front().batch;
  out.length = parts.front().length;
  out.data.resize(parts.front().data.rows(), channels);
  int c = 0;
  for (const auto& p : parts) {
    out.data.middleCols(c, p.data.cols()) = p.data;
    c += static_cast<int>(p.data.cols());
  }
  return out;
}

template <typename S>
Mat<S> normalize_rows(const Mat<S>& x, Vec<S>* norms) {
  Vec<S> n = x.rowwise().norm();
  n = n.cwiseMax(static_cast<S>(1e-12));
  if (norms) *norms = n;
  return n.cwiseInverse().asDiagonal() * x;
}

template <typename S>
Mat<S> normalize_rows_backward(const Mat<S>& normalized, const Vec<S>& norms, const Mat<S>& grad) {
  // d(y/‖y‖) = (g − z·(z·g)) / ‖y‖
  const Vec<S> dots = (normalized.array() * grad.array()).rowwise().sum();
  Mat<S> out = grad - dots.asDiagonal() * normalized;
  return norms.cwiseInverse().asDiagonal() * out;
}

template <typename S>
Mat<S> encoder_forward(EncoderParams<S>& params, const InputBatch<S>& input, Mode mode,
                       EncoderCache<S>* cache, bool update_running_stats) {
  const auto& c = params.config;
  if (input.data.cols() != c.in_channels) {
    throw Error("encoder expects " + std::to_string(c.in_channels) + " channels, got " +
                std::to_string(input.data.cols()));
  }
  if (input.length < c.min_length()) {
    throw Error("input length " + std::to_string(input.length) + " is below the encoder minimum of " +
                std::to_string(c.min_length()) + " samples");
  }
  const Plan& plan = cached_plan(c);
  const bool update = mode == Mode::train && update_running_stats;
  const int batch = input.batch;
  if (cache) {
    cache->batch = batch;
    cache->training = mode == Mode::train;
    cache->blocks.assign(plan.blocks.size(), {});
  }

  int t = input.length;
  Mat<S> h = conv_bn_forward(params, plan.stem, input.data, batch, t, mode, update,
                             cache ? &cache->stem : nullptr);
  relu_inplace(h);
  t = out_length(t, plan.stem);
  if (cache) cache->stem_out = h;

  for (std::size_t i = 0; i < plan.blocks.size(); ++i) {
    const auto& blk = plan.blocks[i];
    BlockCache<S>* bc = cache ? &cache->blocks[i] : nullptr;
    const int t_out = out_length(t, blk.spatial);
    Mat<S> h1 = conv_bn_forward(params, blk.reduce, h, batch, t, mode, update, bc ? &bc->reduce : nullptr);
    relu_inplace(h1);
    Mat<S> h2 = conv_bn_forward(params, blk.spatial, h1, batch, t, mode, update, bc ? &bc->spatial : nullptr);
    relu_inplace(h2);
    Mat<S> h3 = conv_bn_forward(params, blk.expand, h2, batch, t_out, mode, update, bc ? &bc->expand : nullptr);
    if (blk.shortcut) {
      h3 += conv_bn_forward(params, *blk.shortcut, h, batch, t, mode, update, bc ? &bc->shortcut : nullptr);
    } else {
      h3 += h;
    }
    relu_inplace(h3);
    if (bc) {
      bc->h1 = std::move(h1);
      bc->h2 = std::move(h2);
      bc->out = h3;
      bc->has_shortcut = blk.shortcut.has_value();
      bc->t_in = t;
      bc->t_out = t_out;
    }
    h = std::move(h3);
    t = t_out;
  }

  // global max pooling over time
  const int channels = static_cast<int>(h.cols());
  Mat<S> pooled(batch, channels);
  std::vector<int> argmax(static_cast<std::size_t>(batch) * channels);
  for (int ch = 0; ch < channels; ++ch) {
    for (int b = 0; b < batch; ++b) {
      Eigen::Index r = 0;
      pooled(b, ch) = h.col(ch).segment(static_cast<Eigen::Index>(b) * t, t).maxCoeff(&r);
      argmax[static_cast<std::size_t>(ch) * batch + b] = static_cast<int>(b * t + r);
    }
  }

  const auto& lw = params.weights[plan.linear];
  const auto& lb = params.weights[plan.linear + 1];
  MapMat<S> w(lw.data.data(), c.embed_dim, plan.final_channels);
  Mat<S> z = pooled * w.transpose();
  z.rowwise() += lb.data.transpose();
  Vec<S> norms;
  Mat<S> out = normalize_rows<S>(z, &norms);
  if (cache) {
    cache->argmax = std::move(argmax);
    cache->pooled = std::move(pooled);
    cache->pre_norm = std::move(z);
    cache->norms = std::move(norms);
    cache->output = out;
  }
  return out;
}

template <typename S>
Mat<S> encode_batch(const EncoderParams<S>& params, const InputBatch<S>& input) {
  // eval mode reads but never writes the parameters
  return encoder_forward<S>(const_cast<EncoderParams<S>&>(params), input, Mode::eval, nullptr, false);
}

template <typename S>
Vec<S> encode(const EncoderParams<S>& params, const TimeSeriesWindow& window) {
  auto batch = pack_batch<S>({&window});
  return encode_batch(params, batch).row(0).transpose();
}

template <typename S>
Mat<S> encoder_backward(const EncoderParams<S>& params, const EncoderCache<S>& cache,
                        const Mat<S>& grad_output, ParamGrads<S>& grads) {
  if (!cache.training) throw Error("encoder_backward needs a train-mode cache");
  const auto& c = params.config;
  const Plan& plan = cached_plan(c);
  const int batch = cache.batch;

  Mat<S> dz = normalize_rows_backward<S>(cache.output, cache.norms, grad_output);
  Eigen::Map<Mat<S>> dw(grads[plan.linear].data(), c.embed_dim, plan.final_channels);
  dw.noalias() += dz.transpose() * cache.pooled;
  grads[plan.linear + 1] += dz.colwise().sum().transpose();
  MapMat<S> w(params.weights[plan.linear].data.data(), c.embed_dim, plan.final_channels);
  const Mat<S> dpooled = dz * w;

  const auto& last = cache.blocks.empty() ? cache.stem_out : cache.blocks.back().out;
  Mat<S> dh = Mat<S>::Zero(last.rows(), last.cols());
  for (Eigen::Index ch = 0; ch < dh.cols(); ++ch) {
    for (int b = 0; b < batch; ++b) {
      dh(cache.argmax[static_cast<std::size_t>(ch) * batch + b], ch) += dpooled(b, ch);
    }
  }

  for (std::size_t i = plan.blocks.size(); i-- > 0;) {
    const auto& blk = plan.blocks[i];
    const auto& bc = cache.blocks[i];
    const Mat<S> dsum = relu_backward<S>(bc.out, dh);
    Mat<S> dh2 = conv_bn_backward(params, blk.expand, bc.expand, dsum, batch, grads);
    dh2 = relu_backward<S>(bc.h2, dh2);
    Mat<S> dh1 = conv_bn_backward(params, blk.spatial, bc.spatial, dh2, batch, grads);
    dh1 = relu_backward<S>(bc.h1, dh1);
    Mat<S> dx = conv_bn_backward(params, blk.reduce, bc.reduce, dh1, batch, grads);
    if (blk.shortcut) {
      dx += conv_bn_backward(params, *blk.shortcut, bc.shortcut, dsum, batch, grads);
    } else {
      dx += dsum;
    }
    dh = std::move(dx);
  }
  dh = relu_backward<S>(cache.stem_out, dh);
  return conv_bn_backward(params, plan.stem, cache.stem, dh, batch, grads);
}

#define PROTOMM_INSTANTIATE(S)                                                                   \
  template struct EncoderParams<S>;                                                              \
  template ParamGrads<S> zero_grads<S>(const EncoderParams<S>&);                                 \
  template EncoderParams<S> init_encoder<S>(const EncoderConfig&, std::uint64_t);                \
  template EncoderParams<S> init_encoder_unchecked<S>(const EncoderConfig&, std::uint64_t);      \
  template InputBatch<S> pack_batch<S>(const std::vector<const TimeSeriesWindow*>&);             \
  template InputBatch<S> pack_fused_batch<S>(                                                    \
      const std::vector<std::vector<const TimeSeriesWindow*>>&);                                 \
  template Mat<S> normalize_rows<S>(const Mat<S>&, Vec<S>*);                                     \
  template Mat<S> normalize_rows_backward<S>(const Mat<S>&, const Vec<S>&, const Mat<S>&);       \
  template Mat<S> encoder_forward<S>(EncoderParams<S>&, const InputBatch<S>&, Mode,              \
                                     EncoderCache<S>*, bool);                                    \
  template Mat<S> encode_batch<S>(const EncoderParams<S>&, const InputBatch<S>&);                \
  template Vec<S> encode<S>(const EncoderParams<S>&, const TimeSeriesWindow&);                   \
  template Mat<S> encoder_backward<S>(const EncoderParams<S>&, const EncoderCache<S>&,           \
                                      const Mat<S>&, ParamGrads<S>&);

PROTOMM_INSTANTIATE(float)
PROTOMM_INSTANTIATE(double)

}  // namespace protomm
