// Copyright 2026 The hwq Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "hwq/engine.hpp"

#include <cmath>
#include <string>
#include <variant>

#include "hwq/error.hpp"

namespace hwq {

namespace {

struct ConvGeometry {
  std::size_t in_c, in_h, in_w;
  std::size_t out_c, out_h, out_w;
  std::size_t kh, kw, stride, pad;

  std::size_t patch() const { return in_c * kh * kw; }
  std::size_t positions() const { return out_h * out_w; }
};

ConvGeometry geometry(const Tensor& input, const Conv2d& conv) {
  if (input.rank() != 4 || input.dim(1) != conv.in_channels) {
    throw Error(ErrorCode::kShapeMismatch,
                "conv input " + shape_string(input.shape()) + " expects " +
                    std::to_string(conv.in_channels) + " channels");
  }
  const FeatureShape out =
      conv.output_shape({input.dim(1), input.dim(2), input.dim(3)});
  return {input.dim(1), input.dim(2), input.dim(3), conv.out_channels,
          out.height,   out.width,    conv.kernel_h, conv.kernel_w,
          conv.stride,  conv.padding};
}

// Patch-major lowering: positions x patch, so each dot product reads two
// contiguous rows. Zero padding is materialised.
void lower_sample(const Tensor& input, std::size_t n, const ConvGeometry& g,
                  std::vector<float>& patches) {
  patches.assign(g.positions() * g.patch(), 0.0F);
  for (std::size_t oh = 0; oh < g.out_h; ++oh) {
    for (std::size_t ow = 0; ow < g.out_w; ++ow) {
      float* row = patches.data() + (oh * g.out_w + ow) * g.patch();
      std::size_t k = 0;
      for (std::size_t c = 0; c < g.in_c; ++c) {
        for (std::size_t y = 0; y < g.kh; ++y) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + y) -
                          static_cast<std::ptrdiff_t>(g.pad);
          for (std::size_t x = 0; x < g.kw; ++x, ++k) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + x) -
                            static_cast<std::ptrdiff_t>(g.pad);
            if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h) ||
                iw >= static_cast<std::ptrdiff_t>(g.in_w)) {
              continue;
            }
            row[k] = input.at(n, c, static_cast<std::size_t>(ih),
                              static_cast<std::size_t>(iw));
          }
        }
      }
    }
  }
}

double dot(const float* a, const float* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

Tensor conv_forward(const Tensor& input, const Conv2d& conv,
                    const Tensor& weight) {
  const ConvGeometry g = geometry(input, conv);
  const std::size_t batch = input.dim(0);
  Tensor out({batch, g.out_c, g.out_h, g.out_w});
  std::vector<float> patches;
  const float* w = weight.data().data();
  for (std::size_t n = 0; n < batch; ++n) {
    lower_sample(input, n, g, patches);
    for (std::size_t o = 0; o < g.out_c; ++o) {
      const double bias = conv.bias.empty() ? 0.0 : conv.bias[o];
      float* dst = &out.at(n, o, 0, 0);
      for (std::size_t p = 0; p < g.positions(); ++p) {
        dst[p] = static_cast<float>(
            dot(w + o * g.patch(), patches.data() + p * g.patch(), g.patch()) +
            bias);
      }
    }
  }
  return out;
}

// d(input) of a convolution: kernel_matrix^T x grad, scattered back (col2im).
void conv_backward(const Tensor& input, const Conv2d& conv,
                   const std::vector<double>& grad_out,
                   std::vector<double>& grad_in) {
  const ConvGeometry g = geometry(input, conv);
  const std::size_t batch = input.dim(0);
  grad_in.assign(input.size(), 0.0);
  std::vector<double> col(g.patch());
  const float* w = conv.weight.data().data();
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t oh = 0; oh < g.out_h; ++oh) {
      for (std::size_t ow = 0; ow < g.out_w; ++ow) {
        std::fill(col.begin(), col.end(), 0.0);
        for (std::size_t o = 0; o < g.out_c; ++o) {
          const double go =
              grad_out[((n * g.out_c + o) * g.out_h + oh) * g.out_w + ow];
          if (go == 0.0) continue;
          const float* wr = w + o * g.patch();
          for (std::size_t k = 0; k < g.patch(); ++k) col[k] += wr[k] * go;
        }
        std::size_t k = 0;
        for (std::size_t c = 0; c < g.in_c; ++c) {
          for (std::size_t y = 0; y < g.kh; ++y) {
            const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + y) -
                            static_cast<std::ptrdiff_t>(g.pad);
            for (std::size_t x = 0; x < g.kw; ++x, ++k) {
              const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + x) -
                              static_cast<std::ptrdiff_t>(g.pad);
              if (ih < 0 || iw < 0 ||
                  ih >= static_cast<std::ptrdiff_t>(g.in_h) ||
                  iw >= static_cast<std::ptrdiff_t>(g.in_w)) {
                continue;
              }
              grad_in[((n * g.in_c + c) * g.in_h +
                       static_cast<std::size_t>(ih)) *
                          g.in_w +
                      static_cast<std::size_t>(iw)] += col[k];
            }
          }
        }
      }
    }
  }
}

struct BnAffine {
  std::vector<double> scale, shift;
};

BnAffine bn_affine(const BatchNorm& bn) {
  BnAffine a;
  a.scale.resize(bn.channels);
  a.shift.resize(bn.channels);
  for (std::size_t c = 0; c < bn.channels; ++c) {
    const double s = static_cast<double>(bn.gamma[c]) /
                     std::sqrt(static_cast<double>(bn.running_var[c]) +
                               static_cast<double>(bn.eps));
    a.scale[c] = s;
    a.shift[c] = static_cast<double>(bn.beta[c]) -
                 s * static_cast<double>(bn.running_mean[c]);
  }
  return a;
}

Tensor bn_forward(const Tensor& input, const BatchNorm& bn) {
  const BnAffine a = bn_affine(bn);
  Tensor out(input.shape());
  const std::size_t hw = input.dim(2) * input.dim(3);
  for (std::size_t n = 0; n < input.dim(0); ++n) {
    for (std::size_t c = 0; c < input.dim(1); ++c) {
      const float* src = &input.at(n, c, 0, 0);
      float* dst = &out.at(n, c, 0, 0);
      for (std::size_t i = 0; i < hw; ++i) {
        dst[i] = static_cast<float>(a.scale[c] * src[i] + a.shift[c]);
      }
    }
  }
  return out;
}

BnStats channel_stats(const Tensor& input, std::size_t layer) {
  const std::size_t channels = input.dim(1);
  const std::size_t hw = input.dim(2) * input.dim(3);
  const auto count = static_cast<double>(input.dim(0) * hw);
  BnStats s{layer, std::vector<double>(channels, 0.0),
            std::vector<double>(channels, 0.0)};
  for (std::size_t c = 0; c < channels; ++c) {
    double sum = 0.0;
    for (std::size_t n = 0; n < input.dim(0); ++n) {
      const float* src = &input.at(n, c, 0, 0);
      for (std::size_t i = 0; i < hw; ++i) sum += src[i];
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (std::size_t n = 0; n < input.dim(0); ++n) {
      const float* src = &input.at(n, c, 0, 0);
      for (std::size_t i = 0; i < hw; ++i) {
        const double d = src[i] - mean;
        sq += d * d;
      }
    }
    s.mean[c] = mean;
    s.std[c] = std::sqrt(sq / count);
  }
  return s;
}

Tensor relu_forward(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    out[i] = input[i] > 0.0F ? input[i] : 0.0F;
  }
  return out;
}

Tensor pool_forward(const Tensor& input, const AvgPool& pool) {
  const FeatureShape os =
      pool.output_shape({input.dim(1), input.dim(2), input.dim(3)});
  Tensor out({input.dim(0), os.channels, os.height, os.width});
  const double inv = 1.0 / static_cast<double>(pool.window * pool.window);
  for (std::size_t n = 0; n < input.dim(0); ++n) {
    for (std::size_t c = 0; c < os.channels; ++c) {
      for (std::size_t oh = 0; oh < os.height; ++oh) {
        for (std::size_t ow = 0; ow < os.width; ++ow) {
          double acc = 0.0;
          for (std::size_t y = 0; y < pool.window; ++y) {
            for (std::size_t x = 0; x < pool.window; ++x) {
              acc += input.at(n, c, oh * pool.stride + y, ow * pool.stride + x);
            }
          }
          out.at(n, c, oh, ow) = static_cast<float>(acc * inv);
        }
      }
    }
  }
  return out;
}

Tensor linear_forward(const Tensor& input, const Linear& fc,
                      const Tensor& weight) {
  const std::size_t batch = input.dim(0);
  const std::size_t in = input.size() / batch;
  if (in != fc.in_features) {
    throw Error(ErrorCode::kShapeMismatch,
                "linear expects " + std::to_string(fc.in_features) +
                    " features, got " + std::to_string(in));
  }
  Tensor out({batch, fc.out_features, 1, 1});
  const float* w = weight.data().data();
  for (std::size_t n = 0; n < batch; ++n) {
    const float* x = input.data().data() + n * in;
    for (std::size_t o = 0; o < fc.out_features; ++o) {
      const double bias = fc.bias.empty() ? 0.0 : fc.bias[o];
      out[n * fc.out_features + o] =
          static_cast<float>(dot(w + o * in, x, in) + bias);
    }
  }
  return out;
}

Tensor residual_forward(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorCode::kShapeMismatch, "residual operands differ in shape");
  }
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

void check_batch(const ModelGraph& model, const Tensor& batch) {
  const FeatureShape& in = model.input_shape;
  if (batch.rank() != 4 || batch.dim(0) == 0 || batch.dim(1) != in.channels ||
      batch.dim(2) != in.height || batch.dim(3) != in.width) {
    throw Error(ErrorCode::kShapeMismatch,
                "batch shape " + shape_string(batch.shape()) +
                    " does not match model input (N, " +
                    std::to_string(in.channels) + ", " +
                    std::to_string(in.height) + ", " +
                    std::to_string(in.width) + ")");
  }
}

const Tensor& weight_for(std::size_t layer, const Tensor& own,
                         const ExecutionHooks* hooks) {
  if (hooks && layer < hooks->weights.size() && hooks->weights[layer]) {
    const Tensor& w = *hooks->weights[layer];
    if (w.shape() != own.shape()) {
      throw Error(ErrorCode::kShapeMismatch, "substituted weights differ",
                  layer);
    }
    return w;
  }
  return own;
}

struct RunResult {
  std::vector<Tensor> outputs;
  std::vector<BnStats> bn;
};

RunResult run(const ModelGraph& model, const Tensor& batch, bool record,
              const ExecutionHooks* hooks) {
  check_batch(model, batch);
  RunResult r;
  r.outputs.reserve(model.layers.size());
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Tensor& in = i == 0 ? batch : r.outputs[i - 1];
    const Layer& layer = model.layers[i];
    Tensor hooked;
    const Tensor* src = &in;
    if (hooks && hooks->before_weighted_layer && has_weights(layer)) {
      hooked = in;
      hooks->before_weighted_layer(i, hooked);
      src = &hooked;
    }
    Tensor out;
    try {
      if (const auto* conv = std::get_if<Conv2d>(&layer)) {
        out = conv_forward(*src, *conv, weight_for(i, conv->weight, hooks));
      } else if (const auto* bn = std::get_if<BatchNorm>(&layer)) {
        if (record) r.bn.push_back(channel_stats(*src, i));
        out = bn_forward(*src, *bn);
      } else if (std::holds_alternative<ReLU>(layer)) {
        out = relu_forward(*src);
      } else if (const auto* pool = std::get_if<AvgPool>(&layer)) {
        out = pool_forward(*src, *pool);
      } else if (const auto* fc = std::get_if<Linear>(&layer)) {
        out = linear_forward(*src, *fc, weight_for(i, fc->weight, hooks));
      } else if (const auto* add = std::get_if<ResidualAdd>(&layer)) {
        if (add->source >= i) {
          throw Error(ErrorCode::kInvalidArgument,
                      "residual source must precede the layer");
        }
        out = residual_forward(*src, r.outputs[add->source]);
      }
    } catch (const Error& e) {
      if (e.layer_index()) throw;
      throw Error(e.code(), e.message(), i);
    }
    if (!all_finite(out.data())) {
      throw Error(ErrorCode::kNumericFailure, "non-finite activation", i);
    }
    r.outputs.push_back(std::move(out));
  }
  return r;
}

Tensor to_logits(const ModelGraph& model, const Tensor& last) {
  const std::size_t batch = last.dim(0);
  if (last.size() != batch * model.class_count) {
    throw Error(ErrorCode::kShapeMismatch,
                "model output does not have class_count values per sample");
  }
  return last.reshaped({batch, model.class_count});
}

}  // namespace

ForwardResult forward(const ModelGraph& model, const Tensor& batch,
                      bool record) {
  return forward(model, batch, ForwardOptions{record, false});
}

ForwardResult forward(const ModelGraph& model, const Tensor& batch,
                      const ForwardOptions& options,
                      const ExecutionHooks* hooks) {
  RunResult r = run(model, batch, options.record_stats, hooks);
  ForwardResult result;
  result.logits = to_logits(model, r.outputs.back());
  if (options.record_stats || options.keep_activations) {
    ForwardTrace trace;
    trace.bn = std::move(r.bn);
    if (options.keep_activations) trace.activations = std::move(r.outputs);
    result.trace = std::move(trace);
  }
  return result;
}

Tensor im2col(const Tensor& feature, const Conv2d& conv, std::size_t sample) {
  const Tensor* input = &feature;
  Tensor promoted;
  if (feature.rank() == 3) {
    promoted = feature.reshaped({1, feature.dim(0), feature.dim(1),
                                 feature.dim(2)});
    input = &promoted;
  }
  const ConvGeometry g = geometry(*input, conv);
  if (sample >= input->dim(0)) {
    throw Error(ErrorCode::kInvalidArgument, "im2col sample out of range");
  }
  std::vector<float> patches;
  lower_sample(*input, sample, g, patches);
  Tensor matrix({g.patch(), g.positions()});
  for (std::size_t p = 0; p < g.positions(); ++p) {
    for (std::size_t k = 0; k < g.patch(); ++k) {
      matrix[k * g.positions() + p] = patches[p * g.patch() + k];
    }
  }
  return matrix;
}

Tensor kernel_matrix(const Conv2d& conv) {
  return conv.weight.reshaped(
      {conv.out_channels, conv.in_channels * conv.kernel_h * conv.kernel_w});
}

Tensor conv_via_matmul(const Tensor& feature, const Conv2d& conv) {
  return conv_forward(feature, conv, conv.weight);
}

std::vector<BnStats> bn_targets(const ModelGraph& model) {
  std::vector<BnStats> out;
  for (std::size_t i : batchnorm_layers(model)) {
    const auto& bn = std::get<BatchNorm>(model.layers[i]);
    BnStats s{i, {}, {}};
    for (std::size_t c = 0; c < bn.channels; ++c) {
      s.mean.push_back(bn.running_mean[c]);
      s.std.push_back(std::sqrt(static_cast<double>(bn.running_var[c])));
    }
    out.push_back(std::move(s));
  }
  return out;
}

StatLossGradient input_gradient(const ModelGraph& model, const Tensor& batch) {
  return input_gradient(model, batch, bn_targets(model));
}

StatLossGradient input_gradient(const ModelGraph& model, const Tensor& batch,
                                const std::vector<BnStats>& targets) {
  const auto bn_layers = batchnorm_layers(model);
  if (bn_layers.empty()) {
    throw Error(ErrorCode::kUnsupported,
                "input gradient needs at least one batchnorm layer");
  }
  if (targets.size() != bn_layers.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "need one target per batchnorm layer");
  }
  RunResult r = run(model, batch, true, nullptr);

  StatLossGradient result;
  std::vector<std::vector<double>> grad_out(model.layers.size());
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    grad_out[i].assign(r.outputs[i].size(), 0.0);
  }
  std::vector<double> grad_in;
  std::size_t bn_cursor = bn_layers.size();
  std::size_t last_bn = bn_layers.back();

  for (std::size_t idx = model.layers.size(); idx-- > 0;) {
    const Layer& layer = model.layers[idx];
    const Tensor& x = idx == 0 ? batch : r.outputs[idx - 1];
    const std::vector<double>& g = grad_out[idx];
    if (idx > last_bn) continue;  // nothing downstream contributes

    if (const auto* conv = std::get_if<Conv2d>(&layer)) {
      conv_backward(x, *conv, g, grad_in);
    } else if (const auto* bn = std::get_if<BatchNorm>(&layer)) {
      --bn_cursor;
      const BnStats& obs = r.bn[bn_cursor];
      const BnStats& tgt = targets[bn_cursor];
      if (tgt.mean.size() != bn->channels || tgt.std.size() != bn->channels) {
        throw Error(ErrorCode::kInvalidArgument, "target stats length", idx);
      }
      const BnAffine a = bn_affine(*bn);
      const std::size_t hw = x.dim(2) * x.dim(3);
      const auto m = static_cast<double>(x.dim(0) * hw);
      grad_in.assign(x.size(), 0.0);
      for (std::size_t c = 0; c < bn->channels; ++c) {
        const double dmean = obs.mean[c] - tgt.mean[c];
        const double dstd = obs.std[c] - tgt.std[c];
        result.loss += dmean * dmean + dstd * dstd;
        const double gm = 2.0 * dmean / m;
        const double gs = obs.std[c] > 0.0 ? 2.0 * dstd / (m * obs.std[c]) : 0.0;
        for (std::size_t n = 0; n < x.dim(0); ++n) {
          const std::size_t base = (n * bn->channels + c) * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            grad_in[base + i] = a.scale[c] * g[base + i] + gm +
                                gs * (x[base + i] - obs.mean[c]);
          }
        }
      }
    } else if (std::holds_alternative<ReLU>(layer)) {
      grad_in.assign(x.size(), 0.0);
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > 0.0F) grad_in[i] = g[i];
      }
    } else if (const auto* pool = std::get_if<AvgPool>(&layer)) {
      grad_in.assign(x.size(), 0.0);
      const Tensor& y = r.outputs[idx];
      const double inv = 1.0 / static_cast<double>(pool->window * pool->window);
      for (std::size_t n = 0; n < y.dim(0); ++n) {
        for (std::size_t c = 0; c < y.dim(1); ++c) {
          for (std::size_t oh = 0; oh < y.dim(2); ++oh) {
            for (std::size_t ow = 0; ow < y.dim(3); ++ow) {
              const double go =
                  g[((n * y.dim(1) + c) * y.dim(2) + oh) * y.dim(3) + ow] * inv;
              for (std::size_t yy = 0; yy < pool->window; ++yy) {
                for (std::size_t xx = 0; xx < pool->window; ++xx) {
                  grad_in[((n * x.dim(1) + c) * x.dim(2) + oh * pool->stride +
                           yy) *
                              x.dim(3) +
                          ow * pool->stride + xx] += go;
                }
              }
            }
          }
        }
      }
    } else if (const auto* fc = std::get_if<Linear>(&layer)) {
      grad_in.assign(x.size(), 0.0);
      const std::size_t in = fc->in_features;
      for (std::size_t n = 0; n < x.dim(0); ++n) {
        for (std::size_t o = 0; o < fc->out_features; ++o) {
          const double go = g[n * fc->out_features + o];
          if (go == 0.0) continue;
          const float* w = fc->weight.data().data() + o * in;
          for (std::size_t i = 0; i < in; ++i) grad_in[n * in + i] += w[i] * go;
        }
      }
    } else if (const auto* add = std::get_if<ResidualAdd>(&layer)) {
      grad_in = g;
      auto& src = grad_out[add->source];
      for (std::size_t i = 0; i < src.size(); ++i) src[i] += g[i];
    }

    if (idx > 0) {
      auto& prev = grad_out[idx - 1];
      for (std::size_t i = 0; i < prev.size(); ++i) prev[i] += grad_in[i];
    }
  }

  result.gradient = Tensor(batch.shape());
  for (std::size_t i = 0; i < grad_in.size(); ++i) {
    result.gradient[i] = static_cast<float>(grad_in[i]);
  }
  if (!all_finite(result.gradient.data()) || !std::isfinite(result.loss)) {
    throw Error(ErrorCode::kNumericFailure, "non-finite input gradient");
  }
  return result;
}

}  // namespace hwq
