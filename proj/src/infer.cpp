#include "lrc/infer.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>

#include <json.hpp>

#include "lrc/error.hpp"

namespace lrc {

FeatureMap::FeatureMap(std::int64_t c, std::int64_t h, std::int64_t w)
    : channels(c), height(h), width(w), data(static_cast<std::size_t>(c * h * w), 0.0f) {
  if (c < 1 || h < 1 || w < 1) throw Error(ErrorKind::ShapeMismatch, "feature map dimensions must be >= 1");
}

FeatureMap::FeatureMap(std::int64_t c, std::int64_t h, std::int64_t w, std::vector<float> values)
    : channels(c), height(h), width(w), data(std::move(values)) {
  if (c < 1 || h < 1 || w < 1) throw Error(ErrorKind::ShapeMismatch, "feature map dimensions must be >= 1");
  if (static_cast<std::int64_t>(data.size()) != c * h * w)
    throw Error(ErrorKind::ShapeMismatch, "feature map data length does not match C*H*W");
}

void gemm(std::int64_t m, std::int64_t n, std::int64_t k, std::span<const float> a,
          std::span<const float> b, std::span<float> c) {
  constexpr std::int64_t kColBlock = 256;
  std::fill(c.begin(), c.end(), 0.0f);
  const float* pa = a.data();
  const float* pb = b.data();
  float* pc = c.data();
  for (std::int64_t j0 = 0; j0 < n; j0 += kColBlock) {
    const std::int64_t j1 = std::min(n, j0 + kColBlock);
    for (std::int64_t i = 0; i < m; ++i) {
      float* __restrict crow = pc + i * n;
      for (std::int64_t p = 0; p < k; ++p) {
        const float av = pa[i * k + p];
        const float* __restrict brow = pb + p * n;
        for (std::int64_t j = j0; j < j1; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

std::int64_t conv_output_dim(std::int64_t in, std::int64_t kernel, std::int64_t stride, std::int64_t pad) {
  if (stride < 1 || pad < 0) throw Error(ErrorKind::InvalidArgument, "stride must be >= 1 and pad >= 0");
  const std::int64_t span = in + 2 * pad - kernel;
  if (span < 0) throw Error(ErrorKind::ShapeMismatch, "kernel larger than padded input");
  return span / stride + 1;
}

std::vector<float> im2col(const FeatureMap& x, std::int64_t kh, std::int64_t kw, std::int64_t stride,
                          std::int64_t pad) {
  const auto oh = conv_output_dim(x.height, kh, stride, pad);
  const auto ow = conv_output_dim(x.width, kw, stride, pad);
  const auto positions = oh * ow;
  std::vector<float> cols(static_cast<std::size_t>(x.channels * kh * kw * positions), 0.0f);
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < x.channels; ++c) {
    for (std::int64_t dy = 0; dy < kh; ++dy) {
      for (std::int64_t dx = 0; dx < kw; ++dx, ++row) {
        float* out = cols.data() + row * positions;
        for (std::int64_t oy = 0; oy < oh; ++oy) {
          const std::int64_t iy = oy * stride + dy - pad;
          if (iy < 0 || iy >= x.height) continue;
          for (std::int64_t ox = 0; ox < ow; ++ox) {
            const std::int64_t ix = ox * stride + dx - pad;
            if (ix < 0 || ix >= x.width) continue;
            out[oy * ow + ox] = x.at(c, iy, ix);
          }
        }
      }
    }
  }
  return cols;
}

namespace {

void add_bias(FeatureMap& y, std::span<const float> bias) {
  if (bias.empty()) return;
  if (static_cast<std::int64_t>(bias.size()) != y.channels)
    throw Error(ErrorKind::ShapeMismatch, "bias length " + std::to_string(bias.size()) + " != output channels " +
                                              std::to_string(y.channels));
  const auto plane = y.height * y.width;
  for (std::int64_t c = 0; c < y.channels; ++c)
    for (std::int64_t i = 0; i < plane; ++i) y.data[static_cast<std::size_t>(c * plane + i)] += bias[static_cast<std::size_t>(c)];
}

void check_channels(const FeatureMap& x, std::int64_t expected) {
  if (x.channels != expected)
    throw Error(ErrorKind::ShapeMismatch, "input has " + std::to_string(x.channels) + " channels, kernel expects " +
                                              std::to_string(expected));
}

}  // namespace

FeatureMap conv2d_dense(const FeatureMap& x, const Tensor& w, std::span<const float> bias, std::int64_t stride,
                        std::int64_t pad) {
  if (w.rank() != 4) throw Error(ErrorKind::ShapeMismatch, "conv kernel must be rank 4");
  const auto& s = w.shape();
  check_channels(x, s[1]);
  const auto oh = conv_output_dim(x.height, s[2], stride, pad);
  const auto ow = conv_output_dim(x.width, s[3], stride, pad);
  const auto cols = im2col(x, s[2], s[3], stride, pad);
  FeatureMap y(s[0], oh, ow);
  gemm(s[0], oh * ow, s[1] * s[2] * s[3], w.data(), cols, y.data);
  add_bias(y, bias);
  return y;
}

FeatureMap conv2d_factored(const FeatureMap& x, const FactorizedConv& f, std::span<const float> bias,
                           std::int64_t stride, std::int64_t pad) {
  if (f.mode != ReshapeMode::Table1)
    throw Error(ErrorKind::InvalidArgument, "factored execution needs the table1 reshape");
  const auto& s = f.orig_shape;
  if (s.size() != 4) throw Error(ErrorKind::ShapeMismatch, "factored conv needs a rank-4 original shape");
  const auto ik2 = s[1] * s[2] * s[3];
  const auto r = f.rank();
  if (f.u.rows() != ik2 || f.v.rows() != s[0] || f.u.cols() != r || f.v.cols() != r)
    throw Error(ErrorKind::ShapeMismatch, "factor shapes inconsistent with " + shape_to_string(s));
  check_channels(x, s[1]);
  const auto oh = conv_output_dim(x.height, s[2], stride, pad);
  const auto ow = conv_output_dim(x.width, s[3], stride, pad);
  const auto positions = oh * ow;

  // Uᵀ [R, IK²] and diag(s) folded into V: [O, R].
  std::vector<float> ut(static_cast<std::size_t>(r * ik2));
  for (std::int64_t i = 0; i < ik2; ++i)
    for (std::int64_t j = 0; j < r; ++j) ut[static_cast<std::size_t>(j * ik2 + i)] = f.u(i, j);
  std::vector<float> vs(static_cast<std::size_t>(s[0] * r));
  for (std::int64_t o = 0; o < s[0]; ++o)
    for (std::int64_t j = 0; j < r; ++j) vs[static_cast<std::size_t>(o * r + j)] = f.v(o, j) * f.s[static_cast<std::size_t>(j)];

  const auto cols = im2col(x, s[2], s[3], stride, pad);
  std::vector<float> mid(static_cast<std::size_t>(r * positions));
  gemm(r, positions, ik2, ut, cols, mid);
  FeatureMap y(s[0], oh, ow);
  gemm(s[0], positions, r, vs, mid, y.data);
  add_bias(y, bias);
  return y;
}

FeatureMap leaky_relu(FeatureMap x, float alpha) {
  for (auto& v : x.data)
    if (v < 0.0f) v *= alpha;
  return x;
}

FeatureMap maxpool(const FeatureMap& x, std::int64_t size, std::int64_t stride) {
  if (size < 1 || stride < 1) throw Error(ErrorKind::InvalidArgument, "pool size and stride must be >= 1");
  const auto oh = conv_output_dim(x.height, size, stride, 0);
  const auto ow = conv_output_dim(x.width, size, stride, 0);
  FeatureMap y(x.channels, oh, ow);
  for (std::int64_t c = 0; c < x.channels; ++c)
    for (std::int64_t oy = 0; oy < oh; ++oy)
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        float best = x.at(c, oy * stride, ox * stride);
        for (std::int64_t dy = 0; dy < size; ++dy)
          for (std::int64_t dx = 0; dx < size; ++dx) best = std::max(best, x.at(c, oy * stride + dy, ox * stride + dx));
        y.data[static_cast<std::size_t>((c * oh + oy) * ow + ox)] = best;
      }
  return y;
}

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::ConvDense: return "conv-dense";
    case LayerKind::ConvFactored: return "conv-factored";
    case LayerKind::LeakyRelu: return "leaky-relu";
    case LayerKind::MaxPool: return "maxpool";
  }
  return "unknown";
}

std::vector<LayerSpec> parse_network(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::ParseError, std::string("invalid network spec: ") + e.what());
  }
  const nlohmann::json* list = &j;
  if (j.is_object() && j.contains("layers")) list = &j["layers"];
  if (!list->is_array()) throw Error(ErrorKind::ParseError, "network spec must be a list of layers");

  std::vector<LayerSpec> layers;
  std::size_t index = 0;
  for (const auto& item : *list) {
    const std::string where = "network layer " + std::to_string(index);
    try {
      LayerSpec spec;
      const auto kind = item.at("kind").get<std::string>();
      if (kind == "conv-dense" || kind == "conv-factored") {
        spec.kind = kind == "conv-dense" ? LayerKind::ConvDense : LayerKind::ConvFactored;
        spec.weight = item.at("weight").get<std::string>();
        if (item.contains("bias") && !item["bias"].is_null()) spec.bias = item["bias"].get<std::string>();
        spec.stride = item.value("stride", std::int64_t{1});
        spec.pad = item.value("pad", std::int64_t{0});
        if (spec.stride < 1 || spec.pad < 0)
          throw Error(ErrorKind::ParseError, where + ": stride must be >= 1 and pad >= 0");
      } else if (kind == "leaky-relu") {
        spec.kind = LayerKind::LeakyRelu;
        spec.alpha = item.value("alpha", 0.1f);
        if (!(spec.alpha > 0.0f && spec.alpha <= 1.0f))
          throw Error(ErrorKind::ParseError, where + ": alpha must be in (0, 1]");
      } else if (kind == "maxpool") {
        spec.kind = LayerKind::MaxPool;
        spec.pool_size = item.value("size", std::int64_t{2});
        spec.pool_stride = item.value("stride", spec.pool_size);
        if (spec.pool_size < 1 || spec.pool_stride < 1)
          throw Error(ErrorKind::ParseError, where + ": pool size and stride must be >= 1");
      } else {
        throw Error(ErrorKind::ParseError, where + ": unknown kind \"" + kind + "\"");
      }
      layers.push_back(std::move(spec));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::ParseError, where + ": " + e.what());
    }
    ++index;
  }
  return layers;
}

namespace {

const Tensor& dense_weight(const WeightStore& store, const LayerSpec& spec) {
  const auto* e = store.find(spec.weight);
  if (!e) throw Error(ErrorKind::MissingWeight, "missing weight \"" + spec.weight + "\"");
  if (e->tensor.rank() != 4) throw Error(ErrorKind::ShapeMismatch, "weight \"" + spec.weight + "\" is not rank 4");
  return e->tensor;
}

FactorizedConv factored_weight(const WeightStore& store, const LayerSpec& spec) {
  auto f = get_factored(store, spec.weight);
  if (!f) throw Error(ErrorKind::MissingWeight, "missing factored weight \"" + spec.weight + ".{u,s,v}\"");
  return std::move(*f);
}

std::span<const float> bias_of(const WeightStore& store, const LayerSpec& spec) {
  if (!spec.bias) return {};
  const auto* e = store.find(*spec.bias);
  if (!e) throw Error(ErrorKind::MissingWeight, "missing bias \"" + *spec.bias + "\"");
  return e->tensor.data();
}

Error at_layer(const Error& e, std::size_t index, LayerKind kind) {
  return Error(e.kind(), "layer " + std::to_string(index) + " (" + to_string(kind) + "): " + e.what());
}

}  // namespace

FeatureMap forward(std::span<const LayerSpec> layers, const WeightStore& store, const FeatureMap& x) {
  FeatureMap cur = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& spec = layers[i];
    try {
      switch (spec.kind) {
        case LayerKind::ConvDense:
          cur = conv2d_dense(cur, dense_weight(store, spec), bias_of(store, spec), spec.stride, spec.pad);
          break;
        case LayerKind::ConvFactored:
          cur = conv2d_factored(cur, factored_weight(store, spec), bias_of(store, spec), spec.stride, spec.pad);
          break;
        case LayerKind::LeakyRelu:
          cur = leaky_relu(std::move(cur), spec.alpha);
          break;
        case LayerKind::MaxPool:
          cur = maxpool(cur, spec.pool_size, spec.pool_stride);
          break;
      }
    } catch (const Error& e) {
      throw at_layer(e, i, spec.kind);
    }
  }
  return cur;
}

std::int64_t dense_conv_flops(std::int64_t positions, std::int64_t ik2, std::int64_t out_channels) {
  return 2 * positions * ik2 * out_channels;
}

std::int64_t factored_conv_flops(std::int64_t positions, std::int64_t ik2, std::int64_t rank,
                                 std::int64_t out_channels, bool diag_folded) {
  return 2 * positions * (ik2 * rank + rank * out_channels) + (diag_folded ? 0 : positions * rank);
}

std::vector<LayerFlops> estimate_flops(std::span<const LayerSpec> layers, const WeightStore& store, std::int64_t c,
                                       std::int64_t h, std::int64_t w) {
  std::vector<LayerFlops> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& spec = layers[i];
    try {
      if (spec.kind == LayerKind::LeakyRelu) continue;
      if (spec.kind == LayerKind::MaxPool) {
        h = conv_output_dim(h, spec.pool_size, spec.pool_stride, 0);
        w = conv_output_dim(w, spec.pool_size, spec.pool_stride, 0);
        continue;
      }
      Shape shape;
      std::int64_t rank = 0;
      if (spec.kind == LayerKind::ConvDense) {
        shape = dense_weight(store, spec).shape();
      } else {
        auto f = factored_weight(store, spec);
        shape = f.orig_shape;
        rank = f.rank();
      }
      if (shape[1] != c)
        throw Error(ErrorKind::ShapeMismatch, "input has " + std::to_string(c) + " channels, kernel expects " +
                                                  std::to_string(shape[1]));
      h = conv_output_dim(h, shape[2], spec.stride, spec.pad);
      w = conv_output_dim(w, shape[3], spec.stride, spec.pad);
      c = shape[0];
      LayerFlops lf;
      lf.index = i;
      lf.kind = spec.kind;
      lf.positions = h * w;
      lf.ik2 = shape[1] * shape[2] * shape[3];
      lf.out_channels = shape[0];
      lf.rank = rank;
      lf.dense_equivalent_flops = dense_conv_flops(lf.positions, lf.ik2, lf.out_channels);
      lf.flops = spec.kind == LayerKind::ConvDense
                     ? lf.dense_equivalent_flops
                     : factored_conv_flops(lf.positions, lf.ik2, rank, lf.out_channels, true);
      out.push_back(lf);
    } catch (const Error& e) {
      throw at_layer(e, i, spec.kind);
    }
  }
  return out;
}

BenchResult benchmark(std::span<const LayerSpec> layers, const WeightStore& store, std::int64_t c, std::int64_t h,
                      std::int64_t w, int runs, int warmup) {
  if (runs < 3) throw Error(ErrorKind::InvalidArgument, "benchmark needs at least 3 runs");
  if (warmup < 1) throw Error(ErrorKind::InvalidArgument, "benchmark needs at least 1 warmup run");

  BenchResult result;
  result.runs = runs;
  result.warmup = warmup;
  result.layers = estimate_flops(layers, store, c, h, w);
  for (const auto& lf : result.layers) result.flops_estimate += lf.flops;

  FeatureMap input(c, h, w);
  std::mt19937 rng(42);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  for (auto& v : input.data) v = dist(rng);

  for (int i = 0; i < warmup; ++i) (void)forward(layers, store, input);
  for (int i = 0; i < runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto y = forward(layers, store, input);
    const auto t1 = std::chrono::steady_clock::now();
    result.seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
  }

  auto sorted = result.seconds;
  std::sort(sorted.begin(), sorted.end());
  const auto n = sorted.size();
  result.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  result.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
  result.min = sorted.front();
  result.max = sorted.back();
  // Clock resolution can report zero for trivial nets.
  result.fps = 1.0 / std::max(result.median, 1e-9);
  return result;
}

std::string bench_result_json(const BenchResult& r) {
  nlohmann::ordered_json j;
  j["runs"] = r.runs;
  j["warmup"] = r.warmup;
  j["seconds"] = r.seconds;
  j["median_s"] = r.median;
  j["mean_s"] = r.mean;
  j["min_s"] = r.min;
  j["max_s"] = r.max;
  j["fps"] = r.fps;
  j["flops_estimate"] = r.flops_estimate;
  std::int64_t dense_equiv = 0;
  for (const auto& lf : r.layers) dense_equiv += lf.dense_equivalent_flops;
  j["dense_equivalent_flops"] = dense_equiv;
  j["diag_folded"] = r.diag_folded;
  j["layers"] = nlohmann::ordered_json::array();
  for (const auto& lf : r.layers) {
    nlohmann::ordered_json l;
    l["index"] = lf.index;
    l["kind"] = to_string(lf.kind);
    l["positions"] = lf.positions;
    l["ik2"] = lf.ik2;
    l["out_channels"] = lf.out_channels;
    if (lf.kind == LayerKind::ConvFactored) l["rank"] = lf.rank;
    l["flops"] = lf.flops;
    l["dense_equivalent_flops"] = lf.dense_equivalent_flops;
    j["layers"].push_back(std::move(l));
  }
  return j.dump(2);
}

}  // namespace lrc
