#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lrc/pipeline.hpp"
#include "lrc/store.hpp"
#include "lrc/tensor.hpp"

namespace lrc {

/// Single-image activation map laid out [C, H, W].
struct FeatureMap {
  std::int64_t channels = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<float> data;

  FeatureMap() = default;
  FeatureMap(std::int64_t c, std::int64_t h, std::int64_t w);
  FeatureMap(std::int64_t c, std::int64_t h, std::int64_t w, std::vector<float> values);

  float at(std::int64_t c, std::int64_t y, std::int64_t x) const {
    return data[static_cast<std::size_t>((c * height + y) * width + x)];
  }
};

// C[M×N] = A[M×K] · B[K×N], all row-major. Shared by the dense and
// factored paths so timing differences come from shape alone.
void gemm(std::int64_t m, std::int64_t n, std::int64_t k, std::span<const float> a,
          std::span<const float> b, std::span<float> c);

std::int64_t conv_output_dim(std::int64_t in, std::int64_t kernel, std::int64_t stride,
                             std::int64_t pad);

// Columns are output positions: result is [I·Kh·Kw, P] row-major.
std::vector<float> im2col(const FeatureMap& x, std::int64_t kh, std::int64_t kw,
                          std::int64_t stride, std::int64_t pad);

FeatureMap conv2d_dense(const FeatureMap& x, const Tensor& w, std::span<const float> bias,
                        std::int64_t stride, std::int64_t pad);
FeatureMap conv2d_factored(const FeatureMap& x, const FactorizedConv& f,
                           std::span<const float> bias, std::int64_t stride, std::int64_t pad);

FeatureMap leaky_relu(FeatureMap x, float alpha);
FeatureMap maxpool(const FeatureMap& x, std::int64_t size, std::int64_t stride);

enum class LayerKind { ConvDense, ConvFactored, LeakyRelu, MaxPool };

const char* to_string(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::ConvDense;
  std::string weight;               // conv kinds; factored uses the base name
  std::optional<std::string> bias;  // conv kinds
  std::int64_t stride = 1;
  std::int64_t pad = 0;
  std::int64_t pool_size = 2;
  std::int64_t pool_stride = 2;
  float alpha = 0.1f;
};

std::vector<LayerSpec> parse_network(const std::string& json_text);

FeatureMap forward(std::span<const LayerSpec> layers, const WeightStore& store,
                   const FeatureMap& x);

// Multiply-add model, counted as 2 flops each.
std::int64_t dense_conv_flops(std::int64_t positions, std::int64_t ik2, std::int64_t out_channels);
std::int64_t factored_conv_flops(std::int64_t positions, std::int64_t ik2, std::int64_t rank,
                                 std::int64_t out_channels, bool diag_folded);

struct LayerFlops {
  std::size_t index = 0;
  LayerKind kind = LayerKind::ConvDense;
  std::int64_t positions = 0;
  std::int64_t ik2 = 0;
  std::int64_t out_channels = 0;
  std::int64_t rank = 0;  // 0 for dense
  std::int64_t flops = 0;
  std::int64_t dense_equivalent_flops = 0;
};

struct BenchResult {
  int runs = 0;
  int warmup = 0;
  std::vector<double> seconds;
  double median = 0.0;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  double fps = 0.0;
  std::int64_t flops_estimate = 0;
  bool diag_folded = true;
  std::vector<LayerFlops> layers;
};

// Analytic conv cost of a network for an input shape, without running it.
std::vector<LayerFlops> estimate_flops(std::span<const LayerSpec> layers, const WeightStore& store,
                                       std::int64_t c, std::int64_t h, std::int64_t w);

BenchResult benchmark(std::span<const LayerSpec> layers, const WeightStore& store,
                      std::int64_t c, std::int64_t h, std::int64_t w, int runs, int warmup);

std::string bench_result_json(const BenchResult& result);

}  // namespace lrc
