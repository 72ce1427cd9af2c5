#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lrc/lowrank.hpp"
#include "lrc/prune.hpp"
#include "lrc/store.hpp"

namespace lrc {

/// SVD factors of one conv kernel. Under the table1 reshape u is [I·K², R],
/// s is [R] and v is [O, R].
struct FactorizedConv {
  Matrix u;
  std::vector<float> s;
  Matrix v;
  Shape orig_shape;  // [O, I, Kh, Kw]
  ReshapeMode mode = ReshapeMode::Table1;

  std::int64_t rank() const noexcept { return static_cast<std::int64_t>(s.size()); }
};

struct ParamCounts {
  std::int64_t orig = 0;
  std::int64_t factored = 0;
};

FactorizedConv compress_conv(const Tensor& w, const RankPolicy& policy,
                             ReshapeMode mode = ReshapeMode::Table1);
Tensor decompress_conv(const FactorizedConv& f);
ParamCounts param_counts(const FactorizedConv& f);

// Store layout of factored layers: "<name>.u", "<name>.s", "<name>.v".
void put_factored(WeightStore& store, const std::string& name, const FactorizedConv& f);
std::optional<FactorizedConv> get_factored(const WeightStore& store, const std::string& name);

struct PruneStage {
  double fraction = 0.3;
  PruneScope scope = PruneScope::PerTensor;
};

struct SvdStage {
  RankPolicy policy = FullRank{};
  ReshapeMode mode = ReshapeMode::Table1;
};

struct CompressionConfig {
  std::optional<PruneStage> prune;
  std::optional<SvdStage> svd;
  bool store_factored = true;
  Selector selector;
  std::int64_t min_elements = 512;
};

CompressionConfig parse_compression_config(const std::string& json_text);
std::string compression_config_json(const CompressionConfig& config);
std::string policy_to_string(const RankPolicy& policy);

struct LayerReport {
  std::string name;
  Shape shape;
  bool skipped = false;
  std::string skip_reason;
  std::int64_t orig_params = 0;
  // Filled when the prune stage ran on this layer.
  std::optional<PruneRow> prune;
  // Filled when the svd stage ran on this layer.
  std::optional<std::int64_t> rank;
  std::optional<std::int64_t> factored_params;
  std::optional<std::int64_t> svd_rows;
  std::optional<std::int64_t> svd_cols;
  std::optional<double> reconstruction_error;  // Frobenius, against the svd input
  std::optional<double> nonzero_fraction_after;
};

struct CompressionReport {
  std::string model_label;
  CompressionConfig config;
  std::vector<std::string> order;  // stages in application order
  std::vector<LayerReport> layers;
  std::int64_t total_orig_params = 0;      // over compressed layers
  std::int64_t total_factored_params = 0;  // over svd-factored layers
  std::int64_t total_zeroed = 0;
  std::int64_t params_before = 0;  // all elements in the input store
  std::int64_t params_after = 0;   // all elements in the output store
  std::uint64_t bytes_before = 0;
  std::uint64_t bytes_after = 0;
};

std::pair<WeightStore, CompressionReport> run_pipeline(const WeightStore& store,
                                                       const CompressionConfig& config);

std::string compression_report_json(const CompressionReport& report);
std::string compression_report_table(const CompressionReport& report);

// "Original", "Weight pruning", "SVD only" or "Weight pruning + SVD".
std::string model_label(const CompressionConfig& config);

}  // namespace lrc
