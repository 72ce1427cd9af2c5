#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lrc/store.hpp"

namespace lrc {

struct FactoredGroup {
  std::string name;
  Shape orig_shape;
  std::int64_t rank = 0;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::int64_t orig_params = 0;      // O·I·K²
  std::int64_t factored_params = 0;  // elements stored in .u/.s/.v
};

struct StoreSummary {
  std::vector<TensorStats> stats;  // parallel to store entries
  std::vector<FactoredGroup> factored;
  std::int64_t total_params = 0;
  std::int64_t total_nonzero = 0;
  std::int64_t factored_orig_params = 0;
  std::int64_t factored_params = 0;
  std::uint64_t serialized_bytes = 0;
};

StoreSummary summarize_store(const WeightStore& store);

std::string inspect_json(const WeightStore& store);
std::string inspect_text(const WeightStore& store);

}  // namespace lrc
