#pragma once

#include <cstdint>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "lrc/store.hpp"
#include "lrc/tensor.hpp"

namespace lrc {

enum class PruneScope { PerTensor, Global };

const char* to_string(PruneScope scope);
PruneScope prune_scope_from_string(std::string_view s);

struct PruneRow {
  std::string name;
  std::int64_t elements = 0;
  std::int64_t zeroed = 0;
  // Largest magnitude that was pruned; 0 when nothing was pruned.
  double threshold = 0.0;
};

struct PruneReport {
  std::vector<PruneRow> tensors;
  std::int64_t total_elements = 0;
  std::int64_t total_zeroed = 0;
  double fraction = 0.0;
  PruneScope scope = PruneScope::PerTensor;
};

/// Which store entries an operation applies to. An entry is selected when its
/// role is in `roles` and, if set, `name_regex` matches somewhere in its name.
struct Selector {
  std::set<Role> roles{Role::ConvWeight};
  std::optional<std::string> name_regex;

  bool matches(const StoreEntry& entry) const;
};

// floor(fraction * n), the element count pruned out of n.
std::int64_t prune_count(double fraction, std::int64_t n);

std::pair<Tensor, PruneRow> prune_l1(const Tensor& t, double fraction);

std::pair<WeightStore, PruneReport> prune_store(const WeightStore& store, double fraction,
                                                PruneScope scope, const Selector& selector = {});

// Prunes the entries at the given store indices (in index order).
std::pair<WeightStore, PruneReport> prune_entries(const WeightStore& store, double fraction,
                                                  PruneScope scope,
                                                  const std::vector<std::size_t>& indices);

std::string prune_report_json(const PruneReport& report);

}  // namespace lrc
