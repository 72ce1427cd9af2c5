#include "lrc/prune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "lrc/error.hpp"

namespace lrc {

namespace {

void check_fraction(double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw Error(ErrorKind::InvalidArgument, "prune fraction must be in [0, 1]");
}

void check_finite(const Tensor& t, const std::string& name) {
  if (!t.all_finite())
    throw Error(ErrorKind::NonFinite, "cannot prune \"" + name + "\": tensor contains NaN or Inf");
}

// Position of one element across the pruned tensors; ordering is by
// magnitude, then tensor order, then flat index.
struct Candidate {
  float magnitude;
  std::uint32_t tensor;
  std::int64_t index;

  bool operator<(const Candidate& o) const {
    if (magnitude != o.magnitude) return magnitude < o.magnitude;
    if (tensor != o.tensor) return tensor < o.tensor;
    return index < o.index;
  }
};

// Selects the `count` smallest candidates and moves them to the front.
void select_smallest(std::vector<Candidate>& all, std::int64_t count) {
  if (count <= 0 || count >= static_cast<std::int64_t>(all.size())) return;
  std::nth_element(all.begin(), all.begin() + count, all.end());
}

}  // namespace

const char* to_string(PruneScope scope) {
  return scope == PruneScope::PerTensor ? "per-tensor" : "global";
}

PruneScope prune_scope_from_string(std::string_view s) {
  if (s == "per-tensor") return PruneScope::PerTensor;
  if (s == "global") return PruneScope::Global;
  throw Error(ErrorKind::InvalidArgument, "unknown prune scope \"" + std::string(s) + "\"");
}

bool Selector::matches(const StoreEntry& entry) const {
  if (!roles.contains(entry.role)) return false;
  if (!name_regex) return true;
  return std::regex_search(entry.name, std::regex(*name_regex));
}

std::int64_t prune_count(double fraction, std::int64_t n) {
  check_fraction(fraction);
  return std::min<std::int64_t>(n, static_cast<std::int64_t>(std::floor(fraction * static_cast<double>(n))));
}

std::pair<Tensor, PruneRow> prune_l1(const Tensor& t, double fraction) {
  check_fraction(fraction);
  WeightStore single;
  single.add("tensor", t);
  auto [out, report] = prune_entries(single, fraction, PruneScope::PerTensor, {0});
  return {std::move(out.find("tensor")->tensor), report.tensors.front()};
}

std::pair<WeightStore, PruneReport> prune_entries(const WeightStore& store, double fraction,
                                                  PruneScope scope,
                                                  const std::vector<std::size_t>& indices) {
  check_fraction(fraction);
  if (indices.empty()) throw Error(ErrorKind::EmptySelection, "empty selection: no tensors to prune");
  for (auto i : indices) {
    if (i >= store.size()) throw Error(ErrorKind::InvalidArgument, "prune index out of range");
    check_finite(store.entries()[i].tensor, store.entries()[i].name);
  }

  WeightStore out = store;
  PruneReport report;
  report.fraction = fraction;
  report.scope = scope;

  auto candidates_of = [&](std::uint32_t slot) {
    const auto data = store.entries()[indices[slot]].tensor.data();
    std::vector<Candidate> c(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
      c[i] = {std::fabs(data[i]), slot, static_cast<std::int64_t>(i)};
    return c;
  };
  std::vector<Tensor*> targets;
  for (auto i : indices) targets.push_back(&out.find(store.entries()[i].name)->tensor);
  auto apply = [&](const std::vector<Candidate>& chosen, std::int64_t count) {
    for (std::int64_t i = 0; i < count; ++i) {
      const auto& c = chosen[static_cast<std::size_t>(i)];
      auto& row = report.tensors[c.tensor];
      (*targets[c.tensor])[static_cast<std::size_t>(c.index)] = 0.0f;
      ++row.zeroed;
      row.threshold = std::max(row.threshold, static_cast<double>(c.magnitude));
    }
  };

  for (auto i : indices) {
    const auto& e = store.entries()[i];
    report.tensors.push_back({e.name, e.tensor.numel(), 0, 0.0});
    report.total_elements += e.tensor.numel();
  }

  if (scope == PruneScope::PerTensor) {
    for (std::uint32_t slot = 0; slot < indices.size(); ++slot) {
      auto cands = candidates_of(slot);
      const auto count = prune_count(fraction, static_cast<std::int64_t>(cands.size()));
      select_smallest(cands, count);
      apply(cands, count);
    }
  } else {
    std::vector<Candidate> all;
    all.reserve(static_cast<std::size_t>(report.total_elements));
    for (std::uint32_t slot = 0; slot < indices.size(); ++slot) {
      auto cands = candidates_of(slot);
      all.insert(all.end(), cands.begin(), cands.end());
    }
    const auto count = prune_count(fraction, report.total_elements);
    select_smallest(all, count);
    apply(all, count);
  }
  for (const auto& row : report.tensors) report.total_zeroed += row.zeroed;
  return {std::move(out), std::move(report)};
}

std::pair<WeightStore, PruneReport> prune_store(const WeightStore& store, double fraction,
                                                PruneScope scope, const Selector& selector) {
  std::vector<std::size_t> indices;
  for (std::size_t i = 0; i < store.size(); ++i)
    if (selector.matches(store.entries()[i])) indices.push_back(i);
  if (indices.empty())
    throw Error(ErrorKind::EmptySelection, "empty selection: selector matched no tensors");
  return prune_entries(store, fraction, scope, indices);
}

std::string prune_report_json(const PruneReport& report) {
  nlohmann::ordered_json j;
  j["scope"] = to_string(report.scope);
  j["fraction"] = report.fraction;
  j["total_elements"] = report.total_elements;
  j["total_zeroed"] = report.total_zeroed;
  j["tensors"] = nlohmann::ordered_json::array();
  for (const auto& row : report.tensors) {
    nlohmann::ordered_json r;
    r["name"] = row.name;
    r["elements"] = row.elements;
    r["zeroed"] = row.zeroed;
    r["threshold"] = row.threshold;
    j["tensors"].push_back(std::move(r));
  }
  return j.dump(2);
}

}  // namespace lrc
