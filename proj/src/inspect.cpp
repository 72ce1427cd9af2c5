#include "lrc/inspect.hpp"

#include <cstdio>
#include <set>
#include <sstream>

#include <json.hpp>

#include "lrc/pipeline.hpp"

namespace lrc {

namespace {

std::string base_name(const std::string& factor_name) {
  return factor_name.substr(0, factor_name.size() - 2);
}

}  // namespace

StoreSummary summarize_store(const WeightStore& store) {
  StoreSummary s;
  std::set<std::string> seen;
  for (const auto& e : store.entries()) {
    s.stats.push_back(tensor_stats(e.tensor));
    s.total_params += s.stats.back().element_count;
    s.total_nonzero += s.stats.back().nonzero_count;
    if (e.role != Role::SvdFactor || e.name.size() < 3) continue;
    const auto base = base_name(e.name);
    if (!seen.insert(base).second) continue;
    const auto f = get_factored(store, base);
    if (!f) continue;
    const auto counts = param_counts(*f);
    s.factored.push_back({base, f->orig_shape, f->rank(), f->u.rows(), f->v.rows(), counts.orig,
                          f->u.rows() * f->rank() + f->rank() + f->v.rows() * f->rank()});
    s.factored_orig_params += counts.orig;
    s.factored_params += s.factored.back().factored_params;
  }
  s.serialized_bytes = serialize_store(store).size();
  return s;
}

std::string inspect_json(const WeightStore& store) {
  using ordered_json = nlohmann::ordered_json;
  const auto s = summarize_store(store);
  ordered_json j;
  j["entries"] = ordered_json::array();
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& e = store.entries()[i];
    const auto& st = s.stats[i];
    ordered_json row;
    row["name"] = e.name;
    row["shape"] = e.tensor.shape();
    row["dtype"] = "f32";
    row["role"] = to_string(e.role);
    row["bytes"] = st.element_count * 4;
    row["elements"] = st.element_count;
    row["nonzero"] = st.nonzero_count;
    row["nonzero_fraction"] = st.element_count ? static_cast<double>(st.nonzero_count) / st.element_count : 0.0;
    row["l1_sum"] = st.l1_sum;
    row["min"] = st.min;
    row["max"] = st.max;
    if (st.nonfinite_count) row["nonfinite"] = st.nonfinite_count;
    if (!e.attrs.empty()) row["attrs"] = e.attrs;
    j["entries"].push_back(std::move(row));
  }
  j["factored"] = ordered_json::array();
  for (const auto& g : s.factored) {
    j["factored"].push_back({{"name", g.name},
                             {"orig_shape", g.orig_shape},
                             {"rank", g.rank},
                             {"reshaped", {g.rows, g.cols}},
                             {"orig_params", g.orig_params},
                             {"factored_params", g.factored_params}});
  }
  j["metadata"] = store.metadata();
  j["totals"] = {{"tensors", store.size()},
                 {"parameters", s.total_params},
                 {"nonzero", s.total_nonzero},
                 {"factored_layers", s.factored.size()},
                 {"factored_orig_params", s.factored_orig_params},
                 {"factored_params", s.factored_params},
                 {"serialized_bytes", s.serialized_bytes}};
  return j.dump(2);
}

std::string inspect_text(const WeightStore& store) {
  const auto s = summarize_store(store);
  std::ostringstream os;
  char line[512];
  std::snprintf(line, sizeof line, "%-28s %-18s %-12s %10s %10s %12s\n", "name", "shape", "role", "elements",
                "nonzero%", "bytes");
  os << line;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& e = store.entries()[i];
    const auto& st = s.stats[i];
    const double pct = st.element_count ? 100.0 * static_cast<double>(st.nonzero_count) / st.element_count : 0.0;
    std::snprintf(line, sizeof line, "%-28s %-18s %-12s %10lld %9.2f%% %12lld%s\n", e.name.c_str(),
                  shape_to_string(e.tensor.shape()).c_str(), to_string(e.role),
                  static_cast<long long>(st.element_count), pct, static_cast<long long>(st.element_count * 4),
                  st.nonfinite_count ? "  (non-finite values)" : "");
    os << line;
  }
  if (!s.factored.empty()) {
    os << "\nfactored layers (.u/.s/.v)\n";
    std::snprintf(line, sizeof line, "%-28s %-18s %-12s %6s %10s %13s\n", "layer", "orig shape", "reshaped", "R",
                  "OIK^2", "R(IK^2+1+O)");
    os << line;
    for (const auto& g : s.factored) {
      const std::string reshaped = "[" + std::to_string(g.rows) + "," + std::to_string(g.cols) + "]";
      std::snprintf(line, sizeof line, "%-28s %-18s %-12s %6lld %10lld %13lld\n", g.name.c_str(),
                    shape_to_string(g.orig_shape).c_str(), reshaped.c_str(), static_cast<long long>(g.rank),
                    static_cast<long long>(g.orig_params), static_cast<long long>(g.factored_params));
      os << line;
    }
  }
  os << "\ntensors: " << store.size() << "\nparameters: " << s.total_params << "\nnonzero: " << s.total_nonzero
     << "\nserialized bytes: " << s.serialized_bytes << "\n";
  if (!store.metadata().empty()) {
    os << "metadata:\n";
    for (const auto& [k, v] : store.metadata()) os << "  " << k << " = " << v << "\n";
  }
  return os.str();
}

}  // namespace lrc
