#include "lrc/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "lrc/error.hpp"

namespace lrc {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string join_shape(const Shape& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out;
}

Shape parse_shape_attr(const std::string& text) {
  Shape shape;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      shape.push_back(std::stoll(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw Error(ErrorKind::MalformedManifest, "invalid orig_shape attribute \"" + text + "\"");
    }
  }
  return shape;
}

Error with_layer(const Error& e, const std::string& layer) {
  return Error(e.kind(), "layer \"" + layer + "\": " + e.what());
}

[[noreturn]] void config_error(const std::string& detail) {
  throw Error(ErrorKind::ParseError, "invalid compression config: " + detail);
}

void check_keys(const nlohmann::json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) config_error("unknown key \"" + key + "\" in " + where);
  }
}

ordered_json policy_json(const RankPolicy& policy) {
  ordered_json j;
  if (const auto* f = std::get_if<FixedRank>(&policy)) {
    j["type"] = "fixed";
    j["k"] = f->k;
  } else if (const auto* e = std::get_if<EnergyRank>(&policy)) {
    j["type"] = "energy";
    j["fraction"] = e->fraction;
  } else {
    j["type"] = "full";
  }
  return j;
}

ordered_json config_to_json(const CompressionConfig& c) {
  ordered_json j;
  if (c.prune) j["prune"] = {{"fraction", c.prune->fraction}, {"scope", to_string(c.prune->scope)}};
  if (c.svd) {
    j["svd"]["policy"] = policy_json(c.svd->policy);
    j["svd"]["mode"] = to_string(c.svd->mode);
  }
  j["store_factored"] = c.store_factored;
  ordered_json roles = ordered_json::array();
  for (auto r : c.selector.roles) roles.push_back(to_string(r));
  j["selector"]["roles"] = roles;
  if (c.selector.name_regex) j["selector"]["name_regex"] = *c.selector.name_regex;
  j["min_elements"] = c.min_elements;
  return j;
}

double nonzero_fraction(const Tensor& t) {
  const auto st = tensor_stats(t);
  return st.element_count == 0 ? 0.0 : static_cast<double>(st.nonzero_count) / static_cast<double>(st.element_count);
}

std::int64_t total_elements(const WeightStore& store) {
  std::int64_t n = 0;
  for (const auto& e : store.entries()) n += e.tensor.numel();
  return n;
}

}  // namespace

FactorizedConv compress_conv(const Tensor& w, const RankPolicy& policy, ReshapeMode mode) {
  if (w.rank() != 4)
    throw Error(ErrorKind::ShapeMismatch, "compress_conv needs a rank-4 kernel, got " + shape_to_string(w.shape()));
  if (!w.all_finite()) throw Error(ErrorKind::NonFinite, "kernel contains NaN or Inf");
  auto f = truncated_svd(conv_to_matrix(w, mode), policy);
  return {std::move(f.u), std::move(f.s), std::move(f.v), w.shape(), mode};
}

namespace {

void check_factored(const FactorizedConv& f) {
  const auto [rows, cols] = reshape_for_svd(shape_numel(f.orig_shape), f.orig_shape, f.mode);
  const auto r = f.rank();
  if (r < 1) throw Error(ErrorKind::InvalidArgument, "factorized conv rank must be >= 1");
  if (f.u.rows() != rows || f.u.cols() != r || f.v.rows() != cols || f.v.cols() != r)
    throw Error(ErrorKind::ShapeMismatch, "factor shapes u " + std::to_string(f.u.rows()) + "x" +
                                              std::to_string(f.u.cols()) + ", v " + std::to_string(f.v.rows()) +
                                              "x" + std::to_string(f.v.cols()) + " inconsistent with " +
                                              shape_to_string(f.orig_shape) + " at rank " + std::to_string(r));
}

}  // namespace

Tensor decompress_conv(const FactorizedConv& f) {
  check_factored(f);
  SvdFactors factors{f.u, f.s, f.v};
  return matrix_to_conv(reconstruct(factors), f.orig_shape, f.mode);
}

ParamCounts param_counts(const FactorizedConv& f) {
  if (f.rank() < 1) throw Error(ErrorKind::InvalidArgument, "rank must be >= 1");
  const auto numel = shape_numel(f.orig_shape);
  const auto [rows, cols] = reshape_for_svd(numel, f.orig_shape, f.mode);
  return {numel, f.rank() * (rows + 1 + cols)};
}

void put_factored(WeightStore& store, const std::string& name, const FactorizedConv& f) {
  check_factored(f);
  const auto r = f.rank();
  auto attrs = [&](const char* which) {
    return std::map<std::string, std::string>{
        {"factor", which}, {"orig_shape", join_shape(f.orig_shape)}, {"reshape", to_string(f.mode)}};
  };
  store.add(name + ".u", Tensor({f.u.rows(), r}, {f.u.data().begin(), f.u.data().end()}), Role::SvdFactor, attrs("u"));
  store.add(name + ".s", Tensor({r}, f.s), Role::SvdFactor, attrs("s"));
  store.add(name + ".v", Tensor({f.v.rows(), r}, {f.v.data().begin(), f.v.data().end()}), Role::SvdFactor, attrs("v"));
}

std::optional<FactorizedConv> get_factored(const WeightStore& store, const std::string& name) {
  const auto* u = store.find(name + ".u");
  const auto* s = store.find(name + ".s");
  const auto* v = store.find(name + ".v");
  if (!u || !s || !v) return std::nullopt;
  for (const auto* e : {u, s, v})
    if (e->role != Role::SvdFactor || !e->attrs.contains("orig_shape"))
      throw Error(ErrorKind::MalformedManifest, "\"" + e->name + "\" is not an svd-factor entry");
  if (u->tensor.rank() != 2 || s->tensor.rank() != 1 || v->tensor.rank() != 2)
    throw Error(ErrorKind::ShapeMismatch, "factor tensors of \"" + name + "\" have wrong ranks");
  FactorizedConv f;
  f.orig_shape = parse_shape_attr(u->attrs.at("orig_shape"));
  auto mode = u->attrs.find("reshape");
  f.mode = mode == u->attrs.end() ? ReshapeMode::Table1 : reshape_mode_from_string(mode->second);
  const auto& us = u->tensor.shape();
  const auto& vs = v->tensor.shape();
  f.u = Matrix(us[0], us[1], {u->tensor.data().begin(), u->tensor.data().end()});
  f.s.assign(s->tensor.data().begin(), s->tensor.data().end());
  f.v = Matrix(vs[0], vs[1], {v->tensor.data().begin(), v->tensor.data().end()});
  check_factored(f);
  return f;
}

std::string policy_to_string(const RankPolicy& policy) {
  if (const auto* f = std::get_if<FixedRank>(&policy)) return "fixed(" + std::to_string(f->k) + ")";
  if (const auto* e = std::get_if<EnergyRank>(&policy)) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "energy(%g)", e->fraction);
    return buf;
  }
  return "full";
}

CompressionConfig parse_compression_config(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    config_error(e.what());
  }
  if (!j.is_object()) config_error("top level must be an object");
  check_keys(j, {"prune", "svd", "store_factored", "selector", "min_elements"}, "config");

  CompressionConfig c;
  try {
    if (j.contains("prune") && !j["prune"].is_null()) {
      const auto& p = j["prune"];
      check_keys(p, {"fraction", "scope"}, "prune");
      PruneStage stage;
      stage.fraction = p.value("fraction", 0.3);
      stage.scope = prune_scope_from_string(p.value("scope", std::string("per-tensor")));
      if (!(stage.fraction >= 0.0 && stage.fraction <= 1.0)) config_error("prune.fraction must be in [0, 1]");
      c.prune = stage;
    }
    if (j.contains("svd") && !j["svd"].is_null()) {
      const auto& s = j["svd"];
      check_keys(s, {"policy", "mode"}, "svd");
      SvdStage stage;
      stage.mode = reshape_mode_from_string(s.value("mode", std::string("table1")));
      if (s.contains("policy")) {
        const auto& p = s["policy"];
        check_keys(p, {"type", "k", "fraction"}, "svd.policy");
        const auto type = p.at("type").get<std::string>();
        if (type == "fixed") {
          const auto k = p.at("k").get<std::int64_t>();
          if (k < 1) config_error("svd.policy.k must be >= 1");
          stage.policy = FixedRank{k};
        } else if (type == "energy") {
          const auto f = p.at("fraction").get<double>();
          if (!(f > 0.0 && f <= 1.0)) config_error("svd.policy.fraction must be in (0, 1]");
          stage.policy = EnergyRank{f};
        } else if (type == "full") {
          stage.policy = FullRank{};
        } else {
          config_error("unknown svd.policy.type \"" + type + "\"");
        }
      }
      c.svd = stage;
    }
    c.store_factored = j.value("store_factored", c.svd.has_value());
    if (j.contains("selector")) {
      const auto& s = j["selector"];
      if (s.is_string()) {
        c.selector.roles = {role_from_string(s.get<std::string>())};
      } else {
        check_keys(s, {"roles", "name_regex"}, "selector");
        if (s.contains("roles")) {
          c.selector.roles.clear();
          for (const auto& r : s["roles"]) c.selector.roles.insert(role_from_string(r.get<std::string>()));
        }
        if (s.contains("name_regex")) {
          c.selector.name_regex = s["name_regex"].get<std::string>();
          try {
            std::regex check(*c.selector.name_regex);
          } catch (const std::regex_error&) {
            config_error("invalid selector.name_regex");
          }
        }
      }
    }
    c.min_elements = j.value("min_elements", c.min_elements);
  } catch (const nlohmann::json::exception& e) {
    config_error(e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ParseError) throw;
    config_error(e.what());
  }
  if (c.min_elements < 0) config_error("min_elements must be >= 0");
  if (!c.prune && !c.svd) config_error("at least one of \"prune\" or \"svd\" is required");
  if (!c.svd) c.store_factored = false;
  return c;
}

std::string compression_config_json(const CompressionConfig& config) { return config_to_json(config).dump(2); }

std::string model_label(const CompressionConfig& config) {
  if (config.prune && config.svd) return "Weight pruning + SVD";
  if (config.svd) return "SVD only";
  if (config.prune) return "Weight pruning";
  return "Original";
}

std::pair<WeightStore, CompressionReport> run_pipeline(const WeightStore& store,
                                                       const CompressionConfig& config) {
  if (!config.prune && !config.svd)
    throw Error(ErrorKind::InvalidArgument, "compression config needs a prune or svd stage");

  CompressionReport report;
  report.config = config;
  report.model_label = model_label(config);
  if (config.prune) report.order.push_back("prune");
  if (config.svd) report.order.push_back("svd");

  std::vector<std::size_t> selected;
  std::vector<std::size_t> layer_slot(store.size(), SIZE_MAX);
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& e = store.entries()[i];
    const bool chosen = config.selector.matches(e);
    if (!chosen && e.role != Role::ConvWeight) continue;
    LayerReport layer;
    layer.name = e.name;
    layer.shape = e.tensor.shape();
    layer.orig_params = e.tensor.numel();
    if (!chosen) {
      layer.skipped = true;
      layer.skip_reason = "not selected";
    } else if (e.tensor.numel() < config.min_elements) {
      layer.skipped = true;
      layer.skip_reason = "below min_elements";
    } else {
      layer_slot[i] = report.layers.size();
      selected.push_back(i);
    }
    report.layers.push_back(std::move(layer));
  }
  if (selected.empty()) throw Error(ErrorKind::EmptySelection, "empty selection: no layer eligible for compression");

  WeightStore work = store;
  if (config.prune) {
    auto [pruned, prune_report] = prune_entries(store, config.prune->fraction, config.prune->scope, selected);
    work = std::move(pruned);
    for (std::size_t k = 0; k < selected.size(); ++k) {
      auto& layer = report.layers[layer_slot[selected[k]]];
      layer.prune = prune_report.tensors[k];
      report.total_zeroed += prune_report.tensors[k].zeroed;
    }
  }

  std::vector<std::optional<FactorizedConv>> factored(store.size());
  if (config.svd) {
    for (auto i : selected) {
      auto& entry = work.find(store.entries()[i].name)->tensor;
      auto& layer = report.layers[layer_slot[i]];
      try {
        auto f = compress_conv(entry, config.svd->policy, config.svd->mode);
        const Tensor rebuilt = decompress_conv(f);
        double err = 0.0;
        for (std::int64_t n = 0; n < entry.numel(); ++n) {
          const double d = static_cast<double>(entry[static_cast<std::size_t>(n)]) - rebuilt[static_cast<std::size_t>(n)];
          err += d * d;
        }
        const auto counts = param_counts(f);
        layer.rank = f.rank();
        layer.factored_params = counts.factored;
        layer.svd_rows = f.u.rows();
        layer.svd_cols = f.v.rows();
        layer.reconstruction_error = std::sqrt(err);
        layer.nonzero_fraction_after = nonzero_fraction(rebuilt);
        report.total_factored_params += counts.factored;
        if (config.store_factored) factored[i] = std::move(f);
        else entry = rebuilt;
      } catch (const Error& e) {
        throw with_layer(e, store.entries()[i].name);
      }
    }
  }
  for (auto i : selected) report.total_orig_params += store.entries()[i].tensor.numel();

  WeightStore out;
  out.metadata() = store.metadata();
  out.metadata()["compression.model"] = report.model_label;
  out.metadata()["compression.config"] = config_to_json(config).dump();
  for (std::size_t i = 0; i < work.size(); ++i) {
    const auto& e = work.entries()[i];
    if (factored[i]) put_factored(out, e.name, *factored[i]);
    else out.add(e.name, e.tensor, e.role, e.attrs);
  }

  report.params_before = total_elements(store);
  report.params_after = total_elements(out);
  report.bytes_before = serialize_store(store).size();
  report.bytes_after = serialize_store(out).size();
  return {std::move(out), std::move(report)};
}

std::string compression_report_json(const CompressionReport& report) {
  ordered_json j;
  j["model"] = report.model_label;
  j["order"] = report.order;
  j["config"] = config_to_json(report.config);
  j["weight_size"] = {{"measure", "serialized .wstore bytes"},
                      {"bytes_before", report.bytes_before},
                      {"bytes_after", report.bytes_after},
                      {"mb_before", static_cast<double>(report.bytes_before) / 1e6},
                      {"mb_after", static_cast<double>(report.bytes_after) / 1e6}};
  std::int64_t compressed = 0;
  for (const auto& l : report.layers) compressed += l.skipped ? 0 : 1;
  j["totals"] = {{"layers_compressed", compressed},
                 {"layers_skipped", static_cast<std::int64_t>(report.layers.size()) - compressed},
                 {"orig_params", report.total_orig_params},
                 {"factored_params", report.total_factored_params},
                 {"zeroed", report.total_zeroed},
                 {"params_before", report.params_before},
                 {"params_after", report.params_after}};
  j["layers"] = ordered_json::array();
  for (const auto& l : report.layers) {
    ordered_json r;
    r["name"] = l.name;
    r["shape"] = l.shape;
    r["status"] = l.skipped ? "skipped" : "compressed";
    if (l.skipped) r["skip_reason"] = l.skip_reason;
    r["orig_params"] = l.orig_params;
    if (l.prune) r["prune"] = {{"elements", l.prune->elements}, {"zeroed", l.prune->zeroed}, {"threshold", l.prune->threshold}};
    if (l.rank) {
      r["svd"] = {{"rank", *l.rank},
                  {"reshaped", {*l.svd_rows, *l.svd_cols}},
                  {"factored_params", *l.factored_params},
                  {"reconstruction_error", *l.reconstruction_error},
                  {"nonzero_fraction_after", *l.nonzero_fraction_after}};
    }
    j["layers"].push_back(std::move(r));
  }
  return j.dump(2);
}

std::string compression_report_table(const CompressionReport& report) {
  std::ostringstream os;
  char line[512];
  std::snprintf(line, sizeof line, "%-22s %-17s %-7s %s\n", "Model", "Frame Rate (FPS)", "mAP@50", "Weight Size (MB)");
  os << line;
  std::snprintf(line, sizeof line, "%-22s %-17s %-7s %.6f\n", "Original", "", "",
                static_cast<double>(report.bytes_before) / 1e6);
  os << line;
  std::snprintf(line, sizeof line, "%-22s %-17s %-7s %.6f\n", report.model_label.c_str(), "", "",
                static_cast<double>(report.bytes_after) / 1e6);
  os << line << "\n";

  std::snprintf(line, sizeof line, "%-24s %-16s %-12s %6s %10s %13s %9s %12s\n", "Layer", "Shape [O,I,K,K]",
                "Reshaped", "R", "OIK^2", "R(IK^2+1+O)", "zeroed", "recon_err");
  os << line;
  for (const auto& l : report.layers) {
    const std::string reshaped =
        l.svd_rows ? "[" + std::to_string(*l.svd_rows) + "," + std::to_string(*l.svd_cols) + "]" : "-";
    const std::string rank = l.rank ? std::to_string(*l.rank) : "-";
    const std::string fact = l.factored_params ? std::to_string(*l.factored_params) : "-";
    const std::string zeroed = l.prune ? std::to_string(l.prune->zeroed) : "-";
    char err[32] = "-";
    if (l.reconstruction_error) std::snprintf(err, sizeof err, "%.6g", *l.reconstruction_error);
    std::string name = l.name;
    if (l.skipped) name += " (skipped)";
    std::snprintf(line, sizeof line, "%-24s %-16s %-12s %6s %10lld %13s %9s %12s\n", name.c_str(),
                  shape_to_string(l.shape).c_str(), reshaped.c_str(), rank.c_str(),
                  static_cast<long long>(l.orig_params), fact.c_str(), zeroed.c_str(), err);
    os << line;
  }
  std::snprintf(line, sizeof line, "%-24s %-16s %-12s %6s %10lld %13lld %9lld\n", "total (compressed)", "", "", "",
                static_cast<long long>(report.total_orig_params), static_cast<long long>(report.total_factored_params),
                static_cast<long long>(report.total_zeroed));
  os << line;
  return os.str();
}

}  // namespace lrc
