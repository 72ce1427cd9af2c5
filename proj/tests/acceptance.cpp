// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <sys/wait.h>

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include <json.hpp>

#include "lrc/error.hpp"
#include "lrc/eval.hpp"
#include "lrc/infer.hpp"
#include "lrc/pipeline.hpp"
#include "oracles.hpp"

using namespace lrc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double frob_diff(const Matrix& a, const Matrix& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - b.data()[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

FeatureMap random_map(std::mt19937& rng, std::int64_t c, std::int64_t h, std::int64_t w) {
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  FeatureMap x(c, h, w);
  for (auto& v : x.data) v = d(rng);
  return x;
}

double max_abs_diff(const FeatureMap& a, const FeatureMap& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::fabs(static_cast<double>(a.data[i]) - b.data[i]));
  return m;
}

double max_abs(const FeatureMap& a) {
  double m = 0.0;
  for (float v : a.data) m = std::max(m, std::fabs(static_cast<double>(v)));
  return m;
}

int run_cli(const std::string& args, std::string* out = nullptr) {
  const std::string cmd = std::string(LRC_CLI_PATH) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return -1;
  std::string text;
  char buf[4096];
  for (std::size_t n; (n = fread(buf, 1, sizeof buf, p)) > 0;) text.append(buf, n);
  const int status = pclose(p);
  if (out) *out = std::move(text);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 1. Truncation error equals the tail of the spectrum.
Outcome eckart_young() {
  std::mt19937 rng(101);
  std::uniform_int_distribution<std::int64_t> rows(2, 128), cols(2, 96);
  double worst = 0.0;
  int checks = 0;
  for (int t = 0; t < 200; ++t) {
    const auto a = oracle::random_matrix(rng, rows(rng), cols(rng));
    const auto full = full_svd(a);
    const std::int64_t mn = std::min(a.rows(), a.cols());
    for (std::int64_t k : {std::int64_t{1}, std::max<std::int64_t>(1, mn / 4), std::max<std::int64_t>(1, mn / 2)}) {
      double tail = 0.0;
      for (std::int64_t i = k; i < mn; ++i) tail += static_cast<double>(full.s[static_cast<std::size_t>(i)]) * full.s[static_cast<std::size_t>(i)];
      tail = std::sqrt(tail);
      const double err = frob_diff(a, reconstruct(truncated_svd(a, FixedRank{k})));
      const double rel = tail > 0.0 ? std::fabs(err - tail) / tail : err;
      worst = std::max(worst, rel);
      ++checks;
    }
  }
  return {worst <= 1e-4, std::to_string(checks) + " truncations, worst relative gap " + fmt("%.3g", worst) + " (tol 1e-4)"};
}

// 2. Singular values against the Gram-matrix eigenvalue oracle.
Outcome gram_parity() {
  std::mt19937 rng(102);
  std::uniform_int_distribution<std::int64_t> dim(1, 64);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto a = oracle::random_matrix(rng, dim(rng), dim(rng));
    const auto s = full_svd(a).s;
    const auto ref = oracle::gram_singular_values(a);
    const std::size_t n = std::min(s.size(), ref.size());
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::fabs(s[i] - ref[i]) / ref[i]);
  }
  return {worst <= 1e-5, "100 matrices, worst relative error " + fmt("%.3g", worst) + " (tol 1e-5)"};
}

// 3. Factored parameter count is R(IK²+1+O), matches the stored factors, and orig is OIK².
Outcome table1_identity() {
  std::mt19937 rng(103);
  std::uniform_int_distribution<std::int64_t> ch(1, 48), ks(1, 5);
  int ok = 0;
  for (int t = 0; t < 50; ++t) {
    const std::int64_t o = ch(rng), i = ch(rng), k = ks(rng);
    const std::int64_t ik2 = i * k * k;
    const std::int64_t r = std::uniform_int_distribution<std::int64_t>(1, std::min(ik2, o))(rng);
    const auto f = compress_conv(oracle::random_tensor(rng, {o, i, k, k}), FixedRank{r});
    const auto counts = param_counts(f);
    WeightStore s;
    put_factored(s, "w", f);
    const auto back = deserialize_store(serialize_store(s));
    const auto& u = back.find("w.u")->tensor;
    const auto& sv = back.find("w.s")->tensor;
    const auto& v = back.find("w.v")->tensor;
    const bool shapes = u.shape() == Shape{ik2, r} && sv.shape() == Shape{r} && v.shape() == Shape{o, r};
    const std::int64_t literal = u.numel() + sv.numel() + v.numel();
    if (shapes && counts.factored == r * (ik2 + 1 + o) && counts.factored == literal && counts.orig == o * ik2) ++ok;
  }
  return {ok == 50, std::to_string(ok) + "/50 shapes with U[IK^2,R], S[R], V[O,R] and exact counts"};
}

// 4. floor(0.3·N) zeros, and nothing pruned is larger than anything kept.
Outcome pruning_exactness() {
  std::mt19937 rng(104);
  std::uniform_int_distribution<int> len(1, 4000), levels(1, 8);
  int ok = 0;
  for (int t = 0; t < 100; ++t) {
    const std::int64_t n = len(rng);
    Tensor w({n});
    // Quantised magnitudes with random signs force heavy ties.
    const int q = levels(rng);
    std::uniform_int_distribution<int> lv(0, q);
    std::bernoulli_distribution neg(0.5);
    for (auto& x : w.data()) x = static_cast<float>(lv(rng)) * 0.25f * (neg(rng) ? -1.0f : 1.0f);
    const auto [pruned, row] = prune_l1(w, 0.3);
    const std::int64_t expected = static_cast<std::int64_t>(std::floor(0.3 * static_cast<double>(n)));
    const std::vector<float> orig(w.data().begin(), w.data().end());
    std::vector<bool> in_set(orig.size(), false);
    for (auto i : oracle::sorted_prune_set(orig, expected)) in_set[i] = true;
    bool same_set = true;
    float max_pruned = 0.0f, min_kept = INFINITY;
    for (std::size_t i = 0; i < orig.size(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(pruned[i]);
      if (in_set[i]) {
        same_set &= bits == 0u;
        max_pruned = std::max(max_pruned, std::fabs(orig[i]));
      } else {
        same_set &= bits == std::bit_cast<std::uint32_t>(orig[i]);
        min_kept = std::min(min_kept, std::fabs(orig[i]));
      }
    }
    if (row.zeroed == expected && same_set && max_pruned <= min_kept) ++ok;
  }
  return {ok == 100, std::to_string(ok) + "/100 tied tensors with floor(0.3N) pruned and order respected"};
}

// 5. Dense and factored execution agree.
Outcome factored_equivalence() {
  std::mt19937 rng(105);
  std::uniform_int_distribution<std::int64_t> ch(1, 24), ks(1, 3), hw(4, 12), st(1, 2);
  double worst_full = 0.0, worst_trunc = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::int64_t o = ch(rng), i = ch(rng), k = ks(rng), stride = st(rng), pad = k / 2;
    const auto w = oracle::random_tensor(rng, {o, i, k, k});
    const auto x = random_map(rng, i, hw(rng) + k, hw(rng) + k);
    const auto bias = oracle::random_tensor(rng, {o});
    const std::span<const float> b = bias.data();

    const auto dense = conv2d_dense(x, w, b, stride, pad);
    const auto full = conv2d_factored(x, compress_conv(w, FullRank{}), b, stride, pad);
    worst_full = std::max(worst_full, max_abs_diff(dense, full) / std::max(1.0, max_abs(dense)));

    const std::int64_t r = std::max<std::int64_t>(1, std::min(i * k * k, o) / 2);
    const auto f = compress_conv(w, FixedRank{r});
    const auto on_recon = conv2d_dense(x, decompress_conv(f), b, stride, pad);
    const auto fact = conv2d_factored(x, f, b, stride, pad);
    worst_trunc = std::max(worst_trunc, max_abs_diff(on_recon, fact) / std::max(1.0, max_abs(on_recon)));
  }
  return {worst_full <= 1e-4 && worst_trunc <= 1e-4,
          "100 layers, worst full-rank gap " + fmt("%.3g", worst_full) + ", truncated gap " + fmt("%.3g", worst_trunc) +
              " (tol 1e-4)"};
}

// 6. Rank-32 factored layer runs at least twice as fast as dense.
Outcome crossover() {
  std::mt19937 rng(106);
  const std::int64_t o = 256, i = 64, k = 3, r = 32;
  const auto w = oracle::random_tensor(rng, {o, i, k, k}, -0.05f, 0.05f);
  WeightStore store;
  store.add("dense", w, Role::ConvWeight);
  put_factored(store, "fact", compress_conv(w, FixedRank{r}));
  const auto dense_net = parse_network(R"([{"kind":"conv-dense","weight":"dense","pad":1}])");
  const auto fact_net = parse_network(R"([{"kind":"conv-factored","weight":"fact","pad":1}])");
  const std::int64_t h = 56, wd = 56;
  const auto d = benchmark(dense_net, store, i, h, wd, 11, 2);
  const auto f = benchmark(fact_net, store, i, h, wd, 11, 2);
  const double speedup = d.median / f.median;
  const double ratio = static_cast<double>(f.flops_estimate) / static_cast<double>(d.flops_estimate);
  return {speedup >= 2.0, "input 64x56x56, median dense " + fmt("%.4f", d.median) + " s vs factored " +
                              fmt("%.4f", f.median) + " s, speedup " + fmt("%.2f", speedup) + "x (need >= 2), flop ratio " +
                              fmt("%.4f", ratio)};
}

// 7. Fixture mAP against the brute-force oracle, plus the trivial anchors.
Outcome map_fixture() {
  const fs::path root = LRC_FIXTURE_DIR "/eval";
  const auto gts = load_labels(root / "labels");
  const auto dets = load_predictions(root / "preds");
  const double mine = evaluate(dets, gts).map;
  const double brute = oracle::brute_force_map(dets, gts, 0.5).map;
  std::ifstream in(root / "expected.json");
  const double scripted = nlohmann::json::parse(in)["mAP"].get<double>();

  std::vector<Detection> perfect;
  for (const auto& g : gts) perfect.push_back(Detection{g.image_id, g.class_id, g.box, 0.9});
  const double one = evaluate(perfect, gts).map;
  const double zero = evaluate({}, gts).map;
  const bool pass = std::fabs(mine - brute) <= 1e-9 && std::fabs(mine - scripted) <= 1e-9 && one == 1.0 && zero == 0.0;
  return {pass, "mAP " + fmt("%.12f", mine) + " vs oracle " + fmt("%.12f", brute) + " / script " + fmt("%.12f", scripted) +
                    ", perfect " + fmt("%.1f", one) + ", empty " + fmt("%.1f", zero)};
}

// Ten conv layers whose smallest dimension is at least 64, so R = 16 is at most min-dim/4 everywhere.
WeightStore ten_layer_store(std::mt19937& rng) {
  WeightStore s;
  const std::int64_t outs[] = {64, 96, 128, 256};
  const std::int64_t ins[] = {16, 32, 64};
  std::uniform_int_distribution<int> pick_o(0, 3), pick_i(0, 2);
  for (int l = 0; l < 10; ++l) {
    const std::int64_t o = outs[pick_o(rng)], i = ins[pick_i(rng)];
    const std::string name = "layer" + std::to_string(l);
    s.add(name + ".weight", oracle::random_tensor(rng, {o, i, 3, 3}, -0.1f, 0.1f), Role::ConvWeight);
    s.add(name + ".bias", oracle::random_tensor(rng, {o}, -0.1f, 0.1f), Role::Bias);
  }
  s.metadata()["model"] = "synthetic-10";
  return s;
}

const char* kEndToEndConfig =
    R"({"prune":{"fraction":0.3,"scope":"per-tensor"},"svd":{"policy":{"type":"fixed","k":16},"mode":"table1"},"store_factored":true})";

// 8. compress halves the store and inspect agrees with the report.
Outcome end_to_end(const fs::path& dir) {
  std::mt19937 rng(108);
  const auto store = ten_layer_store(rng);
  bool shapes_ok = true;
  for (const auto& e : store.entries()) {
    if (e.role != Role::ConvWeight) continue;
    const auto& sh = e.tensor.shape();
    const std::int64_t ik2 = sh[1] * sh[2] * sh[3];
    const std::int64_t r = std::min(ik2, sh[0]) / 4;
    shapes_ok &= r * (ik2 + 1 + sh[0]) < sh[0] * ik2 && 16 <= r;
  }
  const auto in = dir / "e2e_in.wstore";
  const auto out = dir / "e2e_out.wstore";
  const auto report = dir / "e2e_report.json";
  const auto cfg = dir / "e2e_config.json";
  save_store(store, in);
  std::ofstream(cfg) << kEndToEndConfig;
  const int code = run_cli("compress --in " + in.string() + " --config " + cfg.string() + " --out " + out.string() +
                           " --report " + report.string());
  if (code != 0) return {false, "compress exited " + std::to_string(code)};
  std::string inspect_out;
  const int code2 = run_cli("inspect --json --in " + out.string(), &inspect_out);
  if (code2 != 0) return {false, "inspect exited " + std::to_string(code2)};

  const auto rep = nlohmann::json::parse(slurp(report));
  const auto ins = nlohmann::json::parse(inspect_out)["totals"];
  const auto& tot = rep["totals"];
  const double ratio = static_cast<double>(fs::file_size(out)) / static_cast<double>(fs::file_size(in));
  const bool totals_ok = ins["parameters"] == tot["params_after"] && ins["factored_params"] == tot["factored_params"] &&
                         ins["factored_orig_params"] == tot["orig_params"] &&
                         ins["factored_layers"] == tot["layers_compressed"] &&
                         ins["serialized_bytes"] == rep["weight_size"]["bytes_after"] &&
                         ins["serialized_bytes"].get<std::uintmax_t>() == fs::file_size(out);
  return {shapes_ok && ratio <= 0.5 && totals_ok,
          std::to_string(fs::file_size(in)) + " -> " + std::to_string(fs::file_size(out)) + " bytes (ratio " +
              fmt("%.4f", ratio) + ", need <= 0.5), inspect totals " + (totals_ok ? "match" : "DIFFER") + " report"};
}

WeightStore random_store(std::mt19937& rng) {
  WeightStore s;
  std::uniform_int_distribution<int> count(0, 6), rank(1, 4), dim(1, 6), role(0, 2), flag(0, 3);
  const int n = count(rng);
  for (int e = 0; e < n; ++e) {
    Role r = static_cast<Role>(role(rng));
    Shape shape;
    const int rk = r == Role::ConvWeight ? 4 : rank(rng);
    for (int d = 0; d < rk; ++d) shape.push_back(dim(rng));
    auto t = oracle::random_tensor(rng, shape, -1e3f, 1e3f);
    // Exercise awkward bit patterns too.
    if (flag(rng) == 0) t[0] = -0.0f;
    if (flag(rng) == 0) t[t.data().size() - 1] = std::numeric_limits<float>::denorm_min();
    std::map<std::string, std::string> attrs;
    if (flag(rng) == 0) attrs["note"] = "entry " + std::to_string(e) + " \"quoted\" \u00e9";
    s.add("t" + std::to_string(e) + (flag(rng) ? "" : "/sub.name"), std::move(t), r, attrs);
  }
  if (flag(rng)) s.metadata()["seed"] = std::to_string(rng());
  return s;
}

// 9. Save/load identity and repeatable compress output.
Outcome round_trip(const fs::path& dir) {
  std::mt19937 rng(109);
  int ok = 0;
  for (int t = 0; t < 100; ++t) {
    const auto s = random_store(rng);
    const auto path = dir / ("rt_" + std::to_string(t) + ".wstore");
    const auto bytes = save_store(s, path);
    const auto back = load_store(path);
    if (bitwise_equal(s, back) && bytes == fs::file_size(path) && [&] {
      const auto b = serialize_store(back);
      return std::string(b.begin(), b.end()) == slurp(path);
    }()) ++ok;
  }

  std::mt19937 rng2(110);
  const auto in = dir / "det_in.wstore";
  const auto cfg = dir / "det_config.json";
  save_store(ten_layer_store(rng2), in);
  std::ofstream(cfg) << kEndToEndConfig;
  std::string outputs[2], reports[2];
  for (int i = 0; i < 2; ++i) {
    const auto out = dir / ("det_out" + std::to_string(i) + ".wstore");
    const auto rep = dir / ("det_report" + std::to_string(i) + ".json");
    if (run_cli("compress --in " + in.string() + " --config " + cfg.string() + " --out " + out.string() +
                " --report " + rep.string()) != 0)
      return {false, "compress failed"};
    outputs[i] = slurp(out);
    reports[i] = slurp(rep);
  }
  const bool same = outputs[0] == outputs[1] && reports[0] == reports[1] && !outputs[0].empty();
  return {ok == 100 && same, std::to_string(ok) + "/100 stores bitwise identical after save/load; repeated compress " +
                                 (same ? "byte-identical" : "DIFFERS")};
}

}  // namespace

int main() {
  const fs::path dir = fs::temp_directory_path() / ("lrc_acceptance_" + std::to_string(std::random_device{}()));
  fs::create_directories(dir);

  struct Criterion {
    int id;
    const char* name;
    double limit_s;  // 0 when there is no time limit
    std::function<Outcome()> fn;
  };
  const Criterion criteria[] = {
      {1, "eckart-young truncation error", 60, eckart_young},
      {2, "svd vs gram-eigenvalue oracle", 30, gram_parity},
      {3, "factored parameter identity", 5, table1_identity},
      {4, "pruning exactness", 10, pruning_exactness},
      {5, "dense/factored conv equivalence", 60, factored_equivalence},
      {6, "rank-32 layer speedup", 0, crossover},
      {7, "mAP fixture", 1, map_fixture},
      {8, "end-to-end size reduction", 30, [&] { return end_to_end(dir); }},
      {9, "round trip and determinism", 30, [&] { return round_trip(dir); }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool pass = o.pass;
    std::string timing = fmt("%.2f s", secs);
    if (c.limit_s > 0) {
      timing += fmt(" of %.0f s", c.limit_s);
      if (secs > c.limit_s) pass = false;
    }
    std::printf("%s %d %s: %s [%s]\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), timing.c_str());
    std::fflush(stdout);
    failed += !pass;
  }
  fs::remove_all(dir);
  std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failed, std::size(criteria));
  return failed == 0 ? 0 : 1;
}
