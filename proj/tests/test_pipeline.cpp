#include <doctest.h>

#include <cmath>
#include <random>

#include <json.hpp>

#include "lrc/error.hpp"
#include "lrc/pipeline.hpp"
#include "oracles.hpp"

using namespace lrc;

namespace {

double max_abs(const Tensor& t) {
  double m = 0.0;
  for (float v : t.data()) m = std::max(m, std::fabs(static_cast<double>(v)));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::fabs(static_cast<double>(a[static_cast<std::size_t>(i)]) - b[static_cast<std::size_t>(i)]));
  return m;
}

double frobenius_diff(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[static_cast<std::size_t>(i)]) - b[static_cast<std::size_t>(i)];
    acc += d * d;
  }
  return std::sqrt(acc);
}

WeightStore sample_store(std::mt19937& rng) {
  WeightStore s;
  s.add("conv1.weight", oracle::random_tensor(rng, {16, 3, 3, 3}), Role::ConvWeight);
  s.add("conv1.bias", oracle::random_tensor(rng, {16}), Role::Bias);
  s.add("conv2.weight", oracle::random_tensor(rng, {32, 16, 3, 3}), Role::ConvWeight);
  s.add("conv2.bias", oracle::random_tensor(rng, {32}), Role::Bias);
  s.add("head.weight", oracle::random_tensor(rng, {8, 32, 1, 1}), Role::ConvWeight);
  s.metadata()["model"] = "toy";
  return s;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("zero kernel") {
    auto f = compress_conv(Tensor({4, 2, 3, 3}), FixedRank{1});
    CHECK(f.rank() == 1);
    CHECK(f.s[0] == 0.0f);
    CHECK(max_abs(decompress_conv(f)) == 0.0);
  }

  TEST_CASE("exact rank-2 kernel is found by the energy policy") {
    std::mt19937 rng(2);
    // Reshaped matrix [IK², O] = a1·b1ᵀ + a2·b2ᵀ.
    const std::int64_t o = 6, i = 2, k = 3, ik2 = i * k * k;
    auto a = oracle::random_matrix(rng, ik2, 2);
    auto b = oracle::random_matrix(rng, o, 2);
    Tensor w({o, i, k, k});
    for (std::int64_t oc = 0; oc < o; ++oc)
      for (std::int64_t r = 0; r < ik2; ++r)
        w[static_cast<std::size_t>(oc * ik2 + r)] = a(r, 0) * b(oc, 0) + a(r, 1) * b(oc, 1);
    auto f = compress_conv(w, EnergyRank{0.999});
    CHECK(f.rank() == 2);
    double norm = 0.0;
    for (float v : w.data()) norm += static_cast<double>(v) * v;
    CHECK(frobenius_diff(w, decompress_conv(f)) <= 1e-4 * std::sqrt(norm));
  }

  TEST_CASE("parameter counts follow the factor shapes") {
    std::mt19937 rng(3);
    auto f = compress_conv(oracle::random_tensor(rng, {16, 3, 3, 3}), FixedRank{4});
    const auto counts = param_counts(f);
    CHECK(counts.orig == 432);
    CHECK(counts.factored == 176);
    CHECK(counts.factored == static_cast<std::int64_t>(f.u.data().size() + f.s.size() + f.v.data().size()));
    CHECK(f.u.rows() == 27);
    CHECK(f.v.rows() == 16);

    auto tiny = compress_conv(oracle::random_tensor(rng, {4, 1, 1, 1}), FixedRank{1});
    CHECK(param_counts(tiny).orig == 4);
    CHECK(param_counts(tiny).factored == 6);

    FactorizedConv empty = tiny;
    empty.s.clear();
    CHECK_THROWS_AS(param_counts(empty), Error);
  }

  TEST_CASE("full rank round trip and truncation error") {
    std::mt19937 rng(4);
    for (int trial = 0; trial < 10; ++trial) {
      auto w = oracle::random_tensor(rng, {8 + trial, 3, 3, 3});
      auto back = decompress_conv(compress_conv(w, FullRank{}));
      CHECK(back.shape() == w.shape());
      CHECK(max_abs_diff(w, back) <= 1e-4 * std::max(1.0, max_abs(w)));

      const auto spectrum = full_svd(conv_to_matrix(w, ReshapeMode::Table1)).s;
      const std::int64_t k = 1 + trial % 5;
      double tail = 0.0;
      for (std::size_t i = static_cast<std::size_t>(k); i < spectrum.size(); ++i)
        tail += static_cast<double>(spectrum[i]) * spectrum[i];
      const double err = frobenius_diff(w, decompress_conv(compress_conv(w, FixedRank{k})));
      CHECK(std::fabs(err - std::sqrt(tail)) <= 1e-4 * std::sqrt(tail));
    }
  }

  TEST_CASE("all-zero singular values decompress to zeros") {
    std::mt19937 rng(5);
    auto f = compress_conv(oracle::random_tensor(rng, {4, 2, 3, 3}), FixedRank{2});
    std::fill(f.s.begin(), f.s.end(), 0.0f);
    CHECK(max_abs(decompress_conv(f)) == 0.0);
  }

  TEST_CASE("compress_conv input checks") {
    CHECK_THROWS_AS(compress_conv(Tensor({4, 9}), FullRank{}), Error);
    Tensor w({2, 1, 1, 1}, {1.0f, std::nanf("")});
    CHECK_THROWS_AS(compress_conv(w, FullRank{}), Error);
    std::mt19937 rng(6);
    auto f = compress_conv(oracle::random_tensor(rng, {4, 2, 3, 3}), FixedRank{2});
    f.v = Matrix(5, 2);
    CHECK_THROWS_AS(decompress_conv(f), Error);
  }

  TEST_CASE("factored entries round trip through a store") {
    std::mt19937 rng(7);
    auto f = compress_conv(oracle::random_tensor(rng, {8, 4, 3, 3}), FixedRank{3});
    WeightStore s;
    put_factored(s, "conv", f);
    REQUIRE(s.size() == 3);
    CHECK(s.entries()[0].name == "conv.u");
    CHECK(s.entries()[0].role == Role::SvdFactor);
    CHECK(s.entries()[0].attrs.at("orig_shape") == "8,4,3,3");
    auto back = deserialize_store(serialize_store(s));
    auto g = get_factored(back, "conv");
    REQUIRE(g);
    CHECK(g->orig_shape == f.orig_shape);
    CHECK(g->s == f.s);
    CHECK(bitwise_equal(decompress_conv(*g), decompress_conv(f)));
    CHECK_FALSE(get_factored(back, "other"));
  }

  TEST_CASE("config parsing") {
    auto c = parse_compression_config(
        R"({"prune":{"fraction":0.3,"scope":"global"},"svd":{"policy":{"type":"fixed","k":4},"mode":"table1"},)"
        R"("selector":{"roles":["conv-weight"],"name_regex":"conv"},"min_elements":100})");
    REQUIRE(c.prune);
    CHECK(c.prune->scope == PruneScope::Global);
    REQUIRE(c.svd);
    CHECK(std::get<FixedRank>(c.svd->policy).k == 4);
    CHECK(c.store_factored);
    CHECK(c.min_elements == 100);
    CHECK(*c.selector.name_regex == "conv");

    auto prune_only = parse_compression_config(R"({"prune":{"fraction":0.3}})");
    CHECK_FALSE(prune_only.store_factored);
    CHECK(prune_only.min_elements == 512);
    CHECK(prune_only.prune->scope == PruneScope::PerTensor);

    auto energy = parse_compression_config(R"({"svd":{"policy":{"type":"energy","fraction":0.9}},"store_factored":false})");
    CHECK(std::get<EnergyRank>(energy.svd->policy).fraction == 0.9);
    CHECK_FALSE(energy.store_factored);

    for (const char* bad : {"{}", "[1]", "not json", R"({"prune":{"fraction":2}})", R"({"prune":{"frac":0.3}})",
                            R"({"svd":{"policy":{"type":"magic"}}})", R"({"svd":{"policy":{"type":"fixed","k":0}}})",
                            R"({"svd":{"mode":"diagonal"}})", R"({"prune":{},"extra":1})"}) {
      CAPTURE(bad);
      CHECK_THROWS_AS(parse_compression_config(bad), Error);
    }
  }

  TEST_CASE("prune-only pipeline") {
    std::mt19937 rng(8);
    auto s = sample_store(rng);
    CompressionConfig c;
    c.prune = PruneStage{0.3, PruneScope::PerTensor};
    c.store_factored = false;
    c.min_elements = 0;
    auto [out, report] = run_pipeline(s, c);
    CHECK(report.model_label == "Weight pruning");
    CHECK(report.total_zeroed == 129 + 1382 + 76);
    for (const auto& l : report.layers) CHECK_FALSE(l.rank);
    CHECK(out.size() == s.size());
    CHECK(tensor_stats(out.find("conv1.weight")->tensor).nonzero_count == 432 - 129);
    CHECK(bitwise_equal(out.find("conv1.bias")->tensor, s.find("conv1.bias")->tensor));
  }

  TEST_CASE("full-rank dense svd is a near identity") {
    std::mt19937 rng(9);
    auto s = sample_store(rng);
    CompressionConfig c;
    c.svd = SvdStage{FullRank{}, ReshapeMode::Table1};
    c.store_factored = false;
    auto [out, report] = run_pipeline(s, c);
    for (const auto& e : s.entries()) {
      const auto& o = out.find(e.name)->tensor;
      CHECK(max_abs_diff(e.tensor, o) <= 1e-4 * std::max(1.0, max_abs(e.tensor)));
    }
    const double ratio = static_cast<double>(report.bytes_after) / static_cast<double>(report.bytes_before);
    CHECK(std::fabs(ratio - 1.0) <= 0.01);
  }

  TEST_CASE("prune + low-rank factored store is smaller") {
    std::mt19937 rng(10);
    WeightStore s;
    s.add("a", oracle::random_tensor(rng, {64, 16, 3, 3}), Role::ConvWeight);
    s.add("a.bias", oracle::random_tensor(rng, {64}), Role::Bias);
    s.add("b", oracle::random_tensor(rng, {32, 64, 3, 3}), Role::ConvWeight);
    CompressionConfig c;
    c.prune = PruneStage{0.3, PruneScope::PerTensor};
    c.svd = SvdStage{FixedRank{8}, ReshapeMode::Table1};
    auto [out, report] = run_pipeline(s, c);
    CHECK(report.model_label == "Weight pruning + SVD");
    CHECK(report.order == std::vector<std::string>{"prune", "svd"});
    CHECK(report.bytes_after < report.bytes_before);
    CHECK(report.bytes_after == serialize_store(out).size());
    CHECK(out.find("a.u"));
    CHECK_FALSE(out.find("a"));
    CHECK(out.entries()[3].name == "a.bias");

    std::int64_t stored = 0;
    for (const auto& e : out.entries())
      if (e.role == Role::SvdFactor) stored += e.tensor.numel();
    CHECK(stored == report.total_factored_params);
    CHECK(report.total_factored_params == 8 * (144 + 1 + 64) + 8 * (576 + 1 + 32));
    for (const auto& l : report.layers) {
      REQUIRE(l.nonzero_fraction_after);
      CHECK(*l.nonzero_fraction_after > 0.7);  // reconstruction refills pruned zeros
    }
  }

  TEST_CASE("skipped layers and selector") {
    std::mt19937 rng(11);
    auto s = sample_store(rng);
    CompressionConfig c;
    c.svd = SvdStage{FixedRank{2}, ReshapeMode::Table1};
    c.selector.name_regex = "conv";
    auto [out, report] = run_pipeline(s, c);
    REQUIRE(report.layers.size() == 3);
    CHECK(report.layers[0].skipped);
    CHECK(report.layers[0].skip_reason == "below min_elements");
    CHECK(report.layers[0].orig_params == 432);
    CHECK_FALSE(report.layers[0].rank);
    CHECK_FALSE(report.layers[1].skipped);
    CHECK(report.layers[2].skipped);
    CHECK(report.layers[2].skip_reason == "not selected");
    CHECK(bitwise_equal(out.find("head.weight")->tensor, s.find("head.weight")->tensor));

    c.min_elements = 1'000'000;
    try {
      run_pipeline(s, c);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::EmptySelection);
    }
  }

  TEST_CASE("layer failures name the layer") {
    std::mt19937 rng(12);
    auto s = sample_store(rng);
    CompressionConfig c;
    c.svd = SvdStage{FixedRank{20}, ReshapeMode::Table1};
    c.min_elements = 0;
    CHECK_THROWS_WITH(run_pipeline(s, c), doctest::Contains("conv1.weight"));
  }

  TEST_CASE("deterministic output and report") {
    std::mt19937 rng(13);
    auto s = sample_store(rng);
    auto c = parse_compression_config(R"({"prune":{"fraction":0.3},"svd":{"policy":{"type":"energy","fraction":0.8}},"min_elements":0})");
    auto [a, ra] = run_pipeline(s, c);
    auto [b, rb] = run_pipeline(s, c);
    CHECK(serialize_store(a) == serialize_store(b));
    CHECK(compression_report_json(ra) == compression_report_json(rb));
    const auto j = nlohmann::json::parse(compression_report_json(ra));
    CHECK(j["model"] == "Weight pruning + SVD");
    CHECK(j["layers"][0]["svd"]["factored_params"].get<std::int64_t>() ==
          j["layers"][0]["svd"]["rank"].get<std::int64_t>() * (27 + 1 + 16));
    const auto table = compression_report_table(ra);
    CHECK(table.find("Weight Size (MB)") != std::string::npos);
    CHECK(table.find("R(IK^2+1+O)") != std::string::npos);
  }

  TEST_CASE("near-square mode stores factors that decompress") {
    std::mt19937 rng(14);
    WeightStore s;
    s.add("w", oracle::random_tensor(rng, {16, 3, 3, 3}), Role::ConvWeight);
    auto c = parse_compression_config(R"({"svd":{"policy":{"type":"full"},"mode":"near-square"},"min_elements":0})");
    auto [out, report] = run_pipeline(s, c);
    CHECK(*report.layers[0].svd_rows == 18);
    CHECK(*report.layers[0].svd_cols == 24);
    auto f = get_factored(out, "w");
    REQUIRE(f);
    CHECK(f->mode == ReshapeMode::NearSquare);
    CHECK(max_abs_diff(decompress_conv(*f), s.find("w")->tensor) <= 1e-4);
  }
}
