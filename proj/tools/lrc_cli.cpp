// lrc: compress weight stores, evaluate detections, benchmark conv nets.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lrc/lrc.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct StoreDeleter {
  void operator()(lrc_store* s) const { lrc_store_free(s); }
};
using StorePtr = std::unique_ptr<lrc_store, StoreDeleter>;

struct StringDeleter {
  void operator()(char* s) const { lrc_string_free(s); }
};
using CString = std::unique_ptr<char, StringDeleter>;

// Thrown inside command handlers; carries the exit code.
struct CommandError {
  int code;
  std::string message;
};

void check(lrc_status status, const std::string& context) {
  if (status == LRC_OK) return;
  const int code = status == LRC_ERR_NUMERIC ? kExitNumeric : kExitData;
  throw CommandError{code, context + ": " + lrc_last_error()};
}

[[noreturn]] void usage_error(const std::string& message) { throw CommandError{kExitUsage, message}; }

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CommandError{kExitData, "cannot open " + path};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CommandError{kExitData, "cannot write " + path.string()};
  out << text;
  if (!out) throw CommandError{kExitData, "failed writing " + path.string()};
}

bool same_file(const std::string& a, const std::string& b) {
  std::error_code ec;
  if (fs::exists(a, ec) && fs::exists(b, ec)) return fs::equivalent(a, b, ec);
  return fs::weakly_canonical(a, ec) == fs::weakly_canonical(b, ec);
}

StorePtr load(const std::string& path) {
  lrc_store* raw = nullptr;
  check(lrc_store_load(path.c_str(), &raw), path);
  return StorePtr(raw);
}

// Shortest decimal that round-trips; shared by the CSV and SVG writers so
// both carry identical point text.
std::string number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, end) : std::to_string(v);
}

using Points = std::vector<std::pair<double, double>>;

Points curve_points(const nlohmann::json& curve) {
  Points pts;
  for (const auto& p : curve) pts.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  return pts;
}

std::string pr_csv(const Points& pts) {
  std::string out = "recall,precision\n";
  for (const auto& [r, p] : pts) out += number(r) + "," + number(p) + "\n";
  return out;
}

std::string pr_svg(const Points& pts, const std::string& title) {
  constexpr int kWidth = 480;
  constexpr int kHeight = 400;
  constexpr int kLeft = 60;
  constexpr int kBottom = 340;
  constexpr int kPlotW = 380;
  constexpr int kPlotH = 300;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  os << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "  <text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"14\">"
     << title << "</text>\n";
  os << "  <line x1=\"" << kLeft << "\" y1=\"" << kBottom << "\" x2=\"" << kLeft + kPlotW << "\" y2=\"" << kBottom
     << "\" stroke=\"black\"/>\n";
  os << "  <line x1=\"" << kLeft << "\" y1=\"" << kBottom << "\" x2=\"" << kLeft << "\" y2=\"" << kBottom - kPlotH
     << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = t / 4.0;
    const int x = kLeft + static_cast<int>(v * kPlotW);
    const int y = kBottom - static_cast<int>(v * kPlotH);
    os << "  <text x=\"" << x << "\" y=\"" << kBottom + 16 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          "font-size=\"11\">"
       << number(v) << "</text>\n";
    os << "  <text x=\"" << kLeft - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
          "font-size=\"11\">"
       << number(v) << "</text>\n";
  }
  os << "  <text x=\"" << kLeft + kPlotW / 2 << "\" y=\"" << kBottom + 36
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">recall</text>\n";
  os << "  <text x=\"16\" y=\"" << kBottom - kPlotH / 2 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"12\" transform=\"rotate(-90 16 "
     << kBottom - kPlotH / 2 << ")\">precision</text>\n";
  // Points are kept in data units; the group transform maps them to pixels.
  os << "  <g transform=\"translate(" << kLeft << "," << kBottom << ") scale(" << kPlotW << ",-" << kPlotH << ")\">\n";
  os << "    <polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" vector-effect=\"non-scaling-stroke\" "
        "points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i) os << " ";
    os << number(pts[i].first) << "," << number(pts[i].second);
  }
  os << "\"/>\n  </g>\n</svg>\n";
  return os.str();
}

int cmd_compress(const std::string& in, const std::string& config_path, const std::string& out,
                 const std::string& report_path, const std::string& table_path) {
  if (same_file(in, out)) usage_error("--out must differ from --in");
  const auto config = read_text(config_path);
  auto store = load(in);

  lrc_store* raw = nullptr;
  char* json_raw = nullptr;
  char* text_raw = nullptr;
  check(lrc_compress(store.get(), config.c_str(), &raw, &json_raw, &text_raw), "compress");
  StorePtr result(raw);
  CString report(json_raw);
  CString table(text_raw);

  uint64_t bytes = 0;
  check(lrc_store_save(result.get(), out.c_str(), &bytes), out);
  if (!report_path.empty()) write_text(report_path, std::string(report.get()) + "\n");
  if (!table_path.empty()) write_text(table_path, table.get());
  std::cout << table.get();
  std::cout << "wrote " << out << " (" << bytes << " bytes)\n";
  return kExitOk;
}

int cmd_eval(const std::string& labels, const std::string& preds, double iou, const std::string& interp,
             const std::string& out, const std::string& pr_dir) {
  if (!(iou > 0.0 && iou <= 1.0)) usage_error("--iou must be in (0, 1]");
  if (interp != "all-points" && interp != "11-point") usage_error("--interp must be all-points or 11-point");
  char* raw = nullptr;
  check(lrc_evaluate_dirs(labels.c_str(), preds.c_str(), iou, interp == "11-point", &raw), "eval");
  CString report(raw);
  const auto j = nlohmann::json::parse(report.get());

  if (!out.empty()) write_text(out, std::string(report.get()) + "\n");
  if (!pr_dir.empty()) {
    std::error_code ec;
    fs::create_directories(pr_dir, ec);
    if (ec) throw CommandError{kExitData, "cannot create " + pr_dir + ": " + ec.message()};
    for (const auto& c : j.at("classes")) {
      const auto id = c.at("class_id").get<int>();
      const auto pts = curve_points(c.at("curve"));
      std::string title = "class " + std::to_string(id);
      if (!c.at("ap").is_null()) title += " (AP@" + number(iou) + " = " + number(c.at("ap").get<double>()) + ")";
      const auto stem = fs::path(pr_dir) / ("pr_class_" + std::to_string(id));
      write_text(stem.string() + ".csv", pr_csv(pts));
      write_text(stem.string() + ".svg", pr_svg(pts, title));
    }
    const auto pooled = curve_points(j.at("pooled").at("curve"));
    write_text((fs::path(pr_dir) / "pr_all.csv").string(), pr_csv(pooled));
    write_text((fs::path(pr_dir) / "pr_all.svg").string(), pr_svg(pooled, "all classes (pooled)"));
  }

  std::printf("mAP@%s = %s (%s)\n", number(iou).c_str(), number(j.at("mAP").get<double>()).c_str(), interp.c_str());
  for (const auto& c : j.at("classes")) {
    std::printf("  class %-4d gt %-6lld tp %-6lld fp %-6lld AP %s\n", c.at("class_id").get<int>(),
                c.at("num_gt").get<long long>(), c.at("tp").get<long long>(), c.at("fp").get<long long>(),
                c.at("ap").is_null() ? "n/a (no ground truth)" : number(c.at("ap").get<double>()).c_str());
  }
  return kExitOk;
}

void parse_input_shape(const std::string& text, int64_t& c, int64_t& h, int64_t& w) {
  std::vector<int64_t> dims;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    int64_t v = 0;
    auto [end, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc() || end != part.data() + part.size() || v < 1)
      usage_error("--input must look like CxHxW, got \"" + text + "\"");
    dims.push_back(v);
  }
  if (dims.size() != 3) usage_error("--input must look like CxHxW, got \"" + text + "\"");
  c = dims[0];
  h = dims[1];
  w = dims[2];
}

int cmd_bench(const std::string& net, const std::string& weights, const std::string& input, int runs, int warmup,
              const std::string& out) {
  if (runs < 3) usage_error("--runs must be at least 3");
  if (warmup < 1) usage_error("--warmup must be at least 1");
  int64_t c = 0, h = 0, w = 0;
  parse_input_shape(input, c, h, w);
  const auto network = read_text(net);
  auto store = load(weights);
  char* raw = nullptr;
  check(lrc_benchmark(network.c_str(), store.get(), c, h, w, runs, warmup, &raw), "bench");
  CString result(raw);
  if (!out.empty()) write_text(out, std::string(result.get()) + "\n");
  std::cout << result.get() << "\n";
  return kExitOk;
}

int cmd_inspect(const std::string& in, bool as_json) {
  auto store = load(in);
  char* json_raw = nullptr;
  char* text_raw = nullptr;
  check(lrc_store_inspect(store.get(), as_json ? &json_raw : nullptr, as_json ? nullptr : &text_raw), in);
  CString json(json_raw);
  CString text(text_raw);
  std::cout << (as_json ? json.get() : text.get());
  if (as_json) std::cout << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank and pruning compression toolkit for convolution weights"};
  app.require_subcommand(1);

  std::string in, config, out, report, table;
  auto* compress = app.add_subcommand("compress", "Prune and/or SVD-factor the conv layers of a .wstore");
  compress->add_option("--in", in, "Input .wstore")->required();
  compress->add_option("--config", config, "Compression config JSON")->required();
  compress->add_option("--out", out, "Output .wstore")->required();
  compress->add_option("--report", report, "Write the compression report JSON here");
  compress->add_option("--table", table, "Write the plain-text report table here");

  std::string labels, preds, eval_out, pr_dir, interp = "all-points";
  double iou = 0.5;
  auto* eval = app.add_subcommand("eval", "Compute per-class AP and mAP from YOLO-format files");
  eval->add_option("--labels", labels, "Directory of ground-truth .txt files")->required();
  eval->add_option("--preds", preds, "Directory of prediction .txt files")->required();
  eval->add_option("--iou", iou, "IoU threshold")->capture_default_str();
  eval->add_option("--interp", interp, "all-points or 11-point")->capture_default_str();
  eval->add_option("--out", eval_out, "Write the evaluation report JSON here");
  eval->add_option("--pr-dir", pr_dir, "Write PR curve CSV and SVG files here");

  std::string net, weights, input, bench_out;
  int runs = 11;
  int warmup = 2;
  auto* bench = app.add_subcommand("bench", "Time forward passes of a conv network");
  bench->add_option("--net", net, "Network spec JSON")->required();
  bench->add_option("--weights", weights, "Weights .wstore")->required();
  bench->add_option("--input", input, "Input shape CxHxW")->required();
  bench->add_option("--runs", runs, "Timed runs (>= 3)")->capture_default_str();
  bench->add_option("--warmup", warmup, "Warmup runs (>= 1)")->capture_default_str();
  bench->add_option("--out", bench_out, "Also write the result JSON here");

  std::string inspect_in;
  bool inspect_json = false;
  auto* inspect = app.add_subcommand("inspect", "Print manifest, tensor statistics and totals of a .wstore");
  inspect->add_option("--in", inspect_in, "Input .wstore")->required();
  inspect->add_flag("--json", inspect_json, "Emit JSON instead of a table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*compress) return cmd_compress(in, config, out, report, table);
    if (*eval) return cmd_eval(labels, preds, iou, interp, eval_out, pr_dir);
    if (*bench) return cmd_bench(net, weights, input, runs, warmup, bench_out);
    if (*inspect) return cmd_inspect(inspect_in, inspect_json);
  } catch (const CommandError& e) {
    std::cerr << "lrc: " << e.message << "\n";
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "lrc: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
