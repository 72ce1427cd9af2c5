#include "lrc/eval.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "lrc/error.hpp"

namespace lrc {

double iou(const Box& a, const Box& b) {
  const double ix = std::min(a.cx + a.w / 2, b.cx + b.w / 2) - std::max(a.cx - a.w / 2, b.cx - b.w / 2);
  const double iy = std::min(a.cy + a.h / 2, b.cy + b.h / 2) - std::max(a.cy - a.h / 2, b.cy - b.h / 2);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

std::vector<MatchResult> match_detections(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                                          double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0))
    throw Error(ErrorKind::InvalidArgument, "iou threshold must be in (0, 1]");

  std::map<std::pair<std::string, int>, std::vector<std::size_t>> by_key;
  for (std::size_t g = 0; g < gts.size(); ++g) by_key[{gts[g].image_id, gts[g].class_id}].push_back(g);

  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](auto x, auto y) { return dets[x].confidence > dets[y].confidence; });

  std::vector<bool> taken(gts.size(), false);
  std::vector<MatchResult> out;
  out.reserve(dets.size());
  for (auto d : order) {
    MatchResult m{d, false, -1};
    auto it = by_key.find({dets[d].image_id, dets[d].class_id});
    if (it != by_key.end()) {
      double best = -1.0;
      std::ptrdiff_t best_gt = -1;
      for (auto g : it->second) {
        if (taken[g]) continue;
        const double v = iou(dets[d].box, gts[g].box);
        if (v > best) {
          best = v;
          best_gt = static_cast<std::ptrdiff_t>(g);
        }
      }
      if (best_gt >= 0 && best >= iou_threshold) {
        m.true_positive = true;
        m.ground_truth = best_gt;
        taken[static_cast<std::size_t>(best_gt)] = true;
      }
    }
    out.push_back(m);
  }
  return out;
}

PrCurve pr_curve(const std::vector<bool>& tp_flags, std::int64_t num_gt) {
  if (num_gt < 0) throw Error(ErrorKind::InvalidArgument, "num_gt must be >= 0");
  PrCurve curve;
  curve.num_gt = num_gt;
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  for (bool flag : tp_flags) {
    if (flag) ++tp;
    else ++fp;
    if (tp > num_gt)
      throw Error(ErrorKind::InvalidArgument, "inconsistent curve: more true positives than ground truths");
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = num_gt > 0 ? static_cast<double>(tp) / static_cast<double>(num_gt) : 0.0;
    curve.points.push_back({recall, precision});
  }
  return curve;
}

const char* to_string(Interpolation interp) {
  return interp == Interpolation::AllPoints ? "all-points" : "11-point";
}

double average_precision(const PrCurve& curve, Interpolation interp) {
  const auto& pts = curve.points;
  if (pts.empty()) return 0.0;
  if (interp == Interpolation::ElevenPoint) {
    double sum = 0.0;
    for (int t = 0; t <= 10; ++t) {
      const double r = t / 10.0;
      double best = 0.0;
      for (const auto& p : pts)
        if (p.recall >= r) best = std::max(best, p.precision);
      sum += best;
    }
    return sum / 11.0;
  }
  // Precision envelope, swept from the high-recall end.
  std::vector<double> envelope(pts.size());
  double running = 0.0;
  for (std::size_t i = pts.size(); i-- > 0;) {
    running = std::max(running, pts[i].precision);
    envelope[i] = running;
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    ap += (pts[i].recall - prev_recall) * envelope[i];
    prev_recall = pts[i].recall;
  }
  return std::clamp(ap, 0.0, 1.0);
}

EvalReport evaluate(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, double iou_threshold,
                    Interpolation interp) {
  EvalReport report;
  report.iou_threshold = iou_threshold;
  report.interpolation = interp;

  const auto matches = match_detections(dets, gts, iou_threshold);

  std::map<int, std::int64_t> num_gt;
  std::set<std::string> images;
  for (const auto& g : gts) {
    ++num_gt[g.class_id];
    images.insert(g.image_id);
  }
  std::map<int, std::vector<bool>> flags;
  for (const auto& g : num_gt) flags[g.first];
  std::vector<bool> pooled;
  for (const auto& m : matches) {
    flags[dets[m.detection].class_id].push_back(m.true_positive);
    pooled.push_back(m.true_positive);
    images.insert(dets[m.detection].image_id);
  }
  report.num_images = static_cast<std::int64_t>(images.size());

  double ap_sum = 0.0;
  std::int64_t ap_count = 0;
  std::int64_t total_gt = 0;
  for (const auto& [cls, class_flags] : flags) {
    ClassEval ce;
    ce.class_id = cls;
    auto it = num_gt.find(cls);
    ce.num_gt = it == num_gt.end() ? 0 : it->second;
    ce.num_det = static_cast<std::int64_t>(class_flags.size());
    ce.tp = std::count(class_flags.begin(), class_flags.end(), true);
    ce.fp = ce.num_det - ce.tp;
    ce.curve = pr_curve(class_flags, ce.num_gt);
    ce.curve.class_id = cls;
    ce.has_ap = ce.num_gt > 0;
    if (ce.has_ap) {
      ce.ap = average_precision(ce.curve, interp);
      ap_sum += ce.ap;
      ++ap_count;
    }
    total_gt += ce.num_gt;
    report.classes.push_back(std::move(ce));
  }
  report.map = ap_count > 0 ? ap_sum / static_cast<double>(ap_count) : 0.0;
  report.pooled = pr_curve(pooled, total_gt);
  report.pooled.class_id = -1;
  return report;
}

namespace {

[[noreturn]] void line_error(const std::filesystem::path& file, std::size_t line, const std::string& msg) {
  throw Error(ErrorKind::ParseError, file.string() + ":" + std::to_string(line) + ": " + msg);
}

std::vector<std::filesystem::path> text_files(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec))
    throw Error(ErrorKind::Io, "not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

double parse_number(const std::string& token, const std::filesystem::path& file, std::size_t line) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end != token.c_str() + token.size() || errno == ERANGE || !std::isfinite(v))
    line_error(file, line, "invalid number \"" + token + "\"");
  return v;
}

int parse_class(const std::string& token, const std::filesystem::path& file, std::size_t line) {
  errno = 0;
  char* end = nullptr;
  const long v = std::strtol(token.c_str(), &end, 10);
  if (end != token.c_str() + token.size() || errno == ERANGE || v < 0 || v > 1'000'000)
    line_error(file, line, "invalid class id \"" + token + "\"");
  return static_cast<int>(v);
}

Box parse_box(const std::vector<std::string>& f, const std::filesystem::path& file, std::size_t line) {
  Box b{parse_number(f[1], file, line), parse_number(f[2], file, line), parse_number(f[3], file, line),
        parse_number(f[4], file, line)};
  if (b.cx < 0.0 || b.cx > 1.0 || b.cy < 0.0 || b.cy > 1.0)
    line_error(file, line, "box center outside [0, 1]");
  if (!(b.w > 0.0 && b.w <= 1.0 && b.h > 0.0 && b.h <= 1.0))
    line_error(file, line, "box size outside (0, 1]");
  return b;
}

// Calls fn(fields, line_number) for every nonempty line of every .txt file.
template <typename Fn>
void for_each_record(const std::filesystem::path& dir, std::size_t expected_fields, Fn fn) {
  for (const auto& file : text_files(dir)) {
    std::ifstream in(file);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + file.string());
    std::string text;
    std::size_t line_no = 0;
    while (std::getline(in, text)) {
      ++line_no;
      std::istringstream ss(text);
      std::vector<std::string> fields;
      for (std::string tok; ss >> tok;) fields.push_back(tok);
      if (fields.empty()) continue;
      if (fields.size() != expected_fields)
        line_error(file, line_no, "expected " + std::to_string(expected_fields) + " fields, got " +
                                      std::to_string(fields.size()));
      fn(file, fields, line_no);
    }
  }
}

}  // namespace

std::vector<GroundTruth> load_labels(const std::filesystem::path& dir) {
  std::vector<GroundTruth> out;
  for_each_record(dir, 5, [&](const auto& file, const auto& f, std::size_t line) {
    out.push_back({file.stem().string(), parse_class(f[0], file, line), parse_box(f, file, line)});
  });
  return out;
}

std::vector<Detection> load_predictions(const std::filesystem::path& dir) {
  std::vector<Detection> out;
  for_each_record(dir, 6, [&](const auto& file, const auto& f, std::size_t line) {
    const double conf = parse_number(f[5], file, line);
    if (conf < 0.0 || conf > 1.0) line_error(file, line, "confidence outside [0, 1]");
    out.push_back({file.stem().string(), parse_class(f[0], file, line), parse_box(f, file, line), conf});
  });
  return out;
}

std::string eval_report_json(const EvalReport& report) {
  using ordered_json = nlohmann::ordered_json;
  auto curve_json = [](const PrCurve& c) {
    ordered_json pts = ordered_json::array();
    for (const auto& p : c.points) pts.push_back({p.recall, p.precision});
    return pts;
  };
  ordered_json j;
  j["iou_threshold"] = report.iou_threshold;
  j["interpolation"] = to_string(report.interpolation);
  j["mAP"] = report.map;
  j["num_images"] = report.num_images;
  j["classes"] = ordered_json::array();
  for (const auto& c : report.classes) {
    ordered_json row;
    row["class_id"] = c.class_id;
    row["num_gt"] = c.num_gt;
    row["num_det"] = c.num_det;
    row["tp"] = c.tp;
    row["fp"] = c.fp;
    row["ap"] = c.has_ap ? ordered_json(c.ap) : ordered_json(nullptr);
    row["curve"] = curve_json(c.curve);
    j["classes"].push_back(std::move(row));
  }
  j["pooled"] = {{"num_gt", report.pooled.num_gt}, {"curve", curve_json(report.pooled)}};
  return j.dump(2);
}

}  // namespace lrc
