#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace lrc {

/// Image-relative center box; all fields normalized to [0, 1].
struct Box {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
};

struct GroundTruth {
  std::string image_id;
  int class_id = 0;
  Box box;
};

struct Detection {
  std::string image_id;
  int class_id = 0;
  Box box;
  double confidence = 0.0;
};

double iou(const Box& a, const Box& b);

struct MatchResult {
  std::size_t detection = 0;  // index into the input detections
  bool true_positive = false;
  std::ptrdiff_t ground_truth = -1;  // matched gt index, -1 for FP
};

/// Greedy matching in descending confidence order (stable on ties). Returns
/// one entry per detection, in that processing order.
std::vector<MatchResult> match_detections(const std::vector<Detection>& dets,
                                          const std::vector<GroundTruth>& gts,
                                          double iou_threshold);

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

struct PrCurve {
  int class_id = -1;  // -1 for the all-class pooled curve
  std::int64_t num_gt = 0;
  std::vector<PrPoint> points;
};

PrCurve pr_curve(const std::vector<bool>& tp_flags, std::int64_t num_gt);

enum class Interpolation { AllPoints, ElevenPoint };

const char* to_string(Interpolation interp);

double average_precision(const PrCurve& curve, Interpolation interp = Interpolation::AllPoints);

struct ClassEval {
  int class_id = 0;
  std::int64_t num_gt = 0;
  std::int64_t num_det = 0;
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  bool has_ap = false;  // false when the class has no ground truth
  double ap = 0.0;
  PrCurve curve;
};

struct EvalReport {
  double iou_threshold = 0.5;
  Interpolation interpolation = Interpolation::AllPoints;
  std::vector<ClassEval> classes;  // ascending class id
  double map = 0.0;
  PrCurve pooled;
  std::int64_t num_images = 0;
};

EvalReport evaluate(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                    double iou_threshold = 0.5,
                    Interpolation interp = Interpolation::AllPoints);

std::vector<GroundTruth> load_labels(const std::filesystem::path& dir);
std::vector<Detection> load_predictions(const std::filesystem::path& dir);

std::string eval_report_json(const EvalReport& report);

}  // namespace lrc
