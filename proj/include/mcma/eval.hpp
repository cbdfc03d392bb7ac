// Segmentation metrics and the motion-stratified evaluation report.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mcma/core.hpp"

namespace mcma::eval {

struct IoUResult {
  double miou = 0.0;
  /// NaN for classes absent from both prediction and ground truth; those
  /// are left out of the mean.
  std::vector<double> per_class;
};

IoUResult miou(const SegmentationMask& pred, const SegmentationMask& gt, int num_classes);

/// Sums intersections and unions over many frames; the mean is taken once
/// over the pooled counts.
class IoUAccumulator {
 public:
  explicit IoUAccumulator(int num_classes);
  void add(const SegmentationMask& pred, const SegmentationMask& gt);
  IoUResult result() const;
  std::size_t frames() const { return frames_; }

 private:
  std::vector<std::uint64_t> intersection_;
  std::vector<std::uint64_t> union_;
  std::size_t frames_ = 0;
};

/// Pixels predicted as `target_class` whose ground truth differs.
std::uint64_t false_positive_count(const SegmentationMask& pred, const SegmentationMask& gt,
                                   int target_class);
/// false_positive_count / pixel count.
double fp_rate(const SegmentationMask& pred, const SegmentationMask& gt, int target_class);

/// Empirical quantile with linear interpolation between order statistics
/// (position (n - 1) q).
double quantile(std::vector<double> values, double q);

struct MotionPartition {
  std::vector<std::size_t> low, mid, high;  // indices into the input
  double low_threshold = 0.0;
  double high_threshold = 0.0;
  /// Some frame is both low and high, e.g. all motions equal.
  bool degenerate = false;
};

/// low: motion <= q(low_q); high: motion >= q(high_q); mid: the rest.
MotionPartition motion_quantile_partition(const std::vector<double>& motion,
                                          double low_q = 0.2, double high_q = 0.8);

/// Mean flow length in input pixels for a flow computed at a coarser grid.
double flow_motion(const FlowField& flow, int input_width);

struct MethodMasks {
  std::string method;
  std::vector<SegmentationMask> masks;  // one per labeled frame
};

struct EvalInput {
  int num_classes = 2;
  std::vector<SegmentationMask> gts;  // one per labeled frame
  std::vector<double> motion;         // one per labeled frame
  std::vector<std::int64_t> frame_ids;  // optional, for the per-frame log
  std::vector<int> video_ids;           // optional, used with per_video
  std::vector<MethodMasks> methods;
};

struct EvalOptions {
  double low_q = 0.2;
  double high_q = 0.8;
  /// Quantile thresholds per video instead of over the whole run.
  bool per_video = false;
  /// Class for the fp_rate column of the per-frame log; -1 omits it.
  int fp_class = -1;
};

struct EvalRow {
  std::string method;
  std::string subset;  // all, low20, mid60, high20
  double miou = 0.0;   // NaN for an empty subset
  std::size_t frames = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  MotionPartition partition;  // over the run, or the union of per-video ones
  /// JSON lines, one per (method, frame).
  std::string per_frame_jsonl;
};

EvalReport evaluate_run(const EvalInput& input, const EvalOptions& options = {});

/// Motion per labeled frame from the flows the pipeline used; throws when
/// one is missing.
std::vector<double> motion_from_flows(const std::vector<std::optional<FlowField>>& flows,
                                      int input_width);

/// "method,subset,miou" rows.
std::string report_csv(const std::vector<EvalRow>& rows);

}  // namespace mcma::eval
