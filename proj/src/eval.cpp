#include "mcma/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mcma/flow.hpp"

namespace mcma::eval {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_same_dims(const SegmentationMask& a, const SegmentationMask& b) {
  if (a.width != b.width || a.height != b.height) {
    throw ShapeError("mask dimensions differ: " + std::to_string(a.width) + "x" +
                     std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                     std::to_string(b.height));
  }
}

IoUResult finish(const std::vector<std::uint64_t>& inter, const std::vector<std::uint64_t>& uni) {
  IoUResult r;
  r.per_class.assign(inter.size(), kNaN);
  double sum = 0.0;
  int present = 0;
  for (std::size_t k = 0; k < inter.size(); ++k) {
    if (uni[k] == 0) continue;
    r.per_class[k] = static_cast<double>(inter[k]) / static_cast<double>(uni[k]);
    sum += r.per_class[k];
    ++present;
  }
  r.miou = present > 0 ? sum / present : kNaN;
  return r;
}

}  // namespace

IoUAccumulator::IoUAccumulator(int num_classes)
    : intersection_(static_cast<std::size_t>(num_classes), 0),
      union_(static_cast<std::size_t>(num_classes), 0) {
  if (num_classes < 1 || num_classes > 256) throw Error("num_classes must lie in [1, 256]");
}

void IoUAccumulator::add(const SegmentationMask& pred, const SegmentationMask& gt) {
  check_same_dims(pred, gt);
  const int classes = static_cast<int>(intersection_.size());
  pred.validate(classes);
  gt.validate(classes);
  std::vector<std::uint64_t> pred_count(classes, 0), gt_count(classes, 0), both(classes, 0);
  for (std::size_t i = 0; i < pred.labels.size(); ++i) {
    const auto p = pred.labels[i];
    const auto g = gt.labels[i];
    ++pred_count[p];
    ++gt_count[g];
    if (p == g) ++both[p];
  }
  for (int k = 0; k < classes; ++k) {
    intersection_[k] += both[k];
    union_[k] += pred_count[k] + gt_count[k] - both[k];
  }
  ++frames_;
}

IoUResult IoUAccumulator::result() const { return finish(intersection_, union_); }

IoUResult miou(const SegmentationMask& pred, const SegmentationMask& gt, int num_classes) {
  IoUAccumulator acc(num_classes);
  acc.add(pred, gt);
  return acc.result();
}

std::uint64_t false_positive_count(const SegmentationMask& pred, const SegmentationMask& gt,
                                   int target_class) {
  check_same_dims(pred, gt);
  std::uint64_t count = 0;
  for (std::size_t i = 0; i < pred.labels.size(); ++i) {
    count += pred.labels[i] == target_class && gt.labels[i] != target_class;
  }
  return count;
}

double fp_rate(const SegmentationMask& pred, const SegmentationMask& gt, int target_class) {
  if (pred.size() == 0) throw ShapeError("fp_rate of an empty mask");
  return static_cast<double>(false_positive_count(pred, gt, target_class)) /
         static_cast<double>(pred.size());
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw Error("quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

MotionPartition motion_quantile_partition(const std::vector<double>& motion, double low_q,
                                          double high_q) {
  if (motion.size() < 5) {
    throw Error("motion quantile partition needs at least 5 frames, got " +
                std::to_string(motion.size()));
  }
  if (!(low_q <= high_q)) throw Error("low quantile must not exceed the high quantile");
  MotionPartition p;
  p.low_threshold = quantile(motion, low_q);
  p.high_threshold = quantile(motion, high_q);
  for (std::size_t i = 0; i < motion.size(); ++i) {
    const bool low = motion[i] <= p.low_threshold;
    const bool high = motion[i] >= p.high_threshold;
    if (low) p.low.push_back(i);
    if (high) p.high.push_back(i);
    if (!low && !high) p.mid.push_back(i);
    p.degenerate = p.degenerate || (low && high);
  }
  return p;
}

double flow_motion(const FlowField& flow, int input_width) {
  if (flow.width <= 0) throw ShapeError("flow_motion of an empty field");
  return flow::mean_flow_magnitude(flow) * static_cast<double>(input_width) /
         static_cast<double>(flow.width);
}

std::vector<double> motion_from_flows(const std::vector<std::optional<FlowField>>& flows,
                                      int input_width) {
  std::vector<double> out;
  out.reserve(flows.size());
  for (std::size_t i = 0; i < flows.size(); ++i) {
    if (!flows[i]) throw Error("missing flow for labeled frame " + std::to_string(i));
    out.push_back(flow_motion(*flows[i], input_width));
  }
  return out;
}

EvalReport evaluate_run(const EvalInput& input, const EvalOptions& options) {
  const std::size_t n = input.gts.size();
  if (input.motion.size() != n) {
    throw Error("evaluate_run: " + std::to_string(input.motion.size()) +
                " motion values for " + std::to_string(n) + " labeled frames");
  }
  if (!input.frame_ids.empty() && input.frame_ids.size() != n) {
    throw Error("evaluate_run: frame_ids length mismatch");
  }
  for (const auto& m : input.methods) {
    if (m.masks.size() != n) {
      throw Error("evaluate_run: method '" + m.method + "' has " +
                  std::to_string(m.masks.size()) + " masks for " + std::to_string(n) +
                  " labeled frames");
    }
  }

  EvalReport report;
  if (options.per_video) {
    if (input.video_ids.size() != n) throw Error("evaluate_run: per_video needs video_ids");
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < n; ++i) groups[input.video_ids[i]].push_back(i);
    for (const auto& [video, members] : groups) {
      std::vector<double> m;
      for (auto i : members) m.push_back(input.motion[i]);
      const MotionPartition part = motion_quantile_partition(m, options.low_q, options.high_q);
      for (auto i : part.low) report.partition.low.push_back(members[i]);
      for (auto i : part.mid) report.partition.mid.push_back(members[i]);
      for (auto i : part.high) report.partition.high.push_back(members[i]);
      report.partition.degenerate = report.partition.degenerate || part.degenerate;
    }
    for (auto* set : {&report.partition.low, &report.partition.mid, &report.partition.high}) {
      std::sort(set->begin(), set->end());
    }
    report.partition.low_threshold = kNaN;
    report.partition.high_threshold = kNaN;
  } else {
    report.partition = motion_quantile_partition(input.motion, options.low_q, options.high_q);
  }

  std::vector<std::string> subset_of(n, "mid60");
  for (auto i : report.partition.low) subset_of[i] = "low20";
  for (auto i : report.partition.high) subset_of[i] = "high20";

  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  const std::pair<const char*, const std::vector<std::size_t>*> subsets[] = {
      {"all", &all},
      {"low20", &report.partition.low},
      {"mid60", &report.partition.mid},
      {"high20", &report.partition.high},
  };

  std::ostringstream jsonl;
  for (const auto& m : input.methods) {
    for (const auto& [name, members] : subsets) {
      IoUAccumulator acc(input.num_classes);
      for (auto i : *members) acc.add(m.masks[i], input.gts[i]);
      report.rows.push_back({m.method, name, members->empty() ? kNaN : acc.result().miou,
                             members->size()});
    }
    for (std::size_t i = 0; i < n; ++i) {
      const IoUResult r = miou(m.masks[i], input.gts[i], input.num_classes);
      nlohmann::json line = {
          {"method", m.method},
          {"frame", input.frame_ids.empty() ? static_cast<std::int64_t>(i) : input.frame_ids[i]},
          {"motion", input.motion[i]},
          {"subset", subset_of[i]},
          {"miou", r.miou},
      };
      nlohmann::json per_class = nlohmann::json::array();
      for (double v : r.per_class) per_class.push_back(std::isnan(v) ? nlohmann::json() : nlohmann::json(v));
      line["iou"] = per_class;
      if (options.fp_class >= 0) line["fp_rate"] = fp_rate(m.masks[i], input.gts[i], options.fp_class);
      jsonl << line.dump() << '\n';
    }
  }
  report.per_frame_jsonl = jsonl.str();
  return report;
}

std::string report_csv(const std::vector<EvalRow>& rows) {
  std::ostringstream out;
  out << "method,subset,miou\n" << std::fixed << std::setprecision(6);
  for (const auto& r : rows) {
    out << r.method << ',' << r.subset << ',';
    if (std::isnan(r.miou)) out << "nan";
    else out << r.miou;
    out << '\n';
  }
  return out.str();
}

}  // namespace mcma::eval
