#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "mcma/eval.hpp"

using namespace mcma;

namespace {

SegmentationMask mask(int w, int h, std::vector<std::uint8_t> labels) {
  SegmentationMask m(h, w);
  m.labels = std::move(labels);
  return m;
}

SegmentationMask random_mask(std::mt19937_64& rng, int w, int h, int classes) {
  std::uniform_int_distribution<int> d(0, classes - 1);
  SegmentationMask m(h, w);
  for (auto& v : m.labels) v = static_cast<std::uint8_t>(d(rng));
  return m;
}

// Per-class IoU from explicit set counting.
double miou_oracle(const SegmentationMask& p, const SegmentationMask& g, int classes) {
  double sum = 0;
  int present = 0;
  for (int k = 0; k < classes; ++k) {
    int inter = 0, uni = 0;
    for (std::size_t i = 0; i < p.labels.size(); ++i) {
      const bool a = p.labels[i] == k, b = g.labels[i] == k;
      inter += a && b;
      uni += a || b;
    }
    if (uni == 0) continue;
    sum += static_cast<double>(inter) / uni;
    ++present;
  }
  return sum / present;
}

}  // namespace

TEST_CASE("mIoU examples") {
  const auto gt = mask(4, 1, {0, 0, 1, 1});
  CHECK(eval::miou(gt, gt, 2).miou == 1.0);

  // Class 1 half right: IoU(1) = 1/2, IoU(0) = 2/3.
  const auto pred = mask(4, 1, {0, 0, 0, 1});
  const auto r = eval::miou(pred, gt, 2);
  CHECK(r.per_class[1] == doctest::Approx(0.5));
  CHECK(r.per_class[0] == doctest::Approx(2.0 / 3.0));

  // Class 2 absent from both masks is excluded, not counted as zero.
  const auto r3 = eval::miou(gt, gt, 3);
  CHECK(r3.miou == 1.0);
  CHECK(std::isnan(r3.per_class[2]));

  // 4x4 toy: gt has class 1 in the left half, prediction in the top half.
  SegmentationMask g(4, 4), p(4, 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      g.at(x, y) = x < 2;
      p.at(x, y) = y < 2;
    }
  }
  const auto toy = eval::miou(p, g, 2);
  CHECK(toy.per_class[0] == doctest::Approx(4.0 / 12.0));
  CHECK(toy.per_class[1] == doctest::Approx(4.0 / 12.0));

  CHECK_THROWS_AS(eval::miou(mask(2, 1, {0, 0}), gt, 2), ShapeError);
  CHECK_THROWS(eval::miou(mask(4, 1, {0, 0, 5, 1}), gt, 2));
}

TEST_CASE("mIoU against the set-counting oracle, symmetric") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 100; ++t) {
    const int classes = 2 + t % 4;
    const auto a = random_mask(rng, 8, 8, classes);
    const auto b = random_mask(rng, 8, 8, classes);
    const double m = eval::miou(a, b, classes).miou;
    CHECK(m == doctest::Approx(miou_oracle(a, b, classes)).epsilon(1e-12));
    CHECK(m == eval::miou(b, a, classes).miou);
    CHECK(m >= 0.0);
    CHECK(m <= 1.0);
  }
}

TEST_CASE("pooled IoU sums counts across frames") {
  const auto g1 = mask(2, 1, {1, 1}), p1 = mask(2, 1, {1, 0});
  const auto g2 = mask(2, 1, {0, 0}), p2 = mask(2, 1, {0, 0});
  eval::IoUAccumulator acc(2);
  acc.add(p1, g1);
  acc.add(p2, g2);
  CHECK(acc.frames() == 2);
  const auto r = acc.result();
  CHECK(r.per_class[1] == doctest::Approx(0.5));        // 1 / 2
  CHECK(r.per_class[0] == doctest::Approx(2.0 / 3.0));  // 2 / 3
}

TEST_CASE("false positive rate") {
  SegmentationMask gt(512, 640), pred(512, 640);
  CHECK(eval::fp_rate(pred, gt, 1) == 0.0);
  for (int i = 0; i < 3640; ++i) pred.labels[i * 90] = 1;
  CHECK(eval::false_positive_count(pred, gt, 1) == 3640);
  CHECK(eval::fp_rate(pred, gt, 1) == doctest::Approx(3640.0 / (640 * 512)));
  std::fill(pred.labels.begin(), pred.labels.end(), 1);
  CHECK(eval::fp_rate(pred, gt, 1) == 1.0);
  // Pixels that truly are class 1 are not false positives.
  std::fill(gt.labels.begin(), gt.labels.end(), 1);
  CHECK(eval::fp_rate(pred, gt, 1) == 0.0);
}

TEST_CASE("quantiles and motion partition") {
  const std::vector<double> m = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  CHECK(eval::quantile(m, 0.2) == doctest::Approx(2.8));
  CHECK(eval::quantile(m, 0.8) == doctest::Approx(8.2));
  CHECK(eval::quantile(m, 0.0) == 1.0);
  CHECK(eval::quantile(m, 1.0) == 10.0);
  CHECK_THROWS(eval::quantile({}, 0.5));

  const auto p = eval::motion_quantile_partition(m);
  CHECK(p.low == std::vector<std::size_t>{0, 1});
  CHECK(p.high == std::vector<std::size_t>{8, 9});
  CHECK(p.mid.size() == 6);
  CHECK_FALSE(p.degenerate);

  const auto flat = eval::motion_quantile_partition(std::vector<double>(7, 2.5));
  CHECK(flat.degenerate);
  CHECK(flat.low.size() == 7);
  CHECK(flat.high.size() == 7);
  CHECK(flat.mid.empty());

  // One outlier lands in high without dragging the others along.
  const auto o = eval::motion_quantile_partition({1, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 100});
  CHECK(std::find(o.high.begin(), o.high.end(), 9u) != o.high.end());
  CHECK(o.high.size() == 2);

  CHECK_THROWS(eval::motion_quantile_partition({1, 2, 3, 4}));
}

TEST_CASE("partition is a cover under random inputs") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(0.0, 10.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> m(5 + t % 40);
    for (auto& v : m) v = t % 7 == 0 ? std::round(d(rng)) : d(rng);
    const auto p = eval::motion_quantile_partition(m);
    std::vector<double> sorted = m;
    std::sort(sorted.begin(), sorted.end());
    const double h = (m.size() - 1) * 0.2;
    const double ql = sorted[static_cast<std::size_t>(h)] +
                      (h - std::floor(h)) *
                          (sorted[std::min<std::size_t>(static_cast<std::size_t>(h) + 1, m.size() - 1)] -
                           sorted[static_cast<std::size_t>(h)]);
    CHECK(p.low_threshold == doctest::Approx(ql).epsilon(1e-12));
    for (std::size_t i = 0; i < m.size(); ++i) {
      const bool lo = m[i] <= p.low_threshold, hi = m[i] >= p.high_threshold;
      CHECK((std::count(p.low.begin(), p.low.end(), i) == 1) == lo);
      CHECK((std::count(p.high.begin(), p.high.end(), i) == 1) == hi);
      CHECK((std::count(p.mid.begin(), p.mid.end(), i) == 1) == (!lo && !hi));
    }
  }
}

TEST_CASE("flow motion rescales to input pixels") {
  FlowField f(4, 4);
  std::fill(f.u.begin(), f.u.end(), 3.0f);
  std::fill(f.v.begin(), f.v.end(), 4.0f);
  CHECK(eval::flow_motion(f, 4) == doctest::Approx(5.0));
  CHECK(eval::flow_motion(f, 16) == doctest::Approx(20.0));
  std::vector<std::optional<FlowField>> flows = {f, std::nullopt};
  CHECK_THROWS_WITH(eval::motion_from_flows(flows, 4), doctest::Contains("frame 1"));
  flows.pop_back();
  CHECK(eval::motion_from_flows(flows, 4) == std::vector<double>{5.0});
}

TEST_CASE("evaluate_run reports subsets per method") {
  std::mt19937_64 rng(9);
  eval::EvalInput in;
  in.num_classes = 2;
  for (int i = 0; i < 10; ++i) {
    in.gts.push_back(random_mask(rng, 6, 6, 2));
    in.motion.push_back(i);
  }
  in.methods.push_back({"baseline", in.gts});
  std::vector<SegmentationMask> noisy;
  for (int i = 0; i < 10; ++i) noisy.push_back(random_mask(rng, 6, 6, 2));
  in.methods.push_back({"ema", noisy});
  in.methods.push_back({"copy", in.gts});

  eval::EvalOptions opt;
  opt.fp_class = 1;
  const auto rep = eval::evaluate_run(in, opt);
  REQUIRE(rep.rows.size() == 12);
  CHECK(rep.rows[0].subset == "all");
  CHECK(rep.rows[0].miou == 1.0);
  CHECK(rep.rows[1].subset == "low20");
  CHECK(rep.rows[1].frames == 2);
  CHECK(rep.rows[2].frames == 6);
  CHECK(rep.rows[3].frames == 2);
  CHECK(rep.rows[4].miou < 1.0);
  // Identical masks give identical rows.
  for (int s = 0; s < 4; ++s) CHECK(rep.rows[s].miou == rep.rows[8 + s].miou);

  const auto& log = rep.per_frame_jsonl;
  CHECK(std::count(log.begin(), log.end(), '\n') == 30);
  CHECK(log.find("\"fp_rate\"") != std::string::npos);
  CHECK(log.find("\"subset\":\"high20\"") != std::string::npos);

  const std::string csv = eval::report_csv(rep.rows);
  CHECK(csv.rfind("method,subset,miou\nbaseline,all,1.000000\n", 0) == 0);

  in.motion.pop_back();
  CHECK_THROWS(eval::evaluate_run(in));
}

TEST_CASE("per-video partition uses each video's own thresholds") {
  eval::EvalInput in;
  for (int i = 0; i < 10; ++i) {
    in.gts.push_back(SegmentationMask(2, 2));
    in.motion.push_back(i < 5 ? i : 100 + i);  // second video is uniformly fast
    in.video_ids.push_back(i < 5 ? 0 : 1);
  }
  in.methods.push_back({"m", in.gts});
  eval::EvalOptions opt;
  opt.per_video = true;
  const auto rep = eval::evaluate_run(in, opt);
  // Each video contributes its own low and high frames.
  CHECK(rep.partition.low == std::vector<std::size_t>{0, 5});
  CHECK(rep.partition.high == std::vector<std::size_t>{4, 9});
  const auto pooled = eval::evaluate_run(in);
  CHECK(pooled.partition.high == std::vector<std::size_t>{8, 9});
}
