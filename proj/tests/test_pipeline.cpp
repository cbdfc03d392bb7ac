#include <random>
#include <sstream>

#include "doctest.h"
#include "mcma/io.hpp"
#include "mcma/pipeline.hpp"
#include "mcma/synth.hpp"
#include "support.hpp"

using namespace mcma;
using namespace std::chrono_literals;

namespace {

synth::SceneSpec scene(int frames, std::uint64_t seed = 1) {
  synth::SceneSpec s;
  s.width = 64;
  s.height = 48;
  s.frames = frames;
  s.seed = seed;
  s.label_noise_rate = 0.02;
  synth::SceneObject a;
  a.x = 20;
  a.y = 20;
  a.radius = 10;
  a.vx = 2;
  a.vy = 1;
  s.objects.push_back(a);
  return s;
}

// Fails on one chosen frame.
class FailingEstimator final : public flow::FlowEstimator {
 public:
  explicit FailingEstimator(std::int64_t bad) : bad_(bad) {}
  FlowField estimate(const Frame& prev, const Frame& curr) const override {
    if (curr.index == bad_) throw Error("estimator exploded");
    return flow::estimate_flow(prev, curr);
  }

 private:
  std::int64_t bad_;
};

pipeline::StageTiming timing(double total) {
  pipeline::StageTiming t;
  t.total_us = total;
  return t;
}

}  // namespace

TEST_CASE("single frame yields the baseline mask") {
  const auto spec = scene(1);
  const auto seq = synth::generate(spec);
  const model::SegmentationModel model(synth::reference_model(spec));
  const flow::FarnebackEstimator est;
  for (Executor ex : {Executor::kSequential, Executor::kParallel}) {
    PipelineConfig cfg;
    cfg.executor = ex;
    pipeline::VectorSource src(seq.frames);
    const auto r = pipeline::run(src, model, est, cfg);
    REQUIRE(r.masks.size() == 1);
    CHECK(r.masks[0] == model.decode(model.encode(seq.frames[0])));
  }
}

TEST_CASE("100 frames give 100 masks and timing rows in order") {
  const auto spec = scene(100);
  const auto seq = synth::generate(spec);
  const model::SegmentationModel model(synth::reference_model(spec));
  const flow::FarnebackEstimator est({}, FlowScale::kHalf);
  pipeline::VectorSource src(seq.frames);
  pipeline::RunOptions opts;
  opts.keep_flows = true;
  const auto r = pipeline::run_sequential(src, model, est, PipelineConfig{}, opts);
  CHECK(r.masks.size() == 100);
  REQUIRE(r.timings.size() == 100);
  REQUIRE(r.flows.size() == 100);
  CHECK_FALSE(r.flows[0].has_value());
  CHECK(r.flows[1]->width == 32);  // estimator resolution
  for (int j = 0; j < 100; ++j) CHECK(r.timings[j].frame_index == j);
}

TEST_CASE("alpha = 1 equals frame-wise inference") {
  const auto spec = scene(15);
  const auto seq = synth::generate(spec);
  const model::SegmentationModel model(synth::reference_model(spec));
  const flow::FarnebackEstimator est;
  PipelineConfig cfg;
  cfg.alpha = 1.0;
  pipeline::VectorSource src(seq.frames);
  const auto r = pipeline::run_parallel(src, model, est, cfg);
  for (std::size_t j = 0; j < seq.frames.size(); ++j) {
    CHECK(r.masks[j] == model.decode(model.encode(seq.frames[j])));
  }
}

TEST_CASE("parallel and sequential executors agree bit-exactly") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> alpha(0.05, 1.0), lambda(0.0, 3.0);
  for (int trial = 0; trial < 6; ++trial) {
    const auto spec = scene(trial == 0 ? 50 : 12, 100 + trial);
    const auto seq = synth::generate(spec);
    auto ms = synth::reference_model(spec);
    ms.noise_std = trial % 2 ? 0.05 : 0.0;
    const model::SegmentationModel model(ms);
    for (Method m : {Method::kBaseline, Method::kEma, Method::kMcma}) {
      PipelineConfig cfg;
      cfg.method = m;
      cfg.alpha = alpha(rng);
      cfg.lambda = lambda(rng);
      cfg.flow_scale = trial % 3 == 0 ? FlowScale::kFull : FlowScale::kHalf;
      const flow::FarnebackEstimator est({}, cfg.flow_scale);
      pipeline::VectorSource a(seq.frames), b(seq.frames);
      const auto seq_run = pipeline::run_sequential(a, model, est, cfg);
      const auto par_run = pipeline::run_parallel(b, model, est, cfg);
      CHECK(seq_run.masks == par_run.masks);
    }
  }
}

TEST_CASE("flow and encode overlap in the parallel executor") {
  const auto spec = scene(6);
  const auto seq = synth::generate(spec);
  const model::SegmentationModel model(synth::reference_model(spec));
  const flow::FarnebackEstimator est({}, FlowScale::kHalf);
  pipeline::RunOptions opts;
  opts.flow_delay = 10ms;
  opts.encode_delay = 10ms;
  pipeline::VectorSource a(seq.frames), b(seq.frames);
  const auto s = pipeline::run_sequential(a, model, est, PipelineConfig{}, opts);
  const auto p = pipeline::run_parallel(b, model, est, PipelineConfig{}, opts);
  for (std::size_t j = 1; j < seq.frames.size(); ++j) {
    CHECK(s.timings[j].total_us > 20000.0);
    CHECK(p.timings[j].total_us < 14000.0);
    const auto& t = p.timings[j];
    CHECK(t.total_us >= std::max(t.flow_us, t.encode_us) + t.warp_us + t.fuse_us + t.decode_us -
                            50.0);
    const auto& q = s.timings[j];
    CHECK(q.total_us >= q.flow_us + q.encode_us + q.warp_us + q.fuse_us + q.decode_us - 50.0);
    CHECK(t.mode == Executor::kParallel);
  }
}

TEST_CASE("stage failures carry the frame index") {
  const auto spec = scene(8);
  const auto seq = synth::generate(spec);
  const model::SegmentationModel model(synth::reference_model(spec));
  const FailingEstimator est(5);
  for (Executor ex : {Executor::kSequential, Executor::kParallel}) {
    PipelineConfig cfg;
    cfg.executor = ex;
    pipeline::VectorSource src(seq.frames);
    try {
      pipeline::run(src, model, est, cfg);
      FAIL("expected a stage error");
    } catch (const pipeline::StageError& e) {
      CHECK(e.frame_index() == 5);
      CHECK(e.stage() == "flow");
      CHECK(std::string(e.what()).find("frame 5") != std::string::npos);
    }
  }

  // Encoder failure: the feature file for frame 3 is missing.
  const auto dir = testing::temp_dir("pipeline_features");
  for (int j : {0, 1, 2, 4}) io::write_features(FeatureMap(2, 12, 16), model::feature_file(dir, j));
  model::ModelSpec files;
  files.kind = ModelKind::kFeatureFiles;
  files.num_classes = 2;
  files.feature_dir = dir;
  const model::SegmentationModel replay(files);
  const flow::FarnebackEstimator real;
  for (Executor ex : {Executor::kSequential, Executor::kParallel}) {
    PipelineConfig cfg;
    cfg.executor = ex;
    pipeline::VectorSource src(seq.frames);
    try {
      pipeline::run(src, replay, real, cfg);
      FAIL("expected a stage error");
    } catch (const pipeline::StageError& e) {
      CHECK(e.frame_index() == 3);
      CHECK(e.stage() == "encode");
    }
  }
}

TEST_CASE("a size change mid-sequence is an error") {
  const auto spec = scene(3);
  auto frames = synth::generate(spec).frames;
  frames.push_back(Frame(32, 24, 3, 3));
  const model::SegmentationModel model(synth::reference_model(spec));
  const flow::FarnebackEstimator est;
  pipeline::VectorSource src(frames);
  CHECK_THROWS_AS(pipeline::run_sequential(src, model, est, PipelineConfig{}),
                  pipeline::StageError);
  std::vector<Frame> none;
  pipeline::VectorSource empty(none);
  CHECK_THROWS(pipeline::run_sequential(empty, model, est, PipelineConfig{}));
}

TEST_CASE("directory source reads numbered frames") {
  const auto spec = scene(4);
  const auto seq = synth::generate(spec);
  const auto dir = testing::temp_dir("pipeline_dir");
  for (const auto& f : seq.frames) {
    io::write_frame(f, dir / (io::frame_stem(f.index + 10) + ".ppm"));
  }
  pipeline::DirectorySource src(dir);
  CHECK(src.size() == 4);
  std::int64_t expect = 10;
  while (auto f = src.next()) {
    CHECK(f->index == expect);
    CHECK(f->same_pixels(seq.frames[expect - 10]));
    ++expect;
  }
  CHECK_THROWS(pipeline::DirectorySource(testing::temp_dir("pipeline_empty")));
}

TEST_CASE("benchmark summary statistics") {
  std::vector<pipeline::StageTiming> constant(5, timing(1000.0));
  auto s = pipeline::summarize(constant);
  CHECK(s.stages.back().stage == "total");
  CHECK(s.stages.back().mean_us == 1000.0);
  CHECK(s.stages.back().std_us == 0.0);
  CHECK(s.achievable_hz == doctest::Approx(1000.0));

  s = pipeline::summarize({timing(900.0), timing(1100.0)});
  CHECK(s.stages.back().mean_us == doctest::Approx(1000.0));
  CHECK(s.stages.back().std_us == doctest::Approx(141.4213562));

  CHECK_THROWS(pipeline::summarize({}));
  CHECK_THROWS(pipeline::summarize({timing(1.0)}));

  const std::string report = pipeline::benchmark_report(constant);
  std::istringstream lines(report);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "stage,mean_us,std_us,mode,flow_scale");
  int rows = 0;
  std::string last;
  while (std::getline(lines, line)) {
    ++rows;
    last = line;
  }
  CHECK(rows == 7);
  CHECK(last == "achievable_hz,1000");
}
