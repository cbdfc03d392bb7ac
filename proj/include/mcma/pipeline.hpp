// Sequence orchestration over a frame stream.
//
// Both executors run the same stage functions in the same order of data
// dependencies and therefore produce bit-identical masks. The parallel
// executor overlaps optical flow for (x_{j-1}, x_j) with encoding of x_j;
// everything after that is strictly ordered by the recursion on the state.
#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mcma/core.hpp"
#include "mcma/flow.hpp"
#include "mcma/model.hpp"

namespace mcma::pipeline {

/// Wall-clock microseconds per stage for one frame.
struct StageTiming {
  std::int64_t frame_index = 0;
  double flow_us = 0.0;
  double encode_us = 0.0;
  double warp_us = 0.0;
  double fuse_us = 0.0;
  double decode_us = 0.0;
  double total_us = 0.0;
  Executor mode = Executor::kSequential;
  FlowScale flow_scale = FlowScale::kFull;
};

/// A stage failed; carries the frame being processed.
class StageError : public Error {
 public:
  StageError(std::int64_t frame_index, std::string stage, const std::string& what);
  std::int64_t frame_index() const { return frame_index_; }
  const std::string& stage() const { return stage_; }

 private:
  std::int64_t frame_index_;
  std::string stage_;
};

/// Produces frames in sequence order; nullopt ends the stream.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual std::optional<Frame> next() = 0;
};

class VectorSource final : public FrameSource {
 public:
  explicit VectorSource(const std::vector<Frame>& frames) : frames_(frames) {}
  std::optional<Frame> next() override;

 private:
  const std::vector<Frame>& frames_;
  std::size_t pos_ = 0;
};

/// Reads NNNNNN.ppm (or .pgm) files in name order. The frame index is the
/// numeric file stem.
class DirectorySource final : public FrameSource {
 public:
  explicit DirectorySource(const std::filesystem::path& dir);
  std::optional<Frame> next() override;
  std::size_t size() const { return files_.size(); }

 private:
  std::vector<std::filesystem::path> files_;
  std::size_t pos_ = 0;
};

struct RunOptions {
  /// Artificial stage latency, used to make scheduling assertions
  /// independent of the host.
  std::chrono::microseconds flow_delay{0};
  std::chrono::microseconds encode_delay{0};
  /// Keep the per-frame flow (estimator resolution) in the result.
  bool keep_flows = false;
};

struct RunResult {
  std::vector<SegmentationMask> masks;
  std::vector<StageTiming> timings;
  /// Per frame when keep_flows is set; empty entries where no flow was computed.
  std::vector<std::optional<FlowField>> flows;
};

RunResult run_sequential(FrameSource& frames, const model::SegmentationModel& model,
                         const flow::FlowEstimator& estimator, const PipelineConfig& cfg,
                         const RunOptions& options = {});

RunResult run_parallel(FrameSource& frames, const model::SegmentationModel& model,
                       const flow::FlowEstimator& estimator, const PipelineConfig& cfg,
                       const RunOptions& options = {});

/// Dispatches on cfg.executor.
RunResult run(FrameSource& frames, const model::SegmentationModel& model,
              const flow::FlowEstimator& estimator, const PipelineConfig& cfg,
              const RunOptions& options = {});

struct StageStats {
  std::string stage;
  double mean_us = 0.0;
  double std_us = 0.0;  // sample standard deviation
};

struct BenchmarkSummary {
  std::vector<StageStats> stages;  // flow, encode, warp, fuse, decode, total
  Executor mode = Executor::kSequential;
  FlowScale flow_scale = FlowScale::kFull;
  double achievable_hz = 0.0;  // 1 / mean total
};

BenchmarkSummary summarize(const std::vector<StageTiming>& timings);

/// CSV with header "stage,mean_us,std_us,mode,flow_scale", one row per stage,
/// then an "achievable_hz,<value>" line.
std::string benchmark_report(const std::vector<StageTiming>& timings);

/// Per-frame timings as CSV.
std::string timings_csv(const std::vector<StageTiming>& timings);

}  // namespace mcma::pipeline
