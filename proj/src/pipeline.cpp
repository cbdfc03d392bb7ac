#include "mcma/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <functional>
#include <future>
#include <mutex>
#include <sstream>
#include <thread>

#include "mcma/fusion.hpp"
#include "mcma/io.hpp"

namespace mcma::pipeline {
namespace {

using Clock = std::chrono::steady_clock;

double micros_since(Clock::time_point start) {
  return std::chrono::duration<double, std::micro>(Clock::now() - start).count();
}

// Single background thread executing submitted tasks in order.
class Worker {
 public:
  Worker() : thread_([this] { loop(); }) {}
  ~Worker() {
    {
      std::lock_guard lock(mutex_);
      stop_ = true;
    }
    cv_.notify_one();
    thread_.join();
  }
  Worker(const Worker&) = delete;
  Worker& operator=(const Worker&) = delete;

  std::future<void> submit(std::function<void()> fn) {
    std::packaged_task<void()> task(std::move(fn));
    auto future = task.get_future();
    {
      std::lock_guard lock(mutex_);
      queue_.push_back(std::move(task));
    }
    cv_.notify_one();
    return future;
  }

 private:
  void loop() {
    for (;;) {
      std::packaged_task<void()> task;
      {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [this] { return stop_ || !queue_.empty(); });
        if (queue_.empty()) return;
        task = std::move(queue_.front());
        queue_.pop_front();
      }
      task();
    }
  }

  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<std::packaged_task<void()>> queue_;
  bool stop_ = false;
  std::thread thread_;
};

template <typename Fn>
auto guarded(std::int64_t frame_index, const char* stage, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(frame_index, stage, e.what());
  }
}

// Holds the recursive state and runs one step at a time. With a worker the
// flow estimate runs there while the calling thread encodes.
class Stepper {
 public:
  Stepper(const model::SegmentationModel& model, const flow::FlowEstimator& estimator,
          const PipelineConfig& cfg, const RunOptions& options, Worker* worker)
      : model_(model), estimator_(estimator), cfg_(cfg), options_(options), worker_(worker) {}

  void step(Frame frame, RunResult& out) {
    const auto start = Clock::now();
    StageTiming timing;
    timing.frame_index = frame.index;
    timing.mode = worker_ ? Executor::kParallel : Executor::kSequential;
    timing.flow_scale = cfg_.flow_scale;

    if (prev_ && (prev_->width != frame.width || prev_->height != frame.height)) {
      throw StageError(frame.index, "input",
                       "frame is " + std::to_string(frame.width) + "x" +
                           std::to_string(frame.height) + " but the sequence is " +
                           std::to_string(prev_->width) + "x" + std::to_string(prev_->height));
    }

    const bool with_flow = fusion::needs_flow(cfg_, state_.has_value());
    std::optional<FlowField> raw_flow;
    auto flow_stage = [&] {
      const auto t0 = Clock::now();
      if (options_.flow_delay.count() > 0) std::this_thread::sleep_for(options_.flow_delay);
      raw_flow = estimator_.estimate(*prev_, frame);
      timing.flow_us = micros_since(t0);
    };
    auto encode_stage = [&] {
      const auto t0 = Clock::now();
      if (options_.encode_delay.count() > 0) std::this_thread::sleep_for(options_.encode_delay);
      FeatureMap features = model_.encode(frame);
      timing.encode_us = micros_since(t0);
      return features;
    };

    FeatureMap current;
    if (with_flow && worker_ != nullptr) {
      std::future<void> pending = worker_->submit(flow_stage);
      try {
        current = encode_stage();
      } catch (const std::exception& e) {
        pending.wait();  // flow_stage references this frame's locals
        throw StageError(frame.index, "encode", e.what());
      }
      guarded(frame.index, "flow", [&] { pending.get(); });
    } else {
      if (with_flow) guarded(frame.index, "flow", flow_stage);
      current = guarded(frame.index, "encode", encode_stage);
    }

    FeatureMap fused;
    if (!state_) {
      fused = std::move(current);
    } else {
      if (!state_->same_shape(current)) {
        throw StageError(frame.index, "encode", "encoder output shape changed mid-sequence");
      }
      auto t0 = Clock::now();
      const FeatureMap aligned = guarded(frame.index, "warp", [&] {
        if (!raw_flow) return fusion::align_state(*state_, nullptr, cfg_);
        const FlowField grid = fusion::flow_on_feature_grid(*raw_flow, current.height,
                                                            current.width, cfg_.flip_flow_sign);
        return fusion::align_state(*state_, &grid, cfg_);
      });
      timing.warp_us = micros_since(t0);
      t0 = Clock::now();
      fused = guarded(frame.index, "fuse", [&] { return fusion::fuse(current, &aligned, cfg_); });
      timing.fuse_us = micros_since(t0);
    }

    const auto t0 = Clock::now();
    SegmentationMask mask = guarded(frame.index, "decode", [&] { return model_.decode(fused); });
    timing.decode_us = micros_since(t0);
    timing.total_us = micros_since(start);

    state_ = std::move(fused);
    out.masks.push_back(std::move(mask));
    out.timings.push_back(timing);
    if (options_.keep_flows) out.flows.push_back(std::move(raw_flow));
    prev_ = std::move(frame);
  }

 private:
  const model::SegmentationModel& model_;
  const flow::FlowEstimator& estimator_;
  const PipelineConfig& cfg_;
  const RunOptions& options_;
  Worker* worker_;
  std::optional<FeatureMap> state_;
  std::optional<Frame> prev_;
};

RunResult drive(FrameSource& frames, Stepper& stepper) {
  RunResult out;
  while (auto frame = frames.next()) stepper.step(std::move(*frame), out);
  if (out.masks.empty()) throw Error("the frame source yielded no frames");
  return out;
}

double mean_of(const std::vector<double>& xs) {
  double sum = 0.0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs, double mean) {
  double sum = 0.0;
  for (double x : xs) sum += (x - mean) * (x - mean);
  return std::sqrt(sum / static_cast<double>(xs.size() - 1));
}

}  // namespace

StageError::StageError(std::int64_t frame_index, std::string stage, const std::string& what)
    : Error("frame " + std::to_string(frame_index) + ", " + stage + " stage: " + what),
      frame_index_(frame_index),
      stage_(std::move(stage)) {}

std::optional<Frame> VectorSource::next() {
  if (pos_ >= frames_.size()) return std::nullopt;
  return frames_[pos_++];
}

DirectorySource::DirectorySource(const std::filesystem::path& dir) {
  files_ = io::list_files(dir, ".ppm");
  if (files_.empty()) files_ = io::list_files(dir, ".pgm");
  if (files_.empty()) throw Error("no .ppm or .pgm frames in " + dir.string());
}

std::optional<Frame> DirectorySource::next() {
  if (pos_ >= files_.size()) return std::nullopt;
  const auto& path = files_[pos_];
  const std::string stem = path.stem().string();
  const bool numeric = !stem.empty() && std::all_of(stem.begin(), stem.end(), ::isdigit);
  const std::int64_t index = numeric ? std::stoll(stem) : static_cast<std::int64_t>(pos_);
  ++pos_;
  try {
    return io::read_frame(path, index);
  } catch (const std::exception& e) {
    throw StageError(index, "read", e.what());
  }
}

RunResult run_sequential(FrameSource& frames, const model::SegmentationModel& model,
                         const flow::FlowEstimator& estimator, const PipelineConfig& cfg,
                         const RunOptions& options) {
  cfg.validate();
  Stepper stepper(model, estimator, cfg, options, nullptr);
  return drive(frames, stepper);
}

RunResult run_parallel(FrameSource& frames, const model::SegmentationModel& model,
                       const flow::FlowEstimator& estimator, const PipelineConfig& cfg,
                       const RunOptions& options) {
  cfg.validate();
  Worker worker;
  Stepper stepper(model, estimator, cfg, options, &worker);
  return drive(frames, stepper);
}

RunResult run(FrameSource& frames, const model::SegmentationModel& model,
              const flow::FlowEstimator& estimator, const PipelineConfig& cfg,
              const RunOptions& options) {
  return cfg.executor == Executor::kParallel
             ? run_parallel(frames, model, estimator, cfg, options)
             : run_sequential(frames, model, estimator, cfg, options);
}

BenchmarkSummary summarize(const std::vector<StageTiming>& timings) {
  if (timings.size() < 2) throw Error("benchmark report needs at least 2 timing samples");
  BenchmarkSummary summary;
  summary.mode = timings.front().mode;
  summary.flow_scale = timings.front().flow_scale;
  const std::pair<const char*, double StageTiming::*> columns[] = {
      {"flow", &StageTiming::flow_us},     {"encode", &StageTiming::encode_us},
      {"warp", &StageTiming::warp_us},     {"fuse", &StageTiming::fuse_us},
      {"decode", &StageTiming::decode_us}, {"total", &StageTiming::total_us},
  };
  for (const auto& [name, field] : columns) {
    std::vector<double> xs;
    xs.reserve(timings.size());
    for (const auto& t : timings) xs.push_back(t.*field);
    const double mean = mean_of(xs);
    summary.stages.push_back({name, mean, sample_std(xs, mean)});
  }
  const double total = summary.stages.back().mean_us;
  summary.achievable_hz = total > 0.0 ? 1e6 / total : 0.0;
  return summary;
}

std::string benchmark_report(const std::vector<StageTiming>& timings) {
  const BenchmarkSummary summary = summarize(timings);
  std::ostringstream out;
  out << "stage,mean_us,std_us,mode,flow_scale\n";
  for (const auto& s : summary.stages) {
    out << s.stage << ',' << s.mean_us << ',' << s.std_us << ',' << to_string(summary.mode)
        << ',' << flow_scale_to_real(summary.flow_scale) << '\n';
  }
  out << "achievable_hz," << summary.achievable_hz << '\n';
  return out.str();
}

std::string timings_csv(const std::vector<StageTiming>& timings) {
  std::ostringstream out;
  out << "frame,flow_us,encode_us,warp_us,fuse_us,decode_us,total_us,mode,flow_scale\n";
  for (const auto& t : timings) {
    out << t.frame_index << ',' << t.flow_us << ',' << t.encode_us << ',' << t.warp_us << ','
        << t.fuse_us << ',' << t.decode_us << ',' << t.total_us << ',' << to_string(t.mode)
        << ',' << flow_scale_to_real(t.flow_scale) << '\n';
  }
  return out.str();
}

}  // namespace mcma::pipeline
