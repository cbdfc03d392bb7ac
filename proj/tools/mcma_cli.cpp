// Command-line front end: generate / run / sweep / bench / eval.
//
// Exit codes: 0 success, 1 runtime failure, 2 bad arguments.

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "mcma/eval.hpp"
#include "mcma/io.hpp"
#include "mcma/pipeline.hpp"
#include "mcma/synth.hpp"

namespace fs = std::filesystem;
using namespace mcma;

namespace {

// Thrown for argument combinations CLI11 cannot check on its own.
struct UsageError : Error {
  using Error::Error;
};

struct PipelineArgs {
  std::string mode = "mcma";
  double alpha = 0.1;
  double lambda = 2.0;
  std::string flow_scale = "1";
  std::string executor = "seq";
  bool flip_flow_sign = false;
  flow::FlowParams flow;
  std::string model_config;
};

void add_model_flag(CLI::App* cmd, PipelineArgs& a) {
  cmd->add_option("--model-config", a.model_config,
                  "Model description (default: model.cfg next to the frames directory)");
}

void add_flow_flags(CLI::App* cmd, PipelineArgs& a) {
  cmd->add_option("--flow-scale", a.flow_scale, "Flow resolution relative to the input")
      ->check(CLI::IsMember({"1", "0.5", "0.25"}))
      ->capture_default_str();
  cmd->add_flag("--flip-flow-sign", a.flip_flow_sign, "Negate the flow before warping");
  cmd->add_option("--flow-levels", a.flow.pyramid_levels)->capture_default_str();
  cmd->add_option("--flow-pyr-scale", a.flow.pyramid_scale)->capture_default_str();
  cmd->add_option("--flow-window", a.flow.window_size)->capture_default_str();
  cmd->add_option("--flow-iterations", a.flow.iterations)->capture_default_str();
  cmd->add_option("--flow-poly-n", a.flow.poly_n)->capture_default_str();
  cmd->add_option("--flow-poly-sigma", a.flow.poly_sigma)->capture_default_str();
}

void add_pipeline_flags(CLI::App* cmd, PipelineArgs& a) {
  cmd->add_option("--mode", a.mode)
      ->check(CLI::IsMember({"baseline", "ema", "mcma"}))
      ->capture_default_str();
  cmd->add_option("--alpha", a.alpha, "Weight of the current frame, in (0, 1]")
      ->capture_default_str();
  cmd->add_option("--lambda", a.lambda, "Flow scaling before warping")->capture_default_str();
  cmd->add_option("--executor", a.executor)
      ->check(CLI::IsMember({"seq", "par"}))
      ->capture_default_str();
  add_flow_flags(cmd, a);
  add_model_flag(cmd, a);
}

PipelineConfig make_config(const PipelineArgs& a) {
  PipelineConfig cfg;
  try {
    cfg.method = method_from_string(a.mode);
    cfg.alpha = a.alpha;
    cfg.lambda = a.lambda;
    cfg.flow_scale = flow_scale_from_real(std::stod(a.flow_scale));
    cfg.executor = executor_from_string(a.executor);
    cfg.flip_flow_sign = a.flip_flow_sign;
    cfg.validate();
    a.flow.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

model::ModelSpec load_model(const PipelineArgs& a, const fs::path& frames_dir) {
  fs::path path = a.model_config;
  if (path.empty()) {
    path = fs::absolute(frames_dir).lexically_normal().parent_path() / "model.cfg";
    if (!fs::exists(path)) {
      throw UsageError("no --model-config given and " + path.string() + " does not exist");
    }
  }
  return model::load_model_config(path);
}

std::vector<Frame> load_frames(const fs::path& dir, int limit = 0) {
  pipeline::DirectorySource source(dir);
  std::vector<Frame> frames;
  while (auto f = source.next()) {
    frames.push_back(std::move(*f));
    if (limit > 0 && static_cast<int>(frames.size()) >= limit) break;
  }
  return frames;
}

std::int64_t stem_index(const fs::path& p) {
  const std::string stem = p.stem().string();
  try {
    std::size_t used = 0;
    const long long v = std::stoll(stem, &used);
    if (used == stem.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error("file name is not a frame index: " + p.string());
}

std::map<std::int64_t, fs::path> indexed_files(const fs::path& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::map<std::int64_t, fs::path> out;
  for (const auto& p : io::list_files(dir, ext)) out[stem_index(p)] = p;
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  io::write_file(path, io::Bytes(text.begin(), text.end()));
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw UsageError("bad number in list: '" + tok + "'");
    }
  }
  if (out.empty()) throw UsageError("empty list");
  return out;
}

// Flow at the input resolution, so downstream motion statistics are in
// input pixels regardless of the scale the estimator ran at.
FlowField to_input_grid(const FlowField& flow, int height, int width) {
  if (flow.height == height && flow.width == width) return flow;
  return flow::resize_flow(flow, height, width);
}

// ---------------------------------------------------------------------------

int cmd_generate(const std::string& config, const fs::path& out, std::optional<std::uint64_t> seed,
                 int stride) {
  synth::SceneSpec spec = synth::load_scene(config);
  if (seed) spec.seed = *seed;
  const synth::Sequence seq = synth::generate(spec);
  synth::write_dataset(seq, out);
  write_text(out / "scene.cfg", synth::format_scene(spec));
  write_text(out / "model.cfg", model::format_model_config(synth::reference_model(spec, stride)));
  std::cout << "wrote " << seq.frames.size() << " frames to " << out.string() << '\n';
  return 0;
}

int cmd_run(const PipelineArgs& a, const fs::path& frames_dir, const fs::path& out) {
  const PipelineConfig cfg = make_config(a);
  const model::SegmentationModel model(load_model(a, frames_dir));
  const flow::FarnebackEstimator estimator(a.flow, cfg.flow_scale);
  pipeline::DirectorySource source(frames_dir);
  pipeline::RunOptions options;
  options.keep_flows = true;
  const auto result = pipeline::run(source, model, estimator, cfg, options);
  for (std::size_t i = 0; i < result.masks.size(); ++i) {
    const auto& mask = result.masks[i];
    const std::string stem = io::frame_stem(result.timings[i].frame_index);
    io::write_mask(mask, out / "masks" / (stem + ".pgm"));
    if (result.flows[i]) {
      io::write_flow(to_input_grid(*result.flows[i], mask.height, mask.width),
                     out / "flow" / (stem + ".mcfl"));
    }
  }
  write_text(out / "timings.csv", pipeline::timings_csv(result.timings));
  std::cout << "processed " << result.masks.size() << " frames into " << out.string() << '\n';
  return 0;
}

int cmd_sweep(PipelineArgs a, const fs::path& frames_dir, const fs::path& gt_dir,
              const std::string& alphas_arg, const std::string& lambdas_arg,
              const fs::path& out) {
  const PipelineConfig base = make_config(a);
  const model::SegmentationModel model(load_model(a, frames_dir));
  const std::vector<Frame> frames = load_frames(frames_dir);
  if (frames.size() < 6) throw Error("sweep needs at least 6 frames");

  std::vector<double> alphas;
  if (alphas_arg.empty()) {
    for (int i = 0; i <= 16; ++i) alphas.push_back(std::round((0.1 + 0.05 * i) * 100.0) / 100.0);
  } else {
    alphas = parse_list(alphas_arg);
  }
  const std::vector<double> lambdas = lambdas_arg.empty() ? std::vector<double>{a.lambda}
                                                          : parse_list(lambdas_arg);
  for (double al : alphas) {
    if (!(al > 0.0 && al <= 1.0)) throw UsageError("alpha values must lie in (0, 1]");
  }
  for (double l : lambdas) {
    if (!(l >= 0.0)) throw UsageError("lambda values must be >= 0");
  }

  // Flow does not depend on alpha or lambda: estimate once and replay.
  const flow::FarnebackEstimator estimator(a.flow, base.flow_scale);
  std::map<std::int64_t, FlowField> flows;
  for (std::size_t i = 1; i < frames.size(); ++i) {
    try {
      flows[frames[i].index] = estimator.estimate(frames[i - 1], frames[i]);
    } catch (const std::exception& e) {
      throw pipeline::StageError(frames[i].index, "flow", e.what());
    }
  }
  const flow::OracleEstimator replay(flows);

  const auto gt_files = indexed_files(gt_dir, ".pgm");
  std::vector<std::size_t> labeled;  // positions in `frames`
  eval::EvalInput base_input;
  base_input.num_classes = model.num_classes();
  for (std::size_t i = 1; i < frames.size(); ++i) {
    const auto it = gt_files.find(frames[i].index);
    if (it == gt_files.end()) continue;
    labeled.push_back(i);
    base_input.gts.push_back(io::read_mask(it->second));
    base_input.motion.push_back(eval::flow_motion(flows.at(frames[i].index), frames[i].width));
    base_input.frame_ids.push_back(frames[i].index);
  }
  if (labeled.size() < 5) throw Error("sweep needs ground truth for at least 5 frames after the first");

  auto masks_for = [&](const PipelineConfig& cfg) {
    pipeline::VectorSource source(frames);
    auto result = pipeline::run(source, model, replay, cfg);
    std::vector<SegmentationMask> picked;
    for (auto i : labeled) picked.push_back(std::move(result.masks[i]));
    return picked;
  };
  auto fmt = [](double v) {
    std::ostringstream s;
    s << v;
    return s.str();
  };

  std::ostringstream csv;
  csv << "alpha,lambda,method,subset,miou\n";
  auto emit = [&](double alpha, const std::string& lambda, const std::string& method,
                  std::vector<SegmentationMask> masks) {
    eval::EvalInput input = base_input;
    input.methods.push_back({method, std::move(masks)});
    for (const auto& row : eval::evaluate_run(input).rows) {
      csv << fmt(alpha) << ',' << lambda << ',' << method << ',' << row.subset << ','
          << (std::isnan(row.miou) ? std::string("nan") : fmt(row.miou)) << '\n';
    }
  };

  PipelineConfig cfg = base;
  cfg.method = Method::kBaseline;
  const auto baseline = masks_for(cfg);
  for (double alpha : alphas) {
    emit(alpha, "", "baseline", baseline);
    cfg = base;
    cfg.alpha = alpha;
    cfg.method = Method::kEma;
    emit(alpha, "", "ema", masks_for(cfg));
    cfg.method = Method::kMcma;
    for (double lambda : lambdas) {
      cfg.lambda = lambda;
      emit(alpha, fmt(lambda), "mcma", masks_for(cfg));
    }
  }
  if (out.empty()) {
    std::cout << csv.str();
  } else {
    write_text(out, csv.str());
    std::cout << "wrote sweep over " << alphas.size() << " alpha values to " << out.string()
              << '\n';
  }
  return 0;
}

int cmd_bench(const PipelineArgs& a, const fs::path& frames_dir, const std::string& scales_arg,
              const std::string& executors_arg, int limit, const fs::path& out) {
  PipelineConfig base = make_config(a);
  const model::SegmentationModel model(load_model(a, frames_dir));
  const std::vector<Frame> frames = load_frames(frames_dir, limit);
  if (frames.size() < 3) throw Error("bench needs at least 3 frames");

  std::vector<FlowScale> scales;
  for (double s : parse_list(scales_arg)) {
    try {
      scales.push_back(flow_scale_from_real(s));
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
  std::vector<Executor> executors;
  std::stringstream in(executors_arg);
  for (std::string tok; std::getline(in, tok, ',');) {
    try {
      executors.push_back(executor_from_string(tok));
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }

  std::string stages = "stage,mean_us,std_us,mode,flow_scale\n";
  std::ostringstream rates;
  rates << "mode,flow_scale,achievable_hz\n";
  for (Executor ex : executors) {
    for (FlowScale scale : scales) {
      PipelineConfig cfg = base;
      cfg.executor = ex;
      cfg.flow_scale = scale;
      const flow::FarnebackEstimator estimator(a.flow, scale);
      pipeline::VectorSource source(frames);
      auto result = pipeline::run(source, model, estimator, cfg);
      // The first frame has no flow stage; leave it out of the statistics.
      std::vector<pipeline::StageTiming> timings(result.timings.begin() + 1,
                                                 result.timings.end());
      const std::string report = pipeline::benchmark_report(timings);
      std::istringstream lines(report);
      std::string line;
      std::getline(lines, line);  // header
      while (std::getline(lines, line)) {
        if (line.rfind("achievable_hz,", 0) == 0) continue;
        stages += line + '\n';
      }
      const auto summary = pipeline::summarize(timings);
      rates << to_string(ex) << ',' << flow_scale_to_real(scale) << ','
            << summary.achievable_hz << '\n';
      std::ostringstream name;
      name << "timings_" << to_string(ex) << '_' << flow_scale_to_real(scale) << ".csv";
      write_text(out / name.str(), pipeline::timings_csv(result.timings));
      std::cout << to_string(ex) << " @ " << flow_scale_to_real(scale) << ": "
                << summary.achievable_hz << " Hz\n";
    }
  }
  write_text(out / "bench.csv", stages);
  write_text(out / "rates.csv", rates.str());
  return 0;
}

int cmd_eval(const std::vector<std::string>& preds, const fs::path& gt_dir,
             const fs::path& flows_dir, int num_classes, std::int64_t from_frame, int fp_class,
             const fs::path& out, const fs::path& jsonl) {
  std::vector<std::pair<std::string, fs::path>> methods;
  for (const auto& p : preds) {
    const auto eq = p.find('=');
    if (eq == std::string::npos) {
      methods.emplace_back(preds.size() == 1 ? "pred" : fs::path(p).filename().string(), p);
    } else {
      methods.emplace_back(p.substr(0, eq), p.substr(eq + 1));
    }
  }
  const auto gt_files = indexed_files(gt_dir, ".pgm");
  const auto flow_files = indexed_files(flows_dir, ".mcfl");
  std::vector<std::map<std::int64_t, fs::path>> pred_files;
  for (const auto& [name, dir] : methods) pred_files.push_back(indexed_files(dir, ".pgm"));

  eval::EvalInput input;
  for (const auto& m : methods) input.methods.push_back({m.first, {}});
  int max_label = 0;
  for (const auto& [index, path] : gt_files) {
    if (index < from_frame) continue;
    const auto flow_it = flow_files.find(index);
    if (flow_it == flow_files.end()) {
      throw Error("frame " + std::to_string(index) + ": missing flow in " + flows_dir.string());
    }
    SegmentationMask gt = io::read_mask(path);
    for (std::size_t m = 0; m < methods.size(); ++m) {
      const auto it = pred_files[m].find(index);
      if (it == pred_files[m].end()) {
        throw Error("frame " + std::to_string(index) + ": missing prediction for '" +
                    methods[m].first + "'");
      }
      SegmentationMask pred = io::read_mask(it->second);
      for (auto l : pred.labels) max_label = std::max<int>(max_label, l);
      input.methods[m].masks.push_back(std::move(pred));
    }
    for (auto l : gt.labels) max_label = std::max<int>(max_label, l);
    input.motion.push_back(eval::flow_motion(io::read_flow(flow_it->second), gt.width));
    input.frame_ids.push_back(index);
    input.gts.push_back(std::move(gt));
  }
  input.num_classes = num_classes > 0 ? num_classes : max_label + 1;
  if (input.num_classes < 2) input.num_classes = 2;

  eval::EvalOptions options;
  options.fp_class = fp_class;
  const eval::EvalReport report = eval::evaluate_run(input, options);
  if (report.partition.degenerate) {
    std::cerr << "warning: motion distribution is degenerate; low and high subsets overlap\n";
  }
  const std::string csv = eval::report_csv(report.rows);
  if (out.empty()) std::cout << csv;
  else write_text(out, csv);
  if (!jsonl.empty()) write_text(jsonl, report.per_frame_jsonl);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motion-corrected moving average for video segmentation"};
  app.require_subcommand(1);

  // generate
  std::string scene_config;
  std::string gen_out;
  std::optional<std::uint64_t> gen_seed;
  int gen_stride = 4;
  auto* gen = app.add_subcommand("generate", "Render a synthetic dataset from a scene file");
  gen->add_option("--config", scene_config, "Scene description (key = value)")
      ->required()
      ->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "Output dataset directory")->required();
  gen->add_option("--seed", gen_seed, "Override the scene seed");
  gen->add_option("--stride", gen_stride, "Feature stride written to model.cfg")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  // run
  PipelineArgs run_args;
  std::string run_frames, run_out;
  auto* run = app.add_subcommand("run", "Segment a frame directory");
  run->add_option("--frames", run_frames)->required()->check(CLI::ExistingDirectory);
  run->add_option("--out", run_out)->required();
  add_pipeline_flags(run, run_args);

  // sweep
  PipelineArgs sweep_args;
  std::string sweep_frames, sweep_gt, sweep_out, sweep_alphas, sweep_lambdas;
  auto* sweep = app.add_subcommand("sweep", "mIoU of baseline, EMA and MCMA over alpha");
  sweep->add_option("--frames", sweep_frames)->required()->check(CLI::ExistingDirectory);
  sweep->add_option("--gt", sweep_gt, "Ground-truth masks")->required()->check(CLI::ExistingDirectory);
  sweep->add_option("--alphas", sweep_alphas, "Comma list (default 0.1 to 0.9 step 0.05)");
  sweep->add_option("--lambdas", sweep_lambdas, "Comma list of MCMA flow scalings");
  sweep->add_option("--lambda", sweep_args.lambda)->capture_default_str();
  sweep->add_option("--out", sweep_out, "CSV path (default stdout)");
  add_flow_flags(sweep, sweep_args);
  add_model_flag(sweep, sweep_args);

  // bench
  PipelineArgs bench_args;
  std::string bench_frames, bench_out, bench_scales = "1,0.5,0.25", bench_executors = "seq,par";
  int bench_limit = 0;
  auto* bench = app.add_subcommand("bench", "Per-stage timing over flow scales and executors");
  bench->add_option("--frames", bench_frames)->required()->check(CLI::ExistingDirectory);
  bench->add_option("--out", bench_out, "Output directory")->required();
  bench->add_option("--scales", bench_scales)->capture_default_str();
  bench->add_option("--executors", bench_executors)->capture_default_str();
  bench->add_option("--limit", bench_limit, "Use at most this many frames")
      ->check(CLI::NonNegativeNumber);
  bench->add_option("--mode", bench_args.mode)
      ->check(CLI::IsMember({"baseline", "ema", "mcma"}))
      ->capture_default_str();
  bench->add_option("--alpha", bench_args.alpha)->capture_default_str();
  bench->add_option("--lambda", bench_args.lambda)->capture_default_str();
  add_flow_flags(bench, bench_args);
  add_model_flag(bench, bench_args);

  // eval
  std::vector<std::string> eval_preds;
  std::string eval_gt, eval_flows, eval_out, eval_jsonl;
  int eval_classes = 0;
  int eval_fp_class = -1;
  std::int64_t eval_from = 1;
  auto* ev = app.add_subcommand("eval", "mIoU overall and per motion subset");
  ev->add_option("--pred", eval_preds, "Predicted masks, DIR or NAME=DIR (repeatable)")
      ->required();
  ev->add_option("--gt", eval_gt)->required()->check(CLI::ExistingDirectory);
  ev->add_option("--flows", eval_flows, "Flow used for the motion statistic")
      ->required()
      ->check(CLI::ExistingDirectory);
  ev->add_option("--num-classes", eval_classes, "Default: largest label + 1")
      ->check(CLI::NonNegativeNumber);
  ev->add_option("--from-frame", eval_from, "First labeled frame index")->capture_default_str();
  ev->add_option("--fp-class", eval_fp_class, "Add this class's FP rate to the JSON lines");
  ev->add_option("--out", eval_out, "CSV path (default stdout)");
  ev->add_option("--jsonl", eval_jsonl, "Per-frame metrics as JSON lines");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_generate(scene_config, gen_out, gen_seed, gen_stride);
    if (*run) return cmd_run(run_args, run_frames, run_out);
    if (*sweep) {
      return cmd_sweep(sweep_args, sweep_frames, sweep_gt, sweep_alphas, sweep_lambdas,
                       sweep_out);
    }
    if (*bench) {
      return cmd_bench(bench_args, bench_frames, bench_scales, bench_executors, bench_limit,
                       bench_out);
    }
    if (*ev) {
      return cmd_eval(eval_preds, eval_gt, eval_flows, eval_classes, eval_from, eval_fp_class,
                      eval_out, eval_jsonl);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
