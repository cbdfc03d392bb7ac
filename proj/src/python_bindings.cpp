// Python module `mcma`: numpy in, numpy out.
//
// Array layouts: frames (H, W, 3) or (H, W) uint8; features (C, H, W)
// float32; flow (H, W, 2) float32 with (u, v) in the last axis; masks
// (H, W) uint8.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <map>

#include "mcma/eval.hpp"
#include "mcma/flow.hpp"
#include "mcma/fusion.hpp"
#include "mcma/model.hpp"
#include "mcma/pipeline.hpp"
#include "mcma/synth.hpp"
#include "mcma/warping.hpp"

namespace py = pybind11;
using namespace mcma;

namespace {

template <typename T>
using CArray = py::array_t<T, py::array::c_style | py::array::forcecast>;

Frame to_frame(const CArray<std::uint8_t>& a, std::int64_t index) {
  if (a.ndim() != 2 && a.ndim() != 3) throw ShapeError("frame must be (H, W) or (H, W, C)");
  const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  Frame f(w, h, c, std::vector<std::uint8_t>(a.data(), a.data() + a.size()), index);
  f.validate();
  return f;
}

py::array_t<std::uint8_t> from_frame(const Frame& f) {
  std::vector<py::ssize_t> shape{f.height, f.width};
  if (f.channels != 1) shape.push_back(f.channels);
  py::array_t<std::uint8_t> out(shape);
  std::copy(f.data.begin(), f.data.end(), out.mutable_data());
  return out;
}

FeatureMap to_features(const CArray<float>& a) {
  if (a.ndim() != 3) throw ShapeError("features must be (C, H, W)");
  return FeatureMap(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                    static_cast<int>(a.shape(2)),
                    std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> from_features(const FeatureMap& f) {
  py::array_t<float> out({f.channels, f.height, f.width});
  std::copy(f.data.begin(), f.data.end(), out.mutable_data());
  return out;
}

FlowField to_flow(const CArray<float>& a) {
  if (a.ndim() != 3 || a.shape(2) != 2) throw ShapeError("flow must be (H, W, 2)");
  FlowField f(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  const float* p = a.data();
  for (std::size_t i = 0; i < f.size(); ++i) {
    f.u[i] = p[2 * i];
    f.v[i] = p[2 * i + 1];
  }
  return f;
}

py::array_t<float> from_flow(const FlowField& f) {
  py::array_t<float> out({f.height, f.width, 2});
  float* p = out.mutable_data();
  for (std::size_t i = 0; i < f.size(); ++i) {
    p[2 * i] = f.u[i];
    p[2 * i + 1] = f.v[i];
  }
  return out;
}

SegmentationMask to_mask(const CArray<std::uint8_t>& a) {
  if (a.ndim() != 2) throw ShapeError("mask must be (H, W)");
  SegmentationMask m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.labels.begin());
  return m;
}

py::array_t<std::uint8_t> from_mask(const SegmentationMask& m) {
  py::array_t<std::uint8_t> out({m.height, m.width});
  std::copy(m.labels.begin(), m.labels.end(), out.mutable_data());
  return out;
}

std::vector<Frame> to_frames(const std::vector<CArray<std::uint8_t>>& arrays) {
  std::vector<Frame> frames;
  frames.reserve(arrays.size());
  for (std::size_t j = 0; j < arrays.size(); ++j) {
    frames.push_back(to_frame(arrays[j], static_cast<std::int64_t>(j)));
  }
  return frames;
}

flow::FlowParams flow_params(int levels, double pyr_scale, int window, int iterations,
                             int poly_n, double poly_sigma) {
  flow::FlowParams p;
  p.pyramid_levels = levels;
  p.pyramid_scale = pyr_scale;
  p.window_size = window;
  p.iterations = iterations;
  p.poly_n = poly_n;
  p.poly_sigma = poly_sigma;
  return p;
}

model::SegmentationModel reference(const std::vector<synth::Color>& colors, int stride,
                                   const std::vector<double>& biases, double noise_std,
                                   std::uint64_t noise_seed) {
  model::ModelSpec spec;
  spec.feature_stride = stride;
  spec.noise_std = noise_std;
  spec.noise_seed = noise_seed;
  if (!biases.empty() && biases.size() != colors.size()) {
    throw Error("need one bias per class colour");
  }
  for (std::size_t k = 0; k < colors.size(); ++k) {
    spec.prototypes.push_back({colors[k], biases.empty() ? 0.0 : biases[k]});
  }
  return model::SegmentationModel(spec);
}

py::dict timing_dict(const pipeline::StageTiming& t) {
  py::dict d;
  d["frame"] = t.frame_index;
  d["flow_us"] = t.flow_us;
  d["encode_us"] = t.encode_us;
  d["warp_us"] = t.warp_us;
  d["fuse_us"] = t.fuse_us;
  d["decode_us"] = t.decode_us;
  d["total_us"] = t.total_us;
  return d;
}

}  // namespace

PYBIND11_MODULE(mcma, m) {
  m.doc() = "Motion-corrected moving average for video segmentation";

  auto& error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", error.ptr());
  py::register_exception<FormatError>(m, "FormatError", error.ptr());

  // ---- model ----
  py::class_<model::SegmentationModel>(m, "Model")
      .def(py::init(&reference), py::arg("class_colors"), py::arg("stride") = 4,
           py::arg("biases") = std::vector<double>{}, py::arg("noise_std") = 0.0,
           py::arg("noise_seed") = 0,
           "Reference model with one RGB prototype per class.")
      .def_static(
          "from_config",
          [](const std::filesystem::path& p) {
            return model::SegmentationModel(model::load_model_config(p));
          },
          py::arg("path"))
      .def(
          "encode",
          [](const model::SegmentationModel& self, const CArray<std::uint8_t>& frame,
             std::int64_t index) { return from_features(self.encode(to_frame(frame, index))); },
          py::arg("frame"), py::arg("index") = 0)
      .def(
          "decode",
          [](const model::SegmentationModel& self, const CArray<float>& f) {
            return from_mask(self.decode(to_features(f)));
          },
          py::arg("features"))
      .def_property_readonly("num_classes", &model::SegmentationModel::num_classes)
      .def_property_readonly("stride",
                             [](const model::SegmentationModel& s) { return s.spec().feature_stride; });

  // ---- synthetic scenes ----
  py::class_<synth::SceneSpec>(m, "Scene")
      .def_static("parse", &synth::parse_scene, py::arg("text"))
      .def_static("load", &synth::load_scene, py::arg("path"))
      .def("format", &synth::format_scene)
      .def_readwrite("width", &synth::SceneSpec::width)
      .def_readwrite("height", &synth::SceneSpec::height)
      .def_readwrite("frames", &synth::SceneSpec::frames)
      .def_readwrite("seed", &synth::SceneSpec::seed)
      .def_readwrite("num_classes", &synth::SceneSpec::num_classes)
      .def_readwrite("label_noise_rate", &synth::SceneSpec::label_noise_rate)
      .def(
          "generate",
          [](const synth::SceneSpec& spec) {
            const synth::Sequence seq = synth::generate(spec);
            py::list frames, masks, flows;
            for (std::size_t j = 0; j < seq.frames.size(); ++j) {
              frames.append(from_frame(seq.frames[j]));
              masks.append(from_mask(seq.masks[j]));
              flows.append(from_flow(seq.flows[j]));
            }
            py::dict d;
            d["frames"] = frames;
            d["masks"] = masks;
            d["flows"] = flows;
            return d;
          },
          "Frames, ground-truth masks and backward flows as lists of arrays.")
      .def("motion_profile", [](const synth::SceneSpec& s) { return synth::motion_profile(s); })
      .def(
          "reference_model",
          [](const synth::SceneSpec& s, int stride) {
            return model::SegmentationModel(synth::reference_model(s, stride));
          },
          py::arg("stride") = 4);

  // ---- flow ----
  m.def(
      "estimate_flow",
      [](const CArray<std::uint8_t>& prev, const CArray<std::uint8_t>& curr, double scale,
         int levels, double pyr_scale, int window, int iterations, int poly_n,
         double poly_sigma) {
        const flow::FarnebackEstimator est(
            flow_params(levels, pyr_scale, window, iterations, poly_n, poly_sigma),
            flow_scale_from_real(scale));
        return from_flow(est.estimate(to_frame(prev, 0), to_frame(curr, 1)));
      },
      py::arg("prev"), py::arg("curr"), py::arg("scale") = 1.0, py::arg("levels") = 3,
      py::arg("pyr_scale") = 0.5, py::arg("window") = 15, py::arg("iterations") = 3,
      py::arg("poly_n") = 5, py::arg("poly_sigma") = 1.1,
      "Backward flow: curr(p) ~ prev(p + flow(p)), at 1/scale of the input size.");
  m.def(
      "resize_flow",
      [](const CArray<float>& f, int height, int width) {
        return from_flow(flow::resize_flow(to_flow(f), height, width));
      },
      py::arg("flow"), py::arg("height"), py::arg("width"));
  m.def(
      "endpoint_error",
      [](const CArray<float>& est, const CArray<float>& ref, int margin) {
        return flow::average_endpoint_error(to_flow(est), to_flow(ref), margin);
      },
      py::arg("estimate"), py::arg("reference"), py::arg("margin") = 0);

  // ---- warping and fusion ----
  m.def(
      "warp_features",
      [](const CArray<float>& f, const CArray<float>& flow, double lambda) {
        return from_features(warping::warp_features(to_features(f), to_flow(flow), {lambda}));
      },
      py::arg("features"), py::arg("flow"), py::arg("lambda_") = 2.0);
  m.def(
      "ema_fuse",
      [](const CArray<float>& curr, const CArray<float>& prev, double alpha) {
        return from_features(fusion::ema_fuse(to_features(curr), to_features(prev), alpha));
      },
      py::arg("curr"), py::arg("warped_prev"), py::arg("alpha"));

  // ---- pipeline ----
  m.def(
      "run",
      [](const std::vector<CArray<std::uint8_t>>& arrays, const model::SegmentationModel& model,
         const std::string& method, double alpha, double lambda, double flow_scale,
         const std::string& executor, bool keep_flows) {
        PipelineConfig cfg;
        cfg.method = method_from_string(method);
        cfg.alpha = alpha;
        cfg.lambda = lambda;
        cfg.flow_scale = flow_scale_from_real(flow_scale);
        cfg.executor = executor_from_string(executor);
        cfg.num_classes = model.num_classes();
        cfg.validate();
        const std::vector<Frame> frames = to_frames(arrays);
        const flow::FarnebackEstimator est({}, cfg.flow_scale);
        pipeline::RunOptions opts;
        opts.keep_flows = keep_flows;
        pipeline::RunResult r;
        {
          py::gil_scoped_release release;
          pipeline::VectorSource src(frames);
          r = pipeline::run(src, model, est, cfg, opts);
        }
        py::list masks, timings, flows;
        for (const auto& mk : r.masks) masks.append(from_mask(mk));
        for (const auto& t : r.timings) timings.append(timing_dict(t));
        for (const auto& f : r.flows) flows.append(f ? py::object(from_flow(*f)) : py::none());
        py::dict d;
        d["masks"] = masks;
        d["timings"] = timings;
        if (keep_flows) d["flows"] = flows;
        return d;
      },
      py::arg("frames"), py::arg("model"), py::arg("method") = "mcma", py::arg("alpha") = 0.1,
      py::arg("lambda_") = 2.0, py::arg("flow_scale") = 1.0, py::arg("executor") = "seq",
      py::arg("keep_flows") = false,
      "Segment a frame sequence; returns masks, per-frame timings and optionally flows.");

  // ---- metrics ----
  m.def(
      "miou",
      [](const CArray<std::uint8_t>& pred, const CArray<std::uint8_t>& gt, int classes) {
        const auto r = eval::miou(to_mask(pred), to_mask(gt), classes);
        return py::make_tuple(r.miou, r.per_class);
      },
      py::arg("pred"), py::arg("gt"), py::arg("num_classes"),
      "(mean IoU, per-class IoU with NaN for absent classes)");
  m.def(
      "fp_rate",
      [](const CArray<std::uint8_t>& pred, const CArray<std::uint8_t>& gt, int cls) {
        return eval::fp_rate(to_mask(pred), to_mask(gt), cls);
      },
      py::arg("pred"), py::arg("gt"), py::arg("target_class"));
  m.def("quantile", &eval::quantile, py::arg("values"), py::arg("q"));
  m.def(
      "motion_quantile_partition",
      [](const std::vector<double>& motion, double low_q, double high_q) {
        const auto p = eval::motion_quantile_partition(motion, low_q, high_q);
        py::dict d;
        d["low"] = p.low;
        d["mid"] = p.mid;
        d["high"] = p.high;
        d["low_threshold"] = p.low_threshold;
        d["high_threshold"] = p.high_threshold;
        d["degenerate"] = p.degenerate;
        return d;
      },
      py::arg("motion"), py::arg("low_q") = 0.2, py::arg("high_q") = 0.8);
}
