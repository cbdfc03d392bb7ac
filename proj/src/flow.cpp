#include "mcma/flow.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>

#include "mcma/detail/interp.hpp"

namespace mcma::flow {
namespace {

// Smallest pyramid level (in pixels along the short side) worth solving on.
constexpr int kMinLevelSize = 16;
// Damping added to the 2x2 system determinant; keeps textureless regions at ~0.
constexpr double kDetRegularizer = 1e-3;

struct Plane {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  Plane() = default;
  Plane(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0.0f) {}
  float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

Plane gray_plane(const Frame& frame) {
  if (frame.channels == 1) {
    Plane out(frame.width, frame.height);
    std::copy(frame.data.begin(), frame.data.end(), out.data.begin());
    return out;
  }
  const Frame gray = to_grayscale(frame);
  Plane out(gray.width, gray.height);
  std::copy(gray.data.begin(), gray.data.end(), out.data.begin());
  return out;
}

// Separable correlation with a symmetric kernel of length 2r+1, replicate edges.
Plane separable_filter(const Plane& in, const std::vector<double>& kernel) {
  const int r = static_cast<int>(kernel.size() / 2);
  const int width = in.width;
  const int height = in.height;
  Plane tmp(width, height);
  for (int y = 0; y < height; ++y) {
    float* out_row = tmp.data.data() + static_cast<std::size_t>(y) * width;
    for (int k = -r; k <= r; ++k) {
      const float* row = in.data.data() + static_cast<std::size_t>(std::clamp(y + k, 0, height - 1)) * width;
      const float w = static_cast<float>(kernel[k + r]);
      for (int x = 0; x < width; ++x) out_row[x] += w * row[x];
    }
  }
  Plane out(width, height);
  std::vector<float> padded(width + 2 * r);
  for (int y = 0; y < height; ++y) {
    const float* row = tmp.data.data() + static_cast<std::size_t>(y) * width;
    for (int x = -r; x < width + r; ++x) padded[x + r] = row[std::clamp(x, 0, width - 1)];
    float* out_row = out.data.data() + static_cast<std::size_t>(y) * width;
    std::fill(out_row, out_row + width, 0.0f);
    for (int k = 0; k <= 2 * r; ++k) {
      const float w = static_cast<float>(kernel[k]);
      const float* src = padded.data() + k;
      for (int x = 0; x < width; ++x) out_row[x] += w * src[x];
    }
  }
  return out;
}

Plane gaussian_blur(const Plane& in, double sigma) {
  if (sigma <= 0.0) return in;
  const int radius = std::max(1, static_cast<int>(std::lround(sigma * 5.0)) / 2);
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
    sum += kernel[k + radius];
  }
  for (double& w : kernel) w /= sum;
  return separable_filter(in, kernel);
}

Plane resize_plane(const Plane& in, int width, int height) {
  Plane out(width, height);
  out.data = resample_plane(in.data, in.width, in.height, width, height);
  return out;
}

// Confidence ramp towards the image border, where replicated edges bias the fit.
float border_weight(int x, int y, int width, int height) {
  static constexpr float kRamp[5] = {0.14f, 0.14f, 0.4472f, 0.4472f, 0.4472f};
  const int dx = std::min(x, width - 1 - x);
  const int dy = std::min(y, height - 1 - y);
  const float wx = dx < 5 ? kRamp[dx] : 1.0f;
  const float wy = dy < 5 ? kRamp[dy] : 1.0f;
  return wx * wy;
}

// Quadratic model of one pixel without the constant term, which the
// displacement solve never reads.
struct Quad {
  float a11, a12, a22, b1, b2;
};

std::vector<Quad> pack(const PolyCoefficients& r) {
  std::vector<Quad> packed(r.a11.size());
  for (std::size_t i = 0; i < packed.size(); ++i) {
    packed[i] = {r.a11[i], r.a12[i], r.a22[i], r.b1[i], r.b2[i]};
  }
  return packed;
}

// Normal-equation entries of one pixel: G = A^T A (3 unique), h = A^T db.
struct Moment {
  float g11, g12, g22, h1, h2;
};

// One refinement of the displacement field: builds the per-pixel normal
// equations against the displaced frame sampled at x + d, averages them over
// a window x window box and solves the 2x2 system per pixel.
void refine_flow(const std::vector<Quad>& ref, const std::vector<Quad>& moved, int width,
                 int height, int window, FlowField& flow, std::vector<Moment>& moments) {
  const int r = window / 2;
  const float norm = 1.0f / (static_cast<float>(window) * window);
  moments.resize(ref.size());
  std::vector<Moment> row_buf(width);

  for (int y = 0; y < height; ++y) {
    const std::size_t row = static_cast<std::size_t>(y) * width;
    for (int x = 0; x < width; ++x) {
      const std::size_t i = row + x;
      const float dx = flow.u[i];
      const float dy = flow.v[i];
      const float fx = std::clamp(x + dx, 0.0f, float(width - 1));
      const float fy = std::clamp(y + dy, 0.0f, float(height - 1));
      const int x0 = static_cast<int>(fx);
      const int y0 = static_cast<int>(fy);
      const int x1 = std::min(x0 + 1, width - 1);
      const int y1 = std::min(y0 + 1, height - 1);
      const float tx = fx - x0;
      const float ty = fy - y0;
      const float w00 = (1 - tx) * (1 - ty), w01 = tx * (1 - ty);
      const float w10 = (1 - tx) * ty, w11 = tx * ty;
      const Quad& q00 = moved[static_cast<std::size_t>(y0) * width + x0];
      const Quad& q01 = moved[static_cast<std::size_t>(y0) * width + x1];
      const Quad& q10 = moved[static_cast<std::size_t>(y1) * width + x0];
      const Quad& q11 = moved[static_cast<std::size_t>(y1) * width + x1];
      const Quad& q = ref[i];

      const float a11 = 0.5f * (q.a11 + w00 * q00.a11 + w01 * q01.a11 + w10 * q10.a11 + w11 * q11.a11);
      const float a12 = 0.5f * (q.a12 + w00 * q00.a12 + w01 * q01.a12 + w10 * q10.a12 + w11 * q11.a12);
      const float a22 = 0.5f * (q.a22 + w00 * q00.a22 + w01 * q01.a22 + w10 * q10.a22 + w11 * q11.a22);
      const float sb1 = w00 * q00.b1 + w01 * q01.b1 + w10 * q10.b1 + w11 * q11.b1;
      const float sb2 = w00 * q00.b2 + w01 * q01.b2 + w10 * q10.b2 + w11 * q11.b2;
      const float db1 = -0.5f * (sb1 - q.b1) + a11 * dx + a12 * dy;
      const float db2 = -0.5f * (sb2 - q.b2) + a12 * dx + a22 * dy;
      const float w = border_weight(x, y, width, height);

      row_buf[x] = {w * (a11 * a11 + a12 * a12), w * a12 * (a11 + a22),
                    w * (a12 * a12 + a22 * a22), w * (a11 * db1 + a12 * db2),
                    w * (a12 * db1 + a22 * db2)};
    }
    // Horizontal box sum of the freshly built row.
    Moment acc{0, 0, 0, 0, 0};
    for (int k = -r; k <= r; ++k) {
      const Moment& m = row_buf[std::clamp(k, 0, width - 1)];
      acc.g11 += m.g11; acc.g12 += m.g12; acc.g22 += m.g22; acc.h1 += m.h1; acc.h2 += m.h2;
    }
    for (int x = 0; x < width; ++x) {
      moments[row + x] = acc;
      const Moment& add = row_buf[std::min(x + r + 1, width - 1)];
      const Moment& sub = row_buf[std::max(x - r, 0)];
      acc.g11 += add.g11 - sub.g11;
      acc.g12 += add.g12 - sub.g12;
      acc.g22 += add.g22 - sub.g22;
      acc.h1 += add.h1 - sub.h1;
      acc.h2 += add.h2 - sub.h2;
    }
  }

  // Vertical box sum as a running row accumulator, solved row by row.
  const int stride = 5 * width;
  std::vector<float> acc(stride, 0.0f);
  auto row_of = [&](int y) {
    return reinterpret_cast<const float*>(moments.data() + static_cast<std::size_t>(y) * width);
  };
  for (int k = -r; k <= r; ++k) {
    const float* src = row_of(std::clamp(k, 0, height - 1));
    for (int j = 0; j < stride; ++j) acc[j] += src[j];
  }
  for (int y = 0; y < height; ++y) {
    const std::size_t row = static_cast<std::size_t>(y) * width;
    for (int x = 0; x < width; ++x) {
      const float* m = acc.data() + 5 * x;
      const double g11 = m[0] * norm, g12 = m[1] * norm, g22 = m[2] * norm;
      const double h1 = m[3] * norm, h2 = m[4] * norm;
      const double idet = 1.0 / (g11 * g22 - g12 * g12 + kDetRegularizer);
      flow.u[row + x] = static_cast<float>((g22 * h1 - g12 * h2) * idet);
      flow.v[row + x] = static_cast<float>((g11 * h2 - g12 * h1) * idet);
    }
    const float* add = row_of(std::min(y + r + 1, height - 1));
    const float* sub = row_of(std::max(y - r, 0));
    for (int j = 0; j < stride; ++j) acc[j] += add[j] - sub[j];
  }
}

// curr(x) ~ prev(x + d): the current frame plays the role of the reference
// image and the previous frame is the displaced one.
FlowField estimate_on_planes(const Plane& curr, const Plane& prev, const FlowParams& p) {
  // Pyramid built level by level; each level is the previous one smoothed
  // for the pyramid_scale reduction and resampled.
  const double sigma = (1.0 / p.pyramid_scale - 1.0) * 0.5;
  std::vector<Plane> curr_levels{curr};
  std::vector<Plane> prev_levels{prev};
  for (int level = 1; level < p.pyramid_levels; ++level) {
    const double scale = std::pow(p.pyramid_scale, level);
    const int width = static_cast<int>(std::lround(curr.width * scale));
    const int height = static_cast<int>(std::lround(curr.height * scale));
    if (std::min(width, height) < kMinLevelSize) break;
    curr_levels.push_back(resize_plane(gaussian_blur(curr_levels.back(), sigma), width, height));
    prev_levels.push_back(resize_plane(gaussian_blur(prev_levels.back(), sigma), width, height));
  }

  FlowField flow;
  for (int level = static_cast<int>(curr_levels.size()) - 1; level >= 0; --level) {
    const int width = curr_levels[level].width;
    const int height = curr_levels[level].height;
    flow = flow.size() == 0 ? FlowField(height, width) : resize_flow(flow, height, width);

    const std::vector<Quad> ref = pack(polynomial_expansion(curr_levels[level].data, width,
                                                            height, p.poly_n, p.poly_sigma));
    const std::vector<Quad> moved = pack(polynomial_expansion(prev_levels[level].data, width,
                                                              height, p.poly_n, p.poly_sigma));
    std::vector<Moment> moments;
    for (int it = 0; it < p.iterations; ++it) {
      refine_flow(ref, moved, width, height, p.window_size, flow, moments);
    }
  }
  return flow;
}

}  // namespace

void FlowParams::validate() const {
  if (pyramid_levels < 1) throw Error("pyramid_levels must be >= 1");
  if (!(pyramid_scale > 0.0 && pyramid_scale < 1.0)) throw Error("pyramid_scale must lie in (0, 1)");
  if (window_size < 3 || window_size % 2 == 0) throw Error("window_size must be odd and >= 3");
  if (poly_n < 3 || poly_n % 2 == 0) throw Error("poly_n must be odd and >= 3");
  if (iterations < 1) throw Error("iterations must be >= 1");
  if (!(poly_sigma > 0.0)) throw Error("poly_sigma must be positive");
}

Frame to_grayscale(const Frame& frame) {
  frame.validate();
  if (frame.channels == 1) return frame;
  Frame gray(frame.width, frame.height, 1, frame.index);
  for (std::size_t i = 0; i < frame.pixel_count(); ++i) {
    // Exact rounding of 0.299 R + 0.587 G + 0.114 B in integer arithmetic.
    const int luma = 299 * frame.data[3 * i] + 587 * frame.data[3 * i + 1] +
                     114 * frame.data[3 * i + 2];
    gray.data[i] = static_cast<std::uint8_t>((luma + 500) / 1000);
  }
  return gray;
}

PolyCoefficients polynomial_expansion(const std::vector<float>& plane, int width, int height,
                                      int poly_n, double poly_sigma) {
  const int r = poly_n / 2;
  std::vector<double> w(2 * r + 1);
  for (int k = -r; k <= r; ++k) w[k + r] = std::exp(-0.5 * k * k / (poly_sigma * poly_sigma));

  // Gram matrix of the basis (1, x, y, x^2, y^2, xy) under the window weights.
  Eigen::Matrix<double, 6, 6> gram = Eigen::Matrix<double, 6, 6>::Zero();
  for (int y = -r; y <= r; ++y) {
    for (int x = -r; x <= r; ++x) {
      Eigen::Matrix<double, 6, 1> b;
      b << 1.0, x, y, double(x) * x, double(y) * y, double(x) * y;
      gram += w[x + r] * w[y + r] * b * b.transpose();
    }
  }
  const Eigen::Matrix<double, 6, 6> inv = gram.inverse();
  // With a symmetric window the odd moments decouple: c, a11 and a22 depend
  // only on (m, mxx, myy) while b1, b2 and a12 each depend on one moment.
  const float i00 = float(inv(0, 0)), i03 = float(inv(0, 3)), i04 = float(inv(0, 4));
  const float i30 = float(inv(3, 0)), i33 = float(inv(3, 3)), i34 = float(inv(3, 4));
  const float i40 = float(inv(4, 0)), i43 = float(inv(4, 3)), i44 = float(inv(4, 4));
  const float i11 = float(inv(1, 1)), i22 = float(inv(2, 2)), i55 = float(inv(5, 5));

  std::vector<float> wf0(2 * r + 1), wf1(2 * r + 1), wf2(2 * r + 1);
  for (int k = -r; k <= r; ++k) {
    wf0[k + r] = float(w[k + r]);
    wf1[k + r] = float(k * w[k + r]);
    wf2[k + r] = float(k * k * w[k + r]);
  }

  PolyCoefficients out;
  out.width = width;
  out.height = height;
  const std::size_t n = static_cast<std::size_t>(width) * height;
  for (auto* field : {&out.a11, &out.a12, &out.a22, &out.b1, &out.b2, &out.c}) field->resize(n);

  // Vertical pass yields weighted sums of f, y f and y^2 f for one row, padded
  // horizontally by r replicated samples for the horizontal pass.
  const int padded = width + 2 * r;
  std::vector<float> s0(padded), s1(padded), s2(padded);
  std::vector<float> m(width), mx(width), mxx(width), my(width), mxy(width), myy(width);
  for (int y = 0; y < height; ++y) {
    std::fill(s0.begin(), s0.end(), 0.0f);
    std::fill(s1.begin(), s1.end(), 0.0f);
    std::fill(s2.begin(), s2.end(), 0.0f);
    for (int k = -r; k <= r; ++k) {
      const float* row = plane.data() + static_cast<std::size_t>(std::clamp(y + k, 0, height - 1)) * width;
      const float w0 = wf0[k + r];
      const float w1 = wf1[k + r];
      const float w2 = wf2[k + r];
      for (int x = 0; x < width; ++x) {
        const float v = row[x];
        s0[x + r] += w0 * v;
        s1[x + r] += w1 * v;
        s2[x + r] += w2 * v;
      }
    }
    for (int x = 0; x < r; ++x) {
      s0[x] = s0[r];
      s1[x] = s1[r];
      s2[x] = s2[r];
      s0[width + r + x] = s0[width + r - 1];
      s1[width + r + x] = s1[width + r - 1];
      s2[width + r + x] = s2[width + r - 1];
    }
    std::fill(m.begin(), m.end(), 0.0f);
    std::fill(mx.begin(), mx.end(), 0.0f);
    std::fill(mxx.begin(), mxx.end(), 0.0f);
    std::fill(my.begin(), my.end(), 0.0f);
    std::fill(mxy.begin(), mxy.end(), 0.0f);
    std::fill(myy.begin(), myy.end(), 0.0f);
    for (int t = 0; t <= 2 * r; ++t) {
      const float w0 = wf0[t], w1 = wf1[t], w2 = wf2[t];
      const float* p0 = s0.data() + t;
      const float* p1 = s1.data() + t;
      const float* p2 = s2.data() + t;
      for (int x = 0; x < width; ++x) {
        m[x] += w0 * p0[x];
        mx[x] += w1 * p0[x];
        mxx[x] += w2 * p0[x];
        my[x] += w0 * p1[x];
        mxy[x] += w1 * p1[x];
        myy[x] += w0 * p2[x];
      }
    }
    const std::size_t row = static_cast<std::size_t>(y) * width;
    float* c = out.c.data() + row;
    float* a11 = out.a11.data() + row;
    float* a22 = out.a22.data() + row;
    float* a12 = out.a12.data() + row;
    float* b1 = out.b1.data() + row;
    float* b2 = out.b2.data() + row;
    for (int x = 0; x < width; ++x) {
      c[x] = i00 * m[x] + i03 * mxx[x] + i04 * myy[x];
      a11[x] = i30 * m[x] + i33 * mxx[x] + i34 * myy[x];
      a22[x] = i40 * m[x] + i43 * mxx[x] + i44 * myy[x];
      b1[x] = i11 * mx[x];
      b2[x] = i22 * my[x];
      a12[x] = 0.5f * i55 * mxy[x];
    }
  }
  return out;
}

PolyCoefficients polynomial_expansion(const Frame& gray, int poly_n, double poly_sigma) {
  if (gray.channels != 1) throw ShapeError("polynomial expansion needs a single-channel frame");
  if (poly_n < 3 || poly_n % 2 == 0) throw Error("poly_n must be odd and >= 3");
  std::vector<float> plane(gray.data.begin(), gray.data.end());
  return polynomial_expansion(plane, gray.width, gray.height, poly_n, poly_sigma);
}

FlowField estimate_flow(const Frame& prev, const Frame& curr, const FlowParams& params) {
  params.validate();
  if (prev.width != curr.width || prev.height != curr.height) {
    throw ShapeError("estimate_flow: frame dimensions differ (" + std::to_string(prev.width) +
                     "x" + std::to_string(prev.height) + " vs " + std::to_string(curr.width) +
                     "x" + std::to_string(curr.height) + ")");
  }
  return estimate_on_planes(gray_plane(curr), gray_plane(prev), params);
}

Frame downscale_frame(const Frame& frame, FlowScale scale) {
  const int factor = downsample_factor(scale);
  if (factor == 1) return frame;
  const int width = frame.width / factor;
  const int height = frame.height / factor;
  if (width < 2 || height < 2) {
    throw ShapeError("downscale_frame: result " + std::to_string(width) + "x" +
                     std::to_string(height) + " is smaller than 2x2");
  }
  Frame out(width, height, frame.channels, frame.index);
  const int count = factor * factor;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < frame.channels; ++c) {
        int sum = 0;
        for (int dy = 0; dy < factor; ++dy) {
          for (int dx = 0; dx < factor; ++dx) sum += frame.at(x * factor + dx, y * factor + dy, c);
        }
        out.at(x, y, c) = static_cast<std::uint8_t>((sum + count / 2) / count);
      }
    }
  }
  return out;
}

std::vector<float> resample_plane(const std::vector<float>& plane, int width, int height,
                                  int target_width, int target_height) {
  if (width == target_width && height == target_height) return plane;
  std::vector<detail::Tap> xs(target_width);
  for (int x = 0; x < target_width; ++x) {
    xs[x] = detail::make_tap(detail::source_coord(x, width, target_width), width);
  }
  std::vector<float> out(static_cast<std::size_t>(target_width) * target_height);
  for (int y = 0; y < target_height; ++y) {
    const detail::Tap ty = detail::make_tap(detail::source_coord(y, height, target_height), height);
    for (int x = 0; x < target_width; ++x) {
      out[static_cast<std::size_t>(y) * target_width + x] =
          static_cast<float>(detail::sample(plane.data(), width, xs[x], ty));
    }
  }
  return out;
}

FlowField resize_flow(const FlowField& flow, int target_height, int target_width) {
  if (target_height < 2 || target_width < 2) throw ShapeError("resize_flow: target must be >= 2x2");
  if (target_height == flow.height && target_width == flow.width) return flow;
  FlowField out(target_height, target_width);
  out.u = resample_plane(flow.u, flow.width, flow.height, target_width, target_height);
  out.v = resample_plane(flow.v, flow.width, flow.height, target_width, target_height);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.u[i] = static_cast<float>(double(out.u[i]) * target_width / flow.width);
    out.v[i] = static_cast<float>(double(out.v[i]) * target_height / flow.height);
  }
  return out;
}

double mean_flow_magnitude(const FlowField& flow) {
  if (flow.size() == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < flow.size(); ++i) sum += std::hypot(double(flow.u[i]), double(flow.v[i]));
  return sum / static_cast<double>(flow.size());
}

double average_endpoint_error(const FlowField& estimate, const FlowField& reference, int margin) {
  if (estimate.width != reference.width || estimate.height != reference.height) {
    throw ShapeError("average_endpoint_error: grids differ");
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (int y = margin; y < estimate.height - margin; ++y) {
    for (int x = margin; x < estimate.width - margin; ++x) {
      sum += std::hypot(double(estimate.u_at(x, y)) - reference.u_at(x, y),
                        double(estimate.v_at(x, y)) - reference.v_at(x, y));
      ++count;
    }
  }
  if (count == 0) throw ShapeError("average_endpoint_error: margin leaves no pixels");
  return sum / static_cast<double>(count);
}

FarnebackEstimator::FarnebackEstimator(FlowParams params, FlowScale scale)
    : params_(params), scale_(scale) {
  params_.validate();
}

FlowField FarnebackEstimator::estimate(const Frame& prev, const Frame& curr) const {
  return estimate_flow(downscale_frame(prev, scale_), downscale_frame(curr, scale_), params_);
}

OracleEstimator::OracleEstimator(std::map<std::int64_t, FlowField> flows)
    : flows_(std::move(flows)) {}

FlowField OracleEstimator::estimate(const Frame&, const Frame& curr) const {
  const auto it = flows_.find(curr.index);
  if (it == flows_.end()) {
    throw Error("no oracle flow for frame " + std::to_string(curr.index));
  }
  return it->second;
}

}  // namespace mcma::flow
