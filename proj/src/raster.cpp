#include "sketchmotion/raster.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <memory>

#include "sketchmotion/error.hpp"

namespace sketchmotion::raster {
namespace {

constexpr double kCutoffSigmas = 9.0;

struct StrokeStyle {
  double inv_two_sigma_sq = 0.0;
  double radius = 0.0;  // pixels
};

std::vector<StrokeStyle> stroke_styles(const Topology& topo, const RasterConfig& cfg) {
  std::vector<double> widths;
  for (const auto& s : topo.strokes) widths.push_back(s.width);
  double median = 1.0;
  if (!widths.empty()) {
    std::sort(widths.begin(), widths.end());
    const auto n = widths.size();
    median = n % 2 ? widths[n / 2] : 0.5 * (widths[n / 2 - 1] + widths[n / 2]);
  }
  std::vector<StrokeStyle> out;
  for (const auto& s : topo.strokes) {
    const double sigma = cfg.sigma * s.width / median;
    out.push_back({1.0 / (2.0 * sigma * sigma), kCutoffSigmas * sigma});
  }
  return out;
}

std::array<double, 4> bernstein(double t) {
  const double u = 1.0 - t;
  return {u * u * u, 3.0 * u * u * t, 3.0 * u * t * t, t * t * t};
}

/// Renders one frame. `pts` addresses point n at pts[n * stride], pts[n * stride + 1].
/// When `grad_out` is set, accumulates dL/dpoint into grad_pts (same layout)
/// given dL/dI = grad_out.
class FrameRenderer {
 public:
  FrameRenderer(const Topology& topo, double canvas_w, double canvas_h, const RasterConfig& cfg)
      : topo_(topo),
        cfg_(cfg),
        scale_x_(static_cast<double>(cfg.width) / canvas_w),
        scale_y_(static_cast<double>(cfg.height) / canvas_h),
        styles_(stroke_styles(topo, cfg)) {
    const auto S = cfg.samples_per_segment;
    basis_.reserve(S + 1);
    for (std::size_t j = 0; j <= S; ++j) basis_.push_back(bernstein(static_cast<double>(j) / S));
  }

  /// Returns intensities and keeps the per-pixel products for backward.
  std::vector<double> forward(const double* pts, std::size_t stride) {
    const auto n_pix = cfg_.height * cfg_.width;
    prod_.assign(n_pix, 1.0);
    zeros_.assign(n_pix, 0);
    for_each_chord(pts, stride, [&](const Chord& c) {
      visit_pixels(c, [&](std::size_t pix, double, double, double g, double, double, double) {
        const double keep = 1.0 - g;
        if (keep == 0.0) ++zeros_[pix];
        else prod_[pix] *= keep;
      });
    });
    std::vector<double> out(n_pix);
    for (std::size_t i = 0; i < n_pix; ++i) out[i] = zeros_[i] ? 1.0 : 1.0 - prod_[i];
    return out;
  }

  void backward(const double* pts, std::size_t stride, const double* grad_out, double* grad_pts) {
    const auto S = cfg_.samples_per_segment;
    std::vector<double> sample_grad;  // per sample point of current segment: (S+1) x 2
    for (std::size_t si = 0; si < topo_.strokes.size(); ++si) {
      const auto& span = topo_.strokes[si];
      const auto& style = styles_[si];
      const std::size_t segments = span.count < 4 ? 0 : (span.count - 1) / 3;
      for (std::size_t seg = 0; seg < segments; ++seg) {
        const std::size_t base = span.offset + 3 * seg;
        auto samples = sample_segment(pts, stride, base);
        sample_grad.assign((S + 1) * 2, 0.0);
        for (std::size_t j = 0; j < S; ++j) {
          Chord c{samples[2 * j], samples[2 * j + 1], samples[2 * j + 2], samples[2 * j + 3], style};
          visit_pixels(c, [&](std::size_t pix, double px, double py, double g, double u, double qx,
                              double qy) {
            const double keep = 1.0 - g;
            double others;
            if (zeros_[pix] == 0) others = prod_[pix] / keep;
            else if (zeros_[pix] == 1 && keep == 0.0) others = prod_[pix];
            else others = 0.0;
            const double dI_dg = others;
            // g = exp(-d2 * k) -> dg/dd2 = -k g; dd2/da = -2 (1-u)(p-q), dd2/db = -2 u (p-q)
            const double coef = grad_out[pix] * dI_dg * (-c.style.inv_two_sigma_sq * g) * -2.0;
            const double ex = px - qx, ey = py - qy;
            sample_grad[2 * j] += coef * (1.0 - u) * ex;
            sample_grad[2 * j + 1] += coef * (1.0 - u) * ey;
            sample_grad[2 * j + 2] += coef * u * ex;
            sample_grad[2 * j + 3] += coef * u * ey;
          });
        }
        for (std::size_t j = 0; j <= S; ++j) {
          const double gx = sample_grad[2 * j] * scale_x_;
          const double gy = sample_grad[2 * j + 1] * scale_y_;
          for (std::size_t m = 0; m < 4; ++m) {
            grad_pts[(base + m) * stride] += basis_[j][m] * gx;
            grad_pts[(base + m) * stride + 1] += basis_[j][m] * gy;
          }
        }
      }
    }
  }

 private:
  struct Chord {
    double ax, ay, bx, by;  // pixels
    const StrokeStyle& style;
  };

  std::vector<double> sample_segment(const double* pts, std::size_t stride, std::size_t base) const {
    const auto S = cfg_.samples_per_segment;
    std::vector<double> out((S + 1) * 2);
    for (std::size_t j = 0; j <= S; ++j) {
      double x = 0.0, y = 0.0;
      for (std::size_t m = 0; m < 4; ++m) {
        x += basis_[j][m] * pts[(base + m) * stride];
        y += basis_[j][m] * pts[(base + m) * stride + 1];
      }
      out[2 * j] = x * scale_x_;
      out[2 * j + 1] = y * scale_y_;
    }
    return out;
  }

  template <class Fn>
  void for_each_chord(const double* pts, std::size_t stride, Fn&& fn) const {
    const auto S = cfg_.samples_per_segment;
    for (std::size_t si = 0; si < topo_.strokes.size(); ++si) {
      const auto& span = topo_.strokes[si];
      const std::size_t segments = span.count < 4 ? 0 : (span.count - 1) / 3;
      for (std::size_t seg = 0; seg < segments; ++seg) {
        const auto samples = sample_segment(pts, stride, span.offset + 3 * seg);
        for (std::size_t j = 0; j < S; ++j)
          fn(Chord{samples[2 * j], samples[2 * j + 1], samples[2 * j + 2], samples[2 * j + 3],
                   styles_[si]});
      }
    }
  }

  /// fn(pixel, px, py, g, u, qx, qy) for every pixel centre inside the cutoff box.
  template <class Fn>
  void visit_pixels(const Chord& c, Fn&& fn) const {
    const double r = c.style.radius;
    const double x0 = std::min(c.ax, c.bx) - r, x1 = std::max(c.ax, c.bx) + r;
    const double y0 = std::min(c.ay, c.by) - r, y1 = std::max(c.ay, c.by) + r;
    const double W = static_cast<double>(cfg_.width), H = static_cast<double>(cfg_.height);
    if (x1 < 0.0 || y1 < 0.0 || x0 > W || y0 > H) return;
    const auto col_begin = static_cast<std::size_t>(std::max(0.0, std::ceil(x0 - 0.5)));
    const auto col_end = static_cast<std::size_t>(std::min(W - 1.0, std::floor(x1 - 0.5)) + 1.0);
    const auto row_begin = static_cast<std::size_t>(std::max(0.0, std::ceil(y0 - 0.5)));
    const auto row_end = static_cast<std::size_t>(std::min(H - 1.0, std::floor(y1 - 0.5)) + 1.0);
    const double dx = c.bx - c.ax, dy = c.by - c.ay;
    const double len2 = dx * dx + dy * dy;
    const double inv_len2 = len2 > 0.0 ? 1.0 / len2 : 0.0;
    const double k = c.style.inv_two_sigma_sq;
    for (std::size_t row = row_begin; row < row_end; ++row) {
      const double py = static_cast<double>(row) + 0.5;
      for (std::size_t col = col_begin; col < col_end; ++col) {
        const double px = static_cast<double>(col) + 0.5;
        double u = ((px - c.ax) * dx + (py - c.ay) * dy) * inv_len2;
        u = std::clamp(u, 0.0, 1.0);
        const double qx = c.ax + u * dx, qy = c.ay + u * dy;
        const double ex = px - qx, ey = py - qy;
        const double d2 = ex * ex + ey * ey;
        const double g = std::exp(-d2 * k);
        if (g > 0.0) fn(row * cfg_.width + col, px, py, g, u, qx, qy);
      }
    }
  }

  const Topology& topo_;
  const RasterConfig& cfg_;
  double scale_x_, scale_y_;
  std::vector<StrokeStyle> styles_;
  std::vector<std::array<double, 4>> basis_;
  std::vector<double> prod_;
  std::vector<std::size_t> zeros_;
};

}  // namespace

void RasterConfig::validate() const {
  if (height < 8 || width < 8) throw ValidationError("raster size must be at least 8x8", "/raster");
  if (!(sigma > 0.0)) throw ValidationError("raster sigma must be positive", "/raster/sigma");
  if (samples_per_segment < 2)
    throw ValidationError("need at least 2 samples per segment", "/raster/samples_per_segment");
}

ad::Tensor rasterize_sequence(const ad::Tensor& points, const Topology& topology, double canvas_w,
                              double canvas_h, const RasterConfig& cfg) {
  cfg.validate();
  if (points.rank() != 3 || points.dim(0) != topology.point_count || points.dim(2) != 2)
    throw ShapeError("rasterize_sequence expects (N, K, 2) points with N = " +
                     std::to_string(topology.point_count));
  const std::size_t K = points.dim(1);
  const std::size_t n_pix = cfg.height * cfg.width;
  std::vector<double> out(K * n_pix);
  // Renderers keep per-pixel products for the backward pass.
  auto renderers = std::make_shared<std::vector<FrameRenderer>>();
  auto topo = std::make_shared<Topology>(topology);
  auto conf = std::make_shared<RasterConfig>(cfg);
  renderers->reserve(K);
  const double* pts = points.values().data();
  for (std::size_t k = 0; k < K; ++k) {
    renderers->emplace_back(*topo, canvas_w, canvas_h, *conf);
    auto frame = renderers->back().forward(pts + 2 * k, 2 * K);
    std::copy(frame.begin(), frame.end(), out.begin() + static_cast<std::ptrdiff_t>(k * n_pix));
  }
  if (!points.requires_grad()) renderers->clear();
  return ad::custom_op({K, cfg.height, cfg.width}, std::move(out), {points},
                       [renderers, topo, conf, K, n_pix](const ad::GradContext& c) {
                         const double* pts = c.in_values[0].data();
                         double* g = c.in_grads[0].data();
                         for (std::size_t k = 0; k < K; ++k)
                           (*renderers)[k].backward(pts + 2 * k, 2 * K, c.out_grad.data() + k * n_pix,
                                                    g + 2 * k);
                       });
}

ad::Tensor rasterize(const ad::Tensor& points, const Topology& topology, double canvas_w,
                     double canvas_h, const RasterConfig& cfg) {
  if (points.rank() != 2 || points.dim(1) != 2)
    throw ShapeError("rasterize expects (N, 2) points");
  const auto n = points.dim(0);
  auto seq = rasterize_sequence(ad::reshape(points, {n, 1, 2}), topology, canvas_w, canvas_h, cfg);
  return ad::reshape(seq, {cfg.height, cfg.width});
}

std::vector<RasterFrame> frames_of(const ad::Tensor& stack) {
  if (stack.rank() != 3) throw ShapeError("frames_of expects (K, H, W)");
  std::vector<RasterFrame> out;
  const auto K = stack.dim(0), H = stack.dim(1), W = stack.dim(2);
  const auto v = stack.values();
  for (std::size_t k = 0; k < K; ++k)
    out.push_back({H, W, std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(k * H * W),
                                             v.begin() + static_cast<std::ptrdiff_t>((k + 1) * H * W))});
  return out;
}

RasterFrame rasterize(const Sketch& sketch, const RasterConfig& cfg) {
  const auto pts = sketch.flat_points();
  std::vector<double> flat;
  flat.reserve(pts.size() * 2);
  for (const auto& p : pts) {
    flat.push_back(p.x);
    flat.push_back(p.y);
  }
  auto t = rasterize_sequence(ad::Tensor::from({pts.size(), 1, 2}, std::move(flat)),
                              sketch.topology(), sketch.canvas_w(), sketch.canvas_h(), cfg);
  return frames_of(t).front();
}

std::vector<RasterFrame> rasterize_sequence(const FrameSequence& seq, const RasterConfig& cfg) {
  auto values = std::vector<double>(seq.values().begin(), seq.values().end());
  auto t = rasterize_sequence(
      ad::Tensor::from({seq.point_count(), seq.frame_count(), 2}, std::move(values)),
      seq.topology(), seq.canvas_w(), seq.canvas_h(), cfg);
  return frames_of(t);
}

std::vector<double> patch_features(const RasterFrame& frame, std::size_t grid) {
  if (grid == 0 || frame.height % grid != 0 || frame.width % grid != 0)
    throw ValidationError("frame " + std::to_string(frame.height) + "x" + std::to_string(frame.width) +
                          " is not divisible into a " + std::to_string(grid) + "x" +
                          std::to_string(grid) + " grid");
  const std::size_t ph = frame.height / grid, pw = frame.width / grid;
  const std::size_t H = frame.height, W = frame.width;
  std::vector<double> out(grid * grid * 3, 0.0);
  for (std::size_t r = 0; r < H; ++r)
    for (std::size_t c = 0; c < W; ++c) {
      const double gx = 0.5 * (frame.at(r, std::min(c + 1, W - 1)) - frame.at(r, c == 0 ? 0 : c - 1));
      const double gy = 0.5 * (frame.at(std::min(r + 1, H - 1), c) - frame.at(r == 0 ? 0 : r - 1, c));
      const std::size_t patch = (r / ph) * grid + c / pw;
      out[patch * 3] += frame.at(r, c);
      out[patch * 3 + 1] += std::abs(gx);
      out[patch * 3 + 2] += std::abs(gy);
    }
  const double area = static_cast<double>(ph * pw);
  for (auto& v : out) v /= area;
  return out;
}

std::vector<std::uint8_t> to_gray8(const RasterFrame& frame) {
  std::vector<std::uint8_t> out(frame.intensities.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = std::clamp(1.0 - frame.intensities[i], 0.0, 1.0);
    out[i] = static_cast<std::uint8_t>(std::lround(255.0 * v));
  }
  return out;
}

namespace {
struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;
}  // namespace

void write_png(const std::filesystem::path& path, const RasterFrame& frame) {
  File fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw Error(ErrorCode::io, "cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::io, "libpng initialisation failed");
  }
  const auto pixels = to_gray8(frame);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::io, "failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(frame.width), static_cast<png_uint_32>(frame.height),
               8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t r = 0; r < frame.height; ++r)
    png_write_row(png, const_cast<png_bytep>(pixels.data() + r * frame.width));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

GrayImage read_png(const std::filesystem::path& path) {
  File fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw Error(ErrorCode::io, "cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::io, "libpng initialisation failed");
  }
  GrayImage img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::io, "failed reading " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  if (png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY || png_get_bit_depth(png, info) != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::io, path.string() + " is not an 8-bit grayscale PNG");
  }
  img.width = png_get_image_width(png, info);
  img.height = png_get_image_height(png, info);
  img.pixels.resize(img.width * img.height);
  for (std::size_t r = 0; r < img.height; ++r) png_read_row(png, img.pixels.data() + r * img.width, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace sketchmotion::raster
