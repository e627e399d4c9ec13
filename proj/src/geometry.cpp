#include "sketchmotion/geometry.hpp"

#include <cmath>
#include <set>
#include <string>

#include "sketchmotion/error.hpp"

namespace sketchmotion {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::parse: return "parse_error";
    case ErrorCode::unsupported_feature: return "unsupported_feature";
    case ErrorCode::empty_sketch: return "empty_sketch";
    case ErrorCode::validation: return "validation_error";
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::domain: return "domain_error";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::io: return "io_error";
    case ErrorCode::version: return "version_mismatch";
    case ErrorCode::remote: return "remote_error";
    case ErrorCode::non_finite: return "non_finite";
  }
  return "unknown";
}

std::size_t Topology::index_of(int stroke_id) const {
  for (std::size_t i = 0; i < strokes.size(); ++i)
    if (strokes[i].id == stroke_id) return i;
  throw Error(ErrorCode::not_found, "unknown stroke id " + std::to_string(stroke_id));
}

Sketch::Sketch(std::vector<Stroke> strokes, double canvas_w, double canvas_h)
    : strokes_(std::move(strokes)), canvas_w_(canvas_w), canvas_h_(canvas_h) {
  if (!(canvas_w_ > 0.0) || !(canvas_h_ > 0.0) || !std::isfinite(canvas_w_) ||
      !std::isfinite(canvas_h_))
    throw ValidationError("canvas dimensions must be positive", "/canvas");
  if (strokes_.empty()) throw Error(ErrorCode::empty_sketch, "sketch has no strokes");
  std::set<int> ids;
  for (const auto& s : strokes_) {
    if (!ids.insert(s.id).second)
      throw ValidationError("duplicate stroke id " + std::to_string(s.id), "/strokes");
    if (s.points.size() < 4 || s.points.size() % 3 != 1)
      throw ValidationError("stroke " + std::to_string(s.id) +
                                " must have 3s+1 control points (s >= 1), got " +
                                std::to_string(s.points.size()),
                            "/strokes");
    if (!(s.width > 0.0))
      throw ValidationError("stroke " + std::to_string(s.id) + " width must be positive",
                            "/strokes");
    for (const auto& p : s.points)
      if (!std::isfinite(p.x) || !std::isfinite(p.y))
        throw ValidationError("stroke " + std::to_string(s.id) + " has a non-finite point",
                              "/strokes");
  }
}

std::size_t Sketch::point_count() const {
  std::size_t n = 0;
  for (const auto& s : strokes_) n += s.points.size();
  return n;
}

Topology Sketch::topology() const {
  Topology t;
  for (const auto& s : strokes_) {
    t.strokes.push_back({s.id, t.point_count, s.points.size(), s.width});
    t.point_count += s.points.size();
  }
  return t;
}

std::vector<Point2> Sketch::flat_points() const {
  std::vector<Point2> out;
  out.reserve(point_count());
  for (const auto& s : strokes_) out.insert(out.end(), s.points.begin(), s.points.end());
  return out;
}

const Stroke& Sketch::stroke(int id) const {
  for (const auto& s : strokes_)
    if (s.id == id) return s;
  throw Error(ErrorCode::not_found, "unknown stroke id " + std::to_string(id));
}

FrameSequence::FrameSequence(Topology topology, double canvas_w, double canvas_h,
                             std::size_t frames, std::vector<double> values)
    : topology_(std::move(topology)),
      canvas_w_(canvas_w),
      canvas_h_(canvas_h),
      frames_(frames),
      values_(std::move(values)) {
  if (frames_ < 2) throw ValidationError("frame count must be at least 2", "/K");
  if (values_.size() != topology_.point_count * frames_ * 2)
    throw ShapeError("frame sequence expects " + std::to_string(topology_.point_count) + "x" +
                     std::to_string(frames_) + "x2 values, got " +
                     std::to_string(values_.size()));
}

std::size_t FrameSequence::index(std::size_t point, std::size_t frame) const {
  if (point >= topology_.point_count || frame < 1 || frame > frames_)
    throw std::out_of_range("frame sequence index out of range");
  return (point * frames_ + (frame - 1)) * 2;
}

Point2 FrameSequence::at(std::size_t point, std::size_t frame) const {
  const auto i = index(point, frame);
  return {values_[i], values_[i + 1]};
}

void FrameSequence::set(std::size_t point, std::size_t frame, Point2 p) {
  const auto i = index(point, frame);
  values_[i] = p.x;
  values_[i + 1] = p.y;
}

Sketch FrameSequence::frame(std::size_t k) const {
  std::vector<Stroke> strokes;
  strokes.reserve(topology_.strokes.size());
  for (const auto& span : topology_.strokes) {
    Stroke s{span.id, {}, span.width};
    s.points.reserve(span.count);
    for (std::size_t i = 0; i < span.count; ++i) s.points.push_back(at(span.offset + i, k));
    strokes.push_back(std::move(s));
  }
  return Sketch(std::move(strokes), canvas_w_, canvas_h_);
}

std::vector<Point2> NormalizedPoints::denormalize() const {
  std::vector<Point2> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].x = (values[2 * i] + 1.0) * canvas_w / 2.0;
    out[i].y = (values[2 * i + 1] + 1.0) * canvas_h / 2.0;
  }
  return out;
}

NormalizedPoints normalize(std::span<const Point2> points, double canvas_w, double canvas_h) {
  if (!(canvas_w > 0.0) || !(canvas_h > 0.0))
    throw ValidationError("cannot normalize against a zero-sized canvas", "/canvas");
  NormalizedPoints out;
  out.canvas_w = canvas_w;
  out.canvas_h = canvas_h;
  out.values.reserve(points.size() * 2);
  for (const auto& p : points) {
    out.values.push_back(2.0 * p.x / canvas_w - 1.0);
    out.values.push_back(2.0 * p.y / canvas_h - 1.0);
  }
  return out;
}

NormalizedPoints normalize(const Sketch& sketch) {
  const auto pts = sketch.flat_points();
  return normalize(pts, sketch.canvas_w(), sketch.canvas_h());
}

FrameSequence replicate(const Sketch& sketch, std::size_t frames) {
  if (frames < 2) throw ValidationError("replicate needs K >= 2", "/K");
  const auto pts = sketch.flat_points();
  std::vector<double> values;
  values.reserve(pts.size() * frames * 2);
  for (const auto& p : pts)
    for (std::size_t k = 0; k < frames; ++k) {
      values.push_back(p.x);
      values.push_back(p.y);
    }
  return FrameSequence(sketch.topology(), sketch.canvas_w(), sketch.canvas_h(), frames,
                       std::move(values));
}

FrameSequence stack_frames(const std::vector<Sketch>& frames) {
  if (frames.size() < 2) throw ValidationError("an animation needs at least 2 frames");
  const auto& first = frames.front();
  const Topology topo = first.topology();
  const auto K = frames.size();
  std::vector<double> values(topo.point_count * K * 2);
  for (std::size_t k = 0; k < K; ++k) {
    const auto& f = frames[k];
    if (f.topology() != topo || f.canvas_w() != first.canvas_w() || f.canvas_h() != first.canvas_h())
      throw ShapeError("frame " + std::to_string(k + 1) + " does not match frame 1");
    const auto pts = f.flat_points();
    for (std::size_t n = 0; n < pts.size(); ++n) {
      values[(n * K + k) * 2] = pts[n].x;
      values[(n * K + k) * 2 + 1] = pts[n].y;
    }
  }
  return FrameSequence(topo, first.canvas_w(), first.canvas_h(), K, std::move(values));
}

FrameSequence apply_displacement(const FrameSequence& seq, std::span<const double> delta) {
  if (delta.size() != seq.values().size())
    throw ShapeError("displacement has " + std::to_string(delta.size()) +
                     " values, sequence has " + std::to_string(seq.values().size()));
  std::vector<double> values(seq.values().begin(), seq.values().end());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] += delta[i];
  return FrameSequence(seq.topology(), seq.canvas_w(), seq.canvas_h(), seq.frame_count(),
                       std::move(values));
}

}  // namespace sketchmotion
