#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace sketchmotion {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

/// A polyline of cubic Bezier segments. Segment s uses points 3s..3s+3, so
/// consecutive segments share their endpoint and the count is 1 mod 3.
struct Stroke {
  int id = 0;
  std::vector<Point2> points;
  double width = 1.0;

  std::size_t segment_count() const { return points.empty() ? 0 : (points.size() - 1) / 3; }

  friend bool operator==(const Stroke&, const Stroke&) = default;
};

/// Location of one stroke inside the flat control-point array.
struct StrokeSpan {
  int id = 0;
  std::size_t offset = 0;
  std::size_t count = 0;
  double width = 1.0;

  friend bool operator==(const StrokeSpan&, const StrokeSpan&) = default;
};

struct Topology {
  std::vector<StrokeSpan> strokes;
  std::size_t point_count = 0;

  std::size_t index_of(int stroke_id) const;  // throws if absent
  friend bool operator==(const Topology&, const Topology&) = default;
};

class Sketch {
 public:
  Sketch(std::vector<Stroke> strokes, double canvas_w, double canvas_h);

  const std::vector<Stroke>& strokes() const { return strokes_; }
  double canvas_w() const { return canvas_w_; }
  double canvas_h() const { return canvas_h_; }

  /// Total number of control points N.
  std::size_t point_count() const;
  Topology topology() const;
  /// Control points of all strokes, concatenated in stroke order.
  std::vector<Point2> flat_points() const;
  const Stroke& stroke(int id) const;

  friend bool operator==(const Sketch&, const Sketch&) = default;

 private:
  std::vector<Stroke> strokes_;
  double canvas_w_;
  double canvas_h_;
};

/// K snapshots of the same stroke topology. Storage is N x K x 2, row-major.
/// Frame indices are 1-based.
class FrameSequence {
 public:
  FrameSequence(Topology topology, double canvas_w, double canvas_h, std::size_t frames,
                std::vector<double> values);

  const Topology& topology() const { return topology_; }
  double canvas_w() const { return canvas_w_; }
  double canvas_h() const { return canvas_h_; }
  std::size_t frame_count() const { return frames_; }
  std::size_t point_count() const { return topology_.point_count; }
  std::span<const double> values() const { return values_; }

  Point2 at(std::size_t point, std::size_t frame) const;
  void set(std::size_t point, std::size_t frame, Point2 p);

  /// Snapshot of frame k as a standalone sketch (widths and ids preserved).
  Sketch frame(std::size_t k) const;

  friend bool operator==(const FrameSequence&, const FrameSequence&) = default;

 private:
  std::size_t index(std::size_t point, std::size_t frame) const;

  Topology topology_;
  double canvas_w_;
  double canvas_h_;
  std::size_t frames_;
  std::vector<double> values_;
};

/// Points mapped to [-1, 1] for the network boundary.
struct NormalizedPoints {
  std::vector<double> values;  // N x 2
  double canvas_w = 1.0;
  double canvas_h = 1.0;

  std::size_t size() const { return values.size() / 2; }
  std::vector<Point2> denormalize() const;
};

NormalizedPoints normalize(const Sketch& sketch);
NormalizedPoints normalize(std::span<const Point2> points, double canvas_w, double canvas_h);

FrameSequence replicate(const Sketch& sketch, std::size_t frames);

/// Inverse of FrameSequence::frame over all k; every frame must share the
/// first one's topology and canvas.
FrameSequence stack_frames(const std::vector<Sketch>& frames);

/// out[n, k] = in[n, k] + delta[n, k]; delta is N x K x 2 row-major.
FrameSequence apply_displacement(const FrameSequence& seq, std::span<const double> delta);

}  // namespace sketchmotion
