#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "sketchmotion/geometry.hpp"

namespace sketchmotion::motion {

/// Strokes that no assignment mentions land here and never move in stage 1.
inline constexpr int kStaticGroup = 0;

inline constexpr std::size_t kDefaultFrameCount = 24;
inline constexpr std::size_t kMinFrameCount = 8;
inline constexpr std::size_t kMaxFrameCount = 64;

struct Group {
  int id = 0;
  std::string name;
  std::vector<int> strokes;  // in sketch order

  friend bool operator==(const Group&, const Group&) = default;
};

/// Every stroke of the sketch belongs to exactly one group.
struct GroupPartition {
  std::vector<Group> groups;  // ordered by group id

  std::size_t size() const { return groups.size(); }
  const Group& group(int id) const;
  int group_of(int stroke_id) const;
};

struct Keyframe {
  std::size_t frame = 1;  // 1..K
  Point2 offset;

  friend bool operator==(const Keyframe&, const Keyframe&) = default;
};

/// Per-group keyframes, normalized so each list starts with (1, (0,0)) and
/// ends at frame K.
struct TrajectorySpec {
  std::size_t frame_count = kDefaultFrameCount;
  std::map<int, std::vector<Keyframe>> keyframes;
};

/// Points of one group over K frames (N_i x K x 2, canvas units) with the
/// topology of its strokes.
struct GroupTensor {
  int group_id = 0;
  Topology topology;  // offsets are local to the group
  std::size_t frame_count = 0;
  std::vector<double> points;

  std::size_t point_count() const { return topology.point_count; }
  Point2 at(std::size_t point, std::size_t frame) const {
    const auto i = (point * frame_count + frame - 1) * 2;
    return {points[i], points[i + 1]};
  }
};

/// `assignment` maps stroke id -> group id; `names` optionally labels groups.
/// Unassigned strokes form group 0 (omitted when empty).
GroupPartition assign_groups(const Sketch& sketch, const std::map<int, int>& assignment,
                             const std::map<int, std::string>& names = {});

/// Checks a user group list against the sketch and returns the partition it
/// describes (strokes left out go to group 0).
GroupPartition partition_from_groups(const Sketch& sketch, const std::vector<Group>& groups);

/// Validates raw keyframes and produces a normalized spec. Groups without
/// keyframes stay at rest; a missing frame-1 keyframe is inserted as zero.
TrajectorySpec make_trajectory(const GroupPartition& partition,
                               const std::map<int, std::vector<Keyframe>>& raw,
                               std::size_t frame_count);

/// Piecewise-linear offsets for frames 1..K; exact at keyframes.
std::vector<Point2> interpolate_offsets(const std::vector<Keyframe>& keyframes,
                                        std::size_t frame_count);

std::vector<GroupTensor> build_coarse_animation(const Sketch& sketch,
                                                const GroupPartition& partition,
                                                const TrajectorySpec& traj,
                                                std::size_t frame_count);

/// Restores original stroke order; fails on missing or duplicated strokes.
FrameSequence merge_groups(const std::vector<GroupTensor>& groups, const Topology& original,
                           double canvas_w, double canvas_h);

/// Inverse of merge_groups for a given partition.
std::vector<GroupTensor> split_groups(const FrameSequence& seq, const GroupPartition& partition);

/// Coarse animation frames as a single sequence.
FrameSequence coarse_sequence(const Sketch& sketch, const GroupPartition& partition,
                              const TrajectorySpec& traj);

}  // namespace sketchmotion::motion
