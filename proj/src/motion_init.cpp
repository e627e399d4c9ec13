#include "sketchmotion/motion_init.hpp"

#include <algorithm>
#include <set>

#include "sketchmotion/error.hpp"

namespace sketchmotion::motion {

const Group& GroupPartition::group(int id) const {
  for (const auto& g : groups)
    if (g.id == id) return g;
  throw Error(ErrorCode::not_found, "unknown group id " + std::to_string(id));
}

int GroupPartition::group_of(int stroke_id) const {
  for (const auto& g : groups)
    if (std::find(g.strokes.begin(), g.strokes.end(), stroke_id) != g.strokes.end()) return g.id;
  throw Error(ErrorCode::not_found, "stroke " + std::to_string(stroke_id) + " is in no group");
}

GroupPartition assign_groups(const Sketch& sketch, const std::map<int, int>& assignment,
                             const std::map<int, std::string>& names) {
  std::set<int> known;
  for (const auto& s : sketch.strokes()) known.insert(s.id);
  for (const auto& [stroke, group] : assignment) {
    if (!known.contains(stroke))
      throw ValidationError("assignment references unknown stroke " + std::to_string(stroke),
                            "/groups");
    if (group < 0)
      throw ValidationError("group ids must be non-negative, got " + std::to_string(group),
                            "/groups");
  }

  std::map<int, Group> by_id;
  for (const auto& s : sketch.strokes()) {
    const auto it = assignment.find(s.id);
    const int gid = it == assignment.end() ? kStaticGroup : it->second;
    auto& g = by_id[gid];
    g.id = gid;
    g.strokes.push_back(s.id);
  }
  GroupPartition out;
  for (auto& [gid, g] : by_id) {
    if (const auto n = names.find(gid); n != names.end()) g.name = n->second;
    else if (gid == kStaticGroup) g.name = "static";
    else g.name = "group " + std::to_string(gid);
    out.groups.push_back(std::move(g));
  }
  return out;
}

GroupPartition partition_from_groups(const Sketch& sketch, const std::vector<Group>& groups) {
  std::map<int, int> assignment;
  std::map<int, std::string> names;
  std::set<int> group_ids;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& g = groups[gi];
    const auto field = "/groups/" + std::to_string(gi);
    if (!group_ids.insert(g.id).second)
      throw ValidationError("duplicate group id " + std::to_string(g.id), field + "/id");
    names[g.id] = g.name;
    for (const int stroke : g.strokes) {
      if (!assignment.emplace(stroke, g.id).second)
        throw ValidationError("stroke " + std::to_string(stroke) + " is assigned to two groups",
                              field + "/strokes");
    }
  }
  try {
    auto p = assign_groups(sketch, assignment, names);
    return p;
  } catch (const ValidationError& e) {
    throw ValidationError(e.what(), "/groups");
  }
}

TrajectorySpec make_trajectory(const GroupPartition& partition,
                               const std::map<int, std::vector<Keyframe>>& raw,
                               std::size_t frame_count) {
  if (frame_count < 2) throw ValidationError("K must be at least 2", "/K");
  TrajectorySpec spec;
  spec.frame_count = frame_count;
  for (const auto& [gid, frames] : raw) {
    const auto field = "/keyframes/group/" + std::to_string(gid);
    bool found = false;
    for (const auto& g : partition.groups) found = found || g.id == gid;
    if (!found)
      throw ValidationError("keyframes reference unknown group " + std::to_string(gid), field);
    if (frames.empty()) continue;
    std::vector<Keyframe> kfs = frames;
    for (std::size_t i = 0; i < kfs.size(); ++i) {
      if (kfs[i].frame < 1 || kfs[i].frame > frame_count)
        throw ValidationError("keyframe frame " + std::to_string(kfs[i].frame) +
                                  " outside 1.." + std::to_string(frame_count),
                              field + "/" + std::to_string(i) + "/frame");
      if (i > 0 && kfs[i].frame <= kfs[i - 1].frame)
        throw ValidationError("keyframe frames must be strictly increasing",
                              field + "/" + std::to_string(i) + "/frame");
    }
    if (kfs.front().frame == 1) {
      if (kfs.front().offset.x != 0.0 || kfs.front().offset.y != 0.0)
        throw ValidationError(
            "first keyframe must be frame 1 with zero offset: the input sketch is the first "
            "frame",
            field + "/0");
    } else {
      kfs.insert(kfs.begin(), Keyframe{1, {0.0, 0.0}});
    }
    if (kfs.back().frame != frame_count)
      throw ValidationError("last keyframe must be at frame K=" + std::to_string(frame_count),
                            field + "/" + std::to_string(frames.size() - 1) + "/frame");
    spec.keyframes[gid] = std::move(kfs);
  }
  for (const auto& g : partition.groups)
    if (!spec.keyframes.contains(g.id))
      spec.keyframes[g.id] = {Keyframe{1, {0.0, 0.0}}, Keyframe{frame_count, {0.0, 0.0}}};
  return spec;
}

std::vector<Point2> interpolate_offsets(const std::vector<Keyframe>& keyframes,
                                        std::size_t frame_count) {
  if (keyframes.size() < 2) throw ValidationError("interpolation needs at least 2 keyframes");
  for (std::size_t i = 1; i < keyframes.size(); ++i)
    if (keyframes[i].frame <= keyframes[i - 1].frame)
      throw ValidationError("keyframe frames must be strictly increasing");
  if (keyframes.front().frame < 1 || keyframes.back().frame > frame_count)
    throw ValidationError("keyframes outside frame range 1.." + std::to_string(frame_count));

  std::vector<Point2> out(frame_count);
  std::size_t seg = 0;
  for (std::size_t f = 1; f <= frame_count; ++f) {
    if (f <= keyframes.front().frame) {
      out[f - 1] = keyframes.front().offset;
      continue;
    }
    if (f >= keyframes.back().frame) {
      out[f - 1] = keyframes.back().offset;
      continue;
    }
    while (keyframes[seg + 1].frame < f) ++seg;
    const auto& a = keyframes[seg];
    const auto& b = keyframes[seg + 1];
    if (f == b.frame) {
      out[f - 1] = b.offset;
      continue;
    }
    const double t = static_cast<double>(f - a.frame) / static_cast<double>(b.frame - a.frame);
    out[f - 1] = {(1.0 - t) * a.offset.x + t * b.offset.x, (1.0 - t) * a.offset.y + t * b.offset.y};
  }
  return out;
}

std::vector<GroupTensor> build_coarse_animation(const Sketch& sketch,
                                                const GroupPartition& partition,
                                                const TrajectorySpec& traj,
                                                std::size_t frame_count) {
  if (traj.frame_count != frame_count)
    throw ValidationError("trajectory K=" + std::to_string(traj.frame_count) +
                              " does not match configured K=" + std::to_string(frame_count),
                          "/K");
  std::vector<GroupTensor> out;
  out.reserve(partition.size());
  for (const auto& g : partition.groups) {
    const auto kf = traj.keyframes.find(g.id);
    const auto offsets =
        kf == traj.keyframes.end()
            ? std::vector<Point2>(frame_count)
            : interpolate_offsets(kf->second, frame_count);
    GroupTensor gt;
    gt.group_id = g.id;
    gt.frame_count = frame_count;
    for (const int sid : g.strokes) {
      const auto& s = sketch.stroke(sid);
      gt.topology.strokes.push_back({s.id, gt.topology.point_count, s.points.size(), s.width});
      gt.topology.point_count += s.points.size();
      for (const auto& p : s.points)
        for (std::size_t k = 0; k < frame_count; ++k) {
          // Frame 1 is the input sketch by construction (offset exactly zero).
          gt.points.push_back(k == 0 ? p.x : p.x + offsets[k].x);
          gt.points.push_back(k == 0 ? p.y : p.y + offsets[k].y);
        }
    }
    out.push_back(std::move(gt));
  }
  return out;
}

FrameSequence merge_groups(const std::vector<GroupTensor>& groups, const Topology& original,
                           double canvas_w, double canvas_h) {
  if (groups.empty()) throw ValidationError("nothing to merge");
  const std::size_t frames = groups.front().frame_count;
  std::vector<double> values(original.point_count * frames * 2, 0.0);
  std::vector<bool> seen(original.strokes.size(), false);
  for (const auto& g : groups) {
    if (g.frame_count != frames) throw ShapeError("groups disagree on frame count");
    for (const auto& span : g.topology.strokes) {
      std::size_t idx = 0;
      try {
        idx = original.index_of(span.id);
      } catch (const Error&) {
        throw ValidationError("merge: stroke " + std::to_string(span.id) +
                              " is not part of the sketch");
      }
      if (seen[idx])
        throw ValidationError("merge: stroke " + std::to_string(span.id) + " appears twice");
      seen[idx] = true;
      const auto& dst = original.strokes[idx];
      if (dst.count != span.count)
        throw ShapeError("merge: stroke " + std::to_string(span.id) + " point count changed");
      const auto src_begin = g.points.begin() + static_cast<std::ptrdiff_t>(span.offset * frames * 2);
      std::copy(src_begin, src_begin + static_cast<std::ptrdiff_t>(span.count * frames * 2),
                values.begin() + static_cast<std::ptrdiff_t>(dst.offset * frames * 2));
    }
  }
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (!seen[i])
      throw ValidationError("merge: stroke " + std::to_string(original.strokes[i].id) +
                            " is missing");
  return FrameSequence(original, canvas_w, canvas_h, frames, std::move(values));
}

std::vector<GroupTensor> split_groups(const FrameSequence& seq, const GroupPartition& partition) {
  const auto frames = seq.frame_count();
  const auto& topo = seq.topology();
  std::vector<GroupTensor> out;
  for (const auto& g : partition.groups) {
    GroupTensor gt;
    gt.group_id = g.id;
    gt.frame_count = frames;
    for (const int sid : g.strokes) {
      const auto& span = topo.strokes[topo.index_of(sid)];
      gt.topology.strokes.push_back({span.id, gt.topology.point_count, span.count, span.width});
      gt.topology.point_count += span.count;
      const auto vals = seq.values().subspan(span.offset * frames * 2, span.count * frames * 2);
      gt.points.insert(gt.points.end(), vals.begin(), vals.end());
    }
    out.push_back(std::move(gt));
  }
  return out;
}

FrameSequence coarse_sequence(const Sketch& sketch, const GroupPartition& partition,
                              const TrajectorySpec& traj) {
  return merge_groups(build_coarse_animation(sketch, partition, traj, traj.frame_count),
                      sketch.topology(), sketch.canvas_w(), sketch.canvas_h());
}

}  // namespace sketchmotion::motion
