#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "sketchmotion/gdn.hpp"
#include "sketchmotion/geometry.hpp"
#include "sketchmotion/guidance.hpp"
#include "sketchmotion/motion_init.hpp"
#include "sketchmotion/optimize.hpp"

namespace sketchmotion::project {

inline constexpr const char* kProjectVersion = "v1";

struct KeyframeEntry {
  int group = 0;
  std::size_t frame = 1;
  double dx = 0.0;
  double dy = 0.0;

  friend bool operator==(const KeyframeEntry&, const KeyframeEntry&) = default;
};

/// The project file: the single source of truth for CLI, service and UI.
struct Project {
  std::string svg;
  double canvas_w = 0.0;
  double canvas_h = 0.0;
  std::size_t frames = motion::kDefaultFrameCount;
  std::vector<motion::Group> groups;
  std::vector<KeyframeEntry> keyframes;
  gdn::GdnConfig gdn;
  optimize::OptimizerConfig optimizer;
  guidance::GuidanceConfig guidance;  // endpoint is never stored
};

/// New project around an SVG: one group holding every stroke, no keyframes.
Project from_svg(std::string svg_text, std::size_t frames = motion::kDefaultFrameCount);

/// Everything derived from a valid project.
struct Scene {
  Sketch sketch;
  motion::GroupPartition partition;
  motion::TrajectorySpec trajectory;
};

/// Full semantic validation through the motion-init validators. Errors carry
/// JSON-pointer fields into the project document (e.g. "/keyframes/2/frame").
Scene realize(const Project& p);

/// Keyframes grouped per group id, in document order.
std::map<int, std::vector<motion::Keyframe>> keyframe_map(const std::vector<KeyframeEntry>& entries);

std::string to_json(const Project& p);
/// Throws ParseError on malformed JSON, Error{version} on an unknown version,
/// ValidationError (with field) on schema or semantic violations.
Project parse_project(std::string_view text);

/// Writes `bytes` to `path` through "<path>.tmp" and rename. `before_rename`
/// runs after the temp file is complete (tests inject faults there).
void atomic_write(const std::filesystem::path& path, std::string_view bytes,
                  const std::function<void(const std::filesystem::path&)>& before_rename = {});

void save_project(const std::filesystem::path& path, const Project& p,
                  const std::function<void(const std::filesystem::path&)>& before_rename = {});
Project load_project(const std::filesystem::path& path);

/// Coarse animation of a validated project.
FrameSequence coarse_animation(const Scene& scene);

}  // namespace sketchmotion::project
