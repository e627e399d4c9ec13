#pragma once

#include <string>
#include <string_view>

#include "sketchmotion/geometry.hpp"

namespace sketchmotion {

/// Parses the SVG subset the engine animates: path elements built from
/// M/m, C/c, L/l, H/h, V/v and Q/q. Lines and quadratics are elevated to
/// cubics; each subpath becomes its own stroke. Ancestor `g`/`svg`
/// transforms may only translate and scale.
///
/// Throws ParseError (with byte offset) for malformed XML, UnsupportedFeature
/// for commands or elements outside the subset, and Error{empty_sketch} when
/// nothing drawable is found.
Sketch parse_svg(std::string_view svg_text);

/// Emits absolute M/C paths, one per stroke, with stroke ids preserved in a
/// `data-stroke-id` attribute. Coordinates use shortest round-trip formatting.
std::string serialize_svg(const Sketch& sketch);

/// Shortest decimal text that parses back to exactly `value`.
std::string format_number(double value);

}  // namespace sketchmotion
