#include "sketchmotion/svg.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <optional>
#include <set>
#include <sstream>
#include <vector>

#include "sketchmotion/error.hpp"

namespace sketchmotion {
namespace {

// ---------------------------------------------------------------------------
// XML scanning
// ---------------------------------------------------------------------------

struct Attribute {
  std::string name;
  std::string value;
};

struct Element {
  std::string name;
  std::vector<Attribute> attributes;
  std::size_t offset = 0;
  std::vector<Element> children;

  const std::string* attr(std::string_view key) const {
    for (const auto& a : attributes)
      if (a.name == key) return &a.value;
    return nullptr;
  }
};

std::string local_name(std::string_view qname) {
  const auto colon = qname.find(':');
  return std::string(colon == std::string_view::npos ? qname : qname.substr(colon + 1));
}

std::string decode_entities(std::string_view raw, std::size_t base_offset) {
  std::string out;
  out.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] != '&') {
      out.push_back(raw[i]);
      continue;
    }
    const auto semi = raw.find(';', i);
    if (semi == std::string_view::npos) throw ParseError("unterminated entity", base_offset + i);
    const auto ent = raw.substr(i + 1, semi - i - 1);
    if (ent == "lt") out.push_back('<');
    else if (ent == "gt") out.push_back('>');
    else if (ent == "amp") out.push_back('&');
    else if (ent == "quot") out.push_back('"');
    else if (ent == "apos") out.push_back('\'');
    else if (!ent.empty() && ent[0] == '#') {
      unsigned code = 0;
      const bool hex = ent.size() > 1 && (ent[1] == 'x' || ent[1] == 'X');
      const auto digits = ent.substr(hex ? 2 : 1);
      auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), code,
                                     hex ? 16 : 10);
      if (ec != std::errc() || p != digits.data() + digits.size() || code > 0x7f)
        throw ParseError("unsupported character reference", base_offset + i);
      out.push_back(static_cast<char>(code));
    } else {
      throw ParseError("unknown entity '&" + std::string(ent) + ";'", base_offset + i);
    }
    i = semi;
  }
  return out;
}

class XmlScanner {
 public:
  explicit XmlScanner(std::string_view text) : text_(text) {}

  Element parse_document() {
    std::optional<Element> root;
    while (true) {
      skip_misc();
      if (pos_ >= text_.size()) break;
      if (text_[pos_] != '<') throw ParseError("text outside the root element", pos_);
      if (root) throw ParseError("more than one root element", pos_);
      root = parse_element();
    }
    if (!root) throw ParseError("document has no root element", pos_);
    return *std::move(root);
  }

 private:
  bool starts_with(std::string_view s) const { return text_.substr(pos_, s.size()) == s; }

  void expect_end(std::string_view terminator, std::string_view what) {
    const auto end = text_.find(terminator, pos_);
    if (end == std::string_view::npos)
      throw ParseError("unterminated " + std::string(what), pos_);
    pos_ = end + terminator.size();
  }

  // Whitespace, comments, processing instructions and the doctype.
  void skip_misc() {
    while (pos_ < text_.size()) {
      if (std::isspace(static_cast<unsigned char>(text_[pos_]))) {
        ++pos_;
      } else if (starts_with("<!--")) {
        expect_end("-->", "comment");
      } else if (starts_with("<?")) {
        expect_end("?>", "processing instruction");
      } else if (starts_with("<!DOCTYPE")) {
        skip_doctype();
      } else {
        break;
      }
    }
  }

  void skip_doctype() {
    const auto start = pos_;
    int depth = 0;
    for (; pos_ < text_.size(); ++pos_) {
      const char c = text_[pos_];
      if (c == '[') ++depth;
      else if (c == ']') --depth;
      else if (c == '>' && depth == 0) {
        ++pos_;
        return;
      }
    }
    throw ParseError("unterminated DOCTYPE", start);
  }

  static bool name_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == ':' || c == '-' ||
           c == '.';
  }

  std::string parse_name() {
    const auto start = pos_;
    while (pos_ < text_.size() && name_char(text_[pos_])) ++pos_;
    if (pos_ == start) throw ParseError("expected a name", pos_);
    return std::string(text_.substr(start, pos_ - start));
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  Element parse_element() {
    Element el;
    el.offset = pos_;
    ++pos_;  // '<'
    el.name = parse_name();
    while (true) {
      skip_space();
      if (pos_ >= text_.size()) throw ParseError("unexpected end of input in tag", el.offset);
      if (text_[pos_] == '/') {
        if (!starts_with("/>")) throw ParseError("expected '/>'", pos_);
        pos_ += 2;
        return el;
      }
      if (text_[pos_] == '>') {
        ++pos_;
        break;
      }
      const auto attr_offset = pos_;
      Attribute a;
      a.name = parse_name();
      skip_space();
      if (pos_ >= text_.size() || text_[pos_] != '=')
        throw ParseError("expected '=' after attribute '" + a.name + "'", pos_);
      ++pos_;
      skip_space();
      if (pos_ >= text_.size() || (text_[pos_] != '"' && text_[pos_] != '\''))
        throw ParseError("attribute value must be quoted", pos_);
      const char quote = text_[pos_++];
      const auto end = text_.find(quote, pos_);
      if (end == std::string_view::npos)
        throw ParseError("unterminated attribute value", attr_offset);
      a.value = decode_entities(text_.substr(pos_, end - pos_), pos_);
      pos_ = end + 1;
      for (const auto& other : el.attributes)
        if (other.name == a.name) throw ParseError("duplicate attribute '" + a.name + "'", attr_offset);
      el.attributes.push_back(std::move(a));
    }
    // content
    while (true) {
      if (pos_ >= text_.size())
        throw ParseError("element '" + el.name + "' is never closed", el.offset);
      if (starts_with("</")) {
        const auto close_offset = pos_;
        pos_ += 2;
        const auto name = parse_name();
        if (name != el.name)
          throw ParseError("mismatched closing tag '" + name + "' for '" + el.name + "'",
                           close_offset);
        skip_space();
        if (pos_ >= text_.size() || text_[pos_] != '>') throw ParseError("expected '>'", pos_);
        ++pos_;
        return el;
      }
      if (starts_with("<!--")) {
        expect_end("-->", "comment");
      } else if (starts_with("<![CDATA[")) {
        expect_end("]]>", "CDATA section");
      } else if (starts_with("<?")) {
        expect_end("?>", "processing instruction");
      } else if (text_[pos_] == '<') {
        el.children.push_back(parse_element());
      } else {
        const auto next = text_.find('<', pos_);
        pos_ = next == std::string_view::npos ? text_.size() : next;
      }
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// SVG semantics
// ---------------------------------------------------------------------------

/// x' = scale * x + translate, per axis.
struct ScaleTranslate {
  double sx = 1.0, sy = 1.0, tx = 0.0, ty = 0.0;

  Point2 apply(Point2 p) const { return {sx * p.x + tx, sy * p.y + ty}; }
  // this ∘ inner
  ScaleTranslate then_inner(const ScaleTranslate& inner) const {
    return {sx * inner.sx, sy * inner.sy, sx * inner.tx + tx, sy * inner.ty + ty};
  }
};

std::optional<double> parse_double(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  if (i < s.size() && s[i] == '+') ++i;
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data() + i, s.data() + s.size(), v);
  if (ec != std::errc()) return std::nullopt;
  return v;
}

std::vector<double> parse_number_list(std::string_view s) {
  std::vector<double> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (std::isspace(static_cast<unsigned char>(s[i])) || s[i] == ',')) ++i;
    if (i >= s.size()) break;
    if (s[i] == '+') ++i;
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data() + i, s.data() + s.size(), v);
    if (ec != std::errc()) throw ValidationError("malformed number list '" + std::string(s) + "'");
    out.push_back(v);
    i = static_cast<std::size_t>(p - s.data());
  }
  return out;
}

ScaleTranslate parse_transform(std::string_view t) {
  ScaleTranslate total;
  std::size_t i = 0;
  while (i < t.size()) {
    while (i < t.size() && (std::isspace(static_cast<unsigned char>(t[i])) || t[i] == ',')) ++i;
    if (i >= t.size()) break;
    const auto open = t.find('(', i);
    if (open == std::string_view::npos) throw UnsupportedFeature("transform '" + std::string(t) + "'");
    auto name = t.substr(i, open - i);
    while (!name.empty() && std::isspace(static_cast<unsigned char>(name.back())))
      name.remove_suffix(1);
    const auto close = t.find(')', open);
    if (close == std::string_view::npos) throw UnsupportedFeature("transform '" + std::string(t) + "'");
    const auto args = parse_number_list(t.substr(open + 1, close - open - 1));
    ScaleTranslate step;
    if (name == "translate" && (args.size() == 1 || args.size() == 2)) {
      step.tx = args[0];
      step.ty = args.size() == 2 ? args[1] : 0.0;
    } else if (name == "scale" && (args.size() == 1 || args.size() == 2)) {
      step.sx = args[0];
      step.sy = args.size() == 2 ? args[1] : args[0];
    } else {
      throw UnsupportedFeature("transform " + std::string(name) + "()");
    }
    total = total.then_inner(step);
    i = close + 1;
  }
  return total;
}

std::optional<double> parse_length(const std::string* s) {
  if (!s) return std::nullopt;
  std::string_view v(*s);
  if (v.find('%') != std::string_view::npos) return std::nullopt;
  return parse_double(v);
}

std::optional<std::string> style_property(const Element& el, std::string_view key) {
  if (const auto* direct = el.attr(key)) return *direct;
  const auto* style = el.attr("style");
  if (!style) return std::nullopt;
  std::string_view s(*style);
  std::size_t i = 0;
  while (i < s.size()) {
    auto semi = s.find(';', i);
    if (semi == std::string_view::npos) semi = s.size();
    auto decl = s.substr(i, semi - i);
    const auto colon = decl.find(':');
    if (colon != std::string_view::npos) {
      auto k = decl.substr(0, colon);
      auto val = decl.substr(colon + 1);
      auto trim = [](std::string_view x) {
        while (!x.empty() && std::isspace(static_cast<unsigned char>(x.front()))) x.remove_prefix(1);
        while (!x.empty() && std::isspace(static_cast<unsigned char>(x.back()))) x.remove_suffix(1);
        return x;
      };
      if (trim(k) == key) return std::string(trim(val));
    }
    i = semi + 1;
  }
  return std::nullopt;
}

struct PendingStroke {
  std::optional<int> id;
  Stroke stroke;
};

class PathDataParser {
 public:
  PathDataParser(std::string_view d, const ScaleTranslate& xf, double width)
      : d_(d), xf_(xf), width_(width) {}

  std::vector<Stroke> parse() {
    char cmd = 0;
    while (true) {
      skip_separators();
      if (pos_ >= d_.size()) break;
      const char c = d_[pos_];
      if (std::isalpha(static_cast<unsigned char>(c))) {
        cmd = c;
        ++pos_;
        if (std::string_view("MmCcLlHhVvQq").find(c) == std::string_view::npos)
          throw UnsupportedFeature(std::string("path command '") + c + "'");
      } else if (cmd == 0) {
        throw ValidationError("path data must start with a command");
      }
      // An implicit repeat of moveto is a lineto.
      execute(cmd);
      if (cmd == 'M') cmd = 'L';
      if (cmd == 'm') cmd = 'l';
    }
    flush();
    return std::move(strokes_);
  }

 private:
  void skip_separators() {
    while (pos_ < d_.size() && (std::isspace(static_cast<unsigned char>(d_[pos_])) || d_[pos_] == ','))
      ++pos_;
  }

  double number() {
    skip_separators();
    if (pos_ >= d_.size()) throw ValidationError("path data ended while expecting a number");
    if (d_[pos_] == '+') ++pos_;
    double v = 0.0;
    auto [p, ec] = std::from_chars(d_.data() + pos_, d_.data() + d_.size(), v);
    if (ec != std::errc())
      throw ValidationError("malformed number in path data near '" +
                            std::string(d_.substr(pos_, 12)) + "'");
    pos_ = static_cast<std::size_t>(p - d_.data());
    return v;
  }

  Point2 point(bool relative) {
    const double x = number();
    const double y = number();
    return relative ? Point2{current_.x + x, current_.y + y} : Point2{x, y};
  }

  void flush() {
    if (points_.size() >= 4) {
      Stroke s;
      s.width = width_;
      s.points.reserve(points_.size());
      for (const auto& p : points_) s.points.push_back(xf_.apply(p));
      strokes_.push_back(std::move(s));
    }
    points_.clear();
  }

  void cubic(Point2 c1, Point2 c2, Point2 end) {
    if (points_.empty()) points_.push_back(current_);
    points_.push_back(c1);
    points_.push_back(c2);
    points_.push_back(end);
    current_ = end;
  }

  void line(Point2 end) {
    const Point2 a = current_;
    const Point2 d{end.x - a.x, end.y - a.y};
    cubic({a.x + d.x / 3.0, a.y + d.y / 3.0}, {a.x + 2.0 * d.x / 3.0, a.y + 2.0 * d.y / 3.0}, end);
  }

  void quadratic(Point2 ctrl, Point2 end) {
    const Point2 a = current_;
    cubic({a.x + 2.0 / 3.0 * (ctrl.x - a.x), a.y + 2.0 / 3.0 * (ctrl.y - a.y)},
          {end.x + 2.0 / 3.0 * (ctrl.x - end.x), end.y + 2.0 / 3.0 * (ctrl.y - end.y)}, end);
  }

  void execute(char cmd) {
    const bool rel = std::islower(static_cast<unsigned char>(cmd));
    switch (std::toupper(static_cast<unsigned char>(cmd))) {
      case 'M':
        flush();
        current_ = point(rel);
        started_ = true;
        break;
      case 'L':
        require_start(cmd);
        line(point(rel));
        break;
      case 'H': {
        require_start(cmd);
        const double x = number();
        line({rel ? current_.x + x : x, current_.y});
        break;
      }
      case 'V': {
        require_start(cmd);
        const double y = number();
        line({current_.x, rel ? current_.y + y : y});
        break;
      }
      case 'C': {
        require_start(cmd);
        const Point2 base = current_;
        auto p = [&] {
          const double x = number();
          const double y = number();
          return rel ? Point2{base.x + x, base.y + y} : Point2{x, y};
        };
        const Point2 c1 = p();
        const Point2 c2 = p();
        const Point2 e = p();
        cubic(c1, c2, e);
        break;
      }
      case 'Q': {
        require_start(cmd);
        const Point2 base = current_;
        auto p = [&] {
          const double x = number();
          const double y = number();
          return rel ? Point2{base.x + x, base.y + y} : Point2{x, y};
        };
        const Point2 c = p();
        const Point2 e = p();
        quadratic(c, e);
        break;
      }
    }
  }

  void require_start(char cmd) const {
    if (!started_)
      throw ValidationError(std::string("path command '") + cmd + "' before any moveto");
  }

  std::string_view d_;
  ScaleTranslate xf_;
  double width_;
  std::size_t pos_ = 0;
  bool started_ = false;
  Point2 current_;
  std::vector<Point2> points_;
  std::vector<Stroke> strokes_;
};

const std::set<std::string, std::less<>>& ignored_elements() {
  static const std::set<std::string, std::less<>> names{
      "defs", "title", "desc", "metadata", "style", "clipPath", "mask", "linearGradient",
      "radialGradient", "pattern", "symbol", "filter", "marker"};
  return names;
}

void collect(const Element& el, const ScaleTranslate& parent, double inherited_width,
             std::vector<PendingStroke>& out) {
  const auto name = local_name(el.name);
  if (ignored_elements().contains(name)) return;

  ScaleTranslate xf = parent;
  if (const auto* t = el.attr("transform")) xf = parent.then_inner(parse_transform(*t));
  double width = inherited_width;
  if (auto w = style_property(el, "stroke-width")) {
    if (auto v = parse_double(*w)) width = *v;
  }

  if (name == "g" || name == "svg" || name == "a") {
    for (const auto& child : el.children) collect(child, xf, width, out);
    return;
  }
  if (name == "path") {
    const auto* d = el.attr("d");
    if (!d) return;
    const double scaled_width = width * std::sqrt(std::abs(xf.sx * xf.sy));
    auto strokes = PathDataParser(*d, xf, scaled_width).parse();
    std::optional<int> explicit_id;
    if (const auto* sid = el.attr("data-stroke-id"); sid && strokes.size() == 1) {
      int v = 0;
      auto [p, ec] = std::from_chars(sid->data(), sid->data() + sid->size(), v);
      if (ec == std::errc() && p == sid->data() + sid->size()) explicit_id = v;
    }
    for (auto& s : strokes) out.push_back({explicit_id, std::move(s)});
    return;
  }
  throw UnsupportedFeature("element <" + name + ">");
}

}  // namespace

std::string format_number(double value) {
  if (value == 0.0) return "0";
  std::array<char, 64> buf{};
  auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), p);
}

Sketch parse_svg(std::string_view svg_text) {
  const Element root = XmlScanner(svg_text).parse_document();
  if (local_name(root.name) != "svg")
    throw ParseError("root element is <" + root.name + ">, expected <svg>", root.offset);

  double canvas_w = 0.0, canvas_h = 0.0;
  ScaleTranslate base;
  if (const auto* vb = root.attr("viewBox")) {
    const auto nums = parse_number_list(*vb);
    if (nums.size() != 4) throw ValidationError("viewBox needs four numbers", "/svg/viewBox");
    base.tx = -nums[0];
    base.ty = -nums[1];
    canvas_w = nums[2];
    canvas_h = nums[3];
  } else {
    canvas_w = parse_length(root.attr("width")).value_or(0.0);
    canvas_h = parse_length(root.attr("height")).value_or(0.0);
  }
  if (!(canvas_w > 0.0) || !(canvas_h > 0.0))
    throw ValidationError("canvas size missing: set width/height or viewBox", "/svg");

  std::vector<PendingStroke> pending;
  collect(root, base, 1.0, pending);
  if (pending.empty()) throw Error(ErrorCode::empty_sketch, "SVG contains no drawable paths");

  std::set<int> used;
  for (const auto& p : pending)
    if (p.id && !used.insert(*p.id).second) {
      // Conflicting explicit ids: fall back to document order for everything.
      used.clear();
      for (auto& q : pending) q.id.reset();
      break;
    }
  std::vector<Stroke> strokes;
  strokes.reserve(pending.size());
  int next = 1;
  for (auto& p : pending) {
    if (!p.id) {
      while (used.contains(next)) ++next;
      p.id = next;
      used.insert(next);
    }
    p.stroke.id = *p.id;
    strokes.push_back(std::move(p.stroke));
  }
  return Sketch(std::move(strokes), canvas_w, canvas_h);
}

std::string serialize_svg(const Sketch& sketch) {
  std::ostringstream os;
  const auto w = format_number(sketch.canvas_w());
  const auto h = format_number(sketch.canvas_h());
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n";
  for (const auto& s : sketch.strokes()) {
    os << "  <path data-stroke-id=\"" << s.id << "\" d=\"M " << format_number(s.points[0].x) << ' '
       << format_number(s.points[0].y);
    for (std::size_t seg = 0; seg < s.segment_count(); ++seg) {
      os << " C";
      for (std::size_t j = 1; j <= 3; ++j) {
        const auto& p = s.points[3 * seg + j];
        os << ' ' << format_number(p.x) << ' ' << format_number(p.y);
      }
    }
    os << "\" fill=\"none\" stroke=\"black\" stroke-width=\"" << format_number(s.width)
       << "\" stroke-linecap=\"round\" stroke-linejoin=\"round\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace sketchmotion
