#include "sketchmotion/project.hpp"

#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <regex>
#include <set>

#include "sketchmotion/error.hpp"
#include "sketchmotion/svg.hpp"

namespace sketchmotion::project {

using json = nlohmann::ordered_json;

Project from_svg(std::string svg_text, std::size_t frames) {
  const Sketch sk = parse_svg(svg_text);
  Project p;
  p.svg = std::move(svg_text);
  p.canvas_w = sk.canvas_w();
  p.canvas_h = sk.canvas_h();
  p.frames = frames;
  motion::Group all{1, "group 1", {}};
  for (const auto& s : sk.strokes()) all.strokes.push_back(s.id);
  p.groups.push_back(std::move(all));
  return p;
}

std::map<int, std::vector<motion::Keyframe>> keyframe_map(const std::vector<KeyframeEntry>& entries) {
  std::map<int, std::vector<motion::Keyframe>> out;
  for (const auto& e : entries) out[e.group].push_back({e.frame, {e.dx, e.dy}});
  return out;
}

Scene realize(const Project& p) {
  Sketch sketch = parse_svg(p.svg);
  if (sketch.canvas_w() != p.canvas_w || sketch.canvas_h() != p.canvas_h)
    throw ValidationError("canvas does not match the SVG viewport", "/canvas");
  if (p.frames < motion::kMinFrameCount || p.frames > motion::kMaxFrameCount)
    throw ValidationError("K must be between " + std::to_string(motion::kMinFrameCount) + " and " +
                              std::to_string(motion::kMaxFrameCount),
                          "/K");
  p.gdn.validate();
  p.optimizer.validate();
  p.guidance.validate();
  auto partition = motion::partition_from_groups(sketch, p.groups);

  std::map<int, std::vector<std::size_t>> flat;
  for (std::size_t i = 0; i < p.keyframes.size(); ++i) flat[p.keyframes[i].group].push_back(i);
  try {
    auto traj = motion::make_trajectory(partition, keyframe_map(p.keyframes), p.frames);
    return {std::move(sketch), std::move(partition), std::move(traj)};
  } catch (const ValidationError& e) {
    static const std::regex path(R"(^/keyframes/group/(-?\d+)(?:/(\d+)(/.*)?)?$)");
    std::smatch m;
    const std::string f = e.field();
    if (!std::regex_match(f, m, path)) throw;
    const auto& idx = flat[std::stoi(m[1].str())];
    std::string field = "/keyframes";
    if (!idx.empty()) {
      const auto i = m[2].matched ? std::stoul(m[2].str()) : 0;
      field += "/" + std::to_string(idx.at(std::min<std::size_t>(i, idx.size() - 1))) + m[3].str();
    }
    throw ValidationError(e.what(), field);
  }
}

FrameSequence coarse_animation(const Scene& scene) {
  return motion::coarse_sequence(scene.sketch, scene.partition, scene.trajectory);
}

// ---------------------------------------------------------------------------

std::string to_json(const Project& p) {
  json j;
  j["version"] = kProjectVersion;
  j["svg"] = p.svg;
  j["canvas"] = {{"w", p.canvas_w}, {"h", p.canvas_h}};
  j["K"] = p.frames;
  j["groups"] = json::array();
  for (const auto& g : p.groups) j["groups"].push_back({{"id", g.id}, {"name", g.name}, {"strokes", g.strokes}});
  j["keyframes"] = json::array();
  for (const auto& k : p.keyframes)
    j["keyframes"].push_back({{"group", k.group}, {"frame", k.frame}, {"dx", k.dx}, {"dy", k.dy}});
  const auto& g = p.gdn;
  j["gdn"] = {{"d", g.d},
              {"layers", g.layers},
              {"heads", g.heads},
              {"pe_bands", g.pe_bands},
              {"patch_grid", g.patch_grid},
              {"lambda_t", g.lambda_t},
              {"lambda_r", g.lambda_r},
              {"lambda_s", g.lambda_s},
              {"lambda_sh", g.lambda_sh}};
  const auto& o = p.optimizer;
  j["optimizer"] = {{"steps", o.steps},
                    {"lr_global", o.lr_global},
                    {"lr_local", o.lr_local},
                    {"beta1", o.beta1},
                    {"beta2", o.beta2},
                    {"eps", o.eps},
                    {"seed", o.seed},
                    {"snapshot_every", o.snapshot_every},
                    {"clip_norm", o.clip_norm}};
  const auto& w = p.guidance;
  j["guidance"] = {{"w_traj", w.w_traj},
                   {"w_shape", w.w_shape},
                   {"w_smooth", w.w_smooth},
                   {"w_remote", w.w_remote},
                   {"prompt", w.prompt}};
  return j.dump(2) + "\n";
}

namespace {

void only_keys(const json& j, const std::string& path, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ValidationError("expected an object", path.empty() ? "/" : path);
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!allowed.contains(k)) throw ValidationError("unknown property '" + k + "'", path + "/" + k);
}

const json& need(const json& j, const std::string& path, const char* key) {
  if (!j.contains(key)) throw ValidationError(std::string("missing property '") + key + "'", path + "/" + key);
  return j[key];
}

double number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ValidationError("expected a number", path);
  return v.get<double>();
}

std::uint64_t count(const json& v, const std::string& path) {
  if (!v.is_number_unsigned()) throw ValidationError("expected a non-negative integer", path);
  return v.get<std::uint64_t>();
}

int integer(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ValidationError("expected an integer", path);
  return v.get<int>();
}

std::string text(const json& v, const std::string& path) {
  if (!v.is_string()) throw ValidationError("expected a string", path);
  return v.get<std::string>();
}

template <class T, class F>
void optional(const json& j, const std::string& path, const char* key, T& out, F read) {
  if (j.contains(key)) out = static_cast<T>(read(j[key], path + "/" + key));
}

}  // namespace

Project parse_project(std::string_view text_in) {
  json j;
  try {
    j = json::parse(text_in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("project is not valid JSON: ") + e.what(), e.byte);
  }
  if (!j.is_object()) throw ValidationError("project must be a JSON object", "/");
  const std::string version = text(need(j, "", "version"), "/version");
  if (version != kProjectVersion)
    throw Error(ErrorCode::version,
                "unknown project version '" + version + "'; this build reads " + kProjectVersion +
                    " and has no migration for it",
                "/version");
  only_keys(j, "", {"version", "svg", "canvas", "K", "groups", "keyframes", "gdn", "optimizer", "guidance"});

  Project p;
  p.svg = text(need(j, "", "svg"), "/svg");
  const auto& canvas = need(j, "", "canvas");
  only_keys(canvas, "/canvas", {"w", "h"});
  p.canvas_w = number(need(canvas, "/canvas", "w"), "/canvas/w");
  p.canvas_h = number(need(canvas, "/canvas", "h"), "/canvas/h");
  p.frames = count(need(j, "", "K"), "/K");

  const auto& groups = need(j, "", "groups");
  if (!groups.is_array()) throw ValidationError("expected an array", "/groups");
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto path = "/groups/" + std::to_string(i);
    const auto& g = groups[i];
    only_keys(g, path, {"id", "name", "strokes"});
    motion::Group out;
    out.id = integer(need(g, path, "id"), path + "/id");
    if (g.contains("name")) out.name = text(g["name"], path + "/name");
    const auto& strokes = need(g, path, "strokes");
    if (!strokes.is_array()) throw ValidationError("expected an array", path + "/strokes");
    for (std::size_t s = 0; s < strokes.size(); ++s)
      out.strokes.push_back(integer(strokes[s], path + "/strokes/" + std::to_string(s)));
    p.groups.push_back(std::move(out));
  }

  const auto& kfs = need(j, "", "keyframes");
  if (!kfs.is_array()) throw ValidationError("expected an array", "/keyframes");
  for (std::size_t i = 0; i < kfs.size(); ++i) {
    const auto path = "/keyframes/" + std::to_string(i);
    const auto& k = kfs[i];
    only_keys(k, path, {"group", "frame", "dx", "dy"});
    p.keyframes.push_back({integer(need(k, path, "group"), path + "/group"),
                           count(need(k, path, "frame"), path + "/frame"),
                           number(need(k, path, "dx"), path + "/dx"),
                           number(need(k, path, "dy"), path + "/dy")});
  }

  if (j.contains("gdn")) {
    const auto& g = j["gdn"];
    only_keys(g, "/gdn", {"d", "layers", "heads", "pe_bands", "patch_grid", "lambda_t", "lambda_r", "lambda_s", "lambda_sh"});
    auto& c = p.gdn;
    optional(g, "/gdn", "d", c.d, count);
    optional(g, "/gdn", "layers", c.layers, count);
    optional(g, "/gdn", "heads", c.heads, count);
    optional(g, "/gdn", "pe_bands", c.pe_bands, count);
    optional(g, "/gdn", "patch_grid", c.patch_grid, count);
    optional(g, "/gdn", "lambda_t", c.lambda_t, number);
    optional(g, "/gdn", "lambda_r", c.lambda_r, number);
    optional(g, "/gdn", "lambda_s", c.lambda_s, number);
    optional(g, "/gdn", "lambda_sh", c.lambda_sh, number);
  }
  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    only_keys(o, "/optimizer", {"steps", "lr_global", "lr_local", "beta1", "beta2", "eps", "seed", "snapshot_every", "clip_norm"});
    auto& c = p.optimizer;
    optional(o, "/optimizer", "steps", c.steps, count);
    optional(o, "/optimizer", "lr_global", c.lr_global, number);
    optional(o, "/optimizer", "lr_local", c.lr_local, number);
    optional(o, "/optimizer", "beta1", c.beta1, number);
    optional(o, "/optimizer", "beta2", c.beta2, number);
    optional(o, "/optimizer", "eps", c.eps, number);
    optional(o, "/optimizer", "seed", c.seed, count);
    optional(o, "/optimizer", "snapshot_every", c.snapshot_every, count);
    optional(o, "/optimizer", "clip_norm", c.clip_norm, number);
  }
  if (j.contains("guidance")) {
    const auto& w = j["guidance"];
    only_keys(w, "/guidance", {"w_traj", "w_shape", "w_smooth", "w_remote", "prompt"});
    auto& c = p.guidance;
    optional(w, "/guidance", "w_traj", c.w_traj, number);
    optional(w, "/guidance", "w_shape", c.w_shape, number);
    optional(w, "/guidance", "w_smooth", c.w_smooth, number);
    optional(w, "/guidance", "w_remote", c.w_remote, number);
    if (w.contains("prompt")) c.prompt = text(w["prompt"], "/guidance/prompt");
  }
  return p;
}

// ---------------------------------------------------------------------------

void atomic_write(const std::filesystem::path& path, std::string_view bytes,
                  const std::function<void(const std::filesystem::path&)>& before_rename) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::io, "failed writing " + tmp.string());
  }
  if (before_rename) before_rename(tmp);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::io, "cannot replace " + path.string() + ": " + ec.message());
}

void save_project(const std::filesystem::path& path, const Project& p,
                  const std::function<void(const std::filesystem::path&)>& before_rename) {
  atomic_write(path, to_json(p), before_rename);
}

Project load_project(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot read " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_project(text);
}

}  // namespace sketchmotion::project
