#include "sketchmotion/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "sketchmotion/error.hpp"
#include "sketchmotion/optimize.hpp"
#include "sketchmotion/project.hpp"
#include "sketchmotion/service.hpp"
#include "sketchmotion/svg.hpp"

namespace sketchmotion::cli {

namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string frame_name(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04zu.svg", k);
  return buf;
}

bool is_input_error(ErrorCode c) {
  switch (c) {
    case ErrorCode::parse:
    case ErrorCode::unsupported_feature:
    case ErrorCode::empty_sketch:
    case ErrorCode::validation:
    case ErrorCode::version:
      return true;
    default:
      return false;
  }
}

raster::RasterConfig square(std::size_t size) {
  auto r = raster::RasterConfig::preview();
  r.height = r.width = size;
  return r;
}

struct ExportFormats {
  bool svg = false;
  bool png = false;
};

ExportFormats parse_formats(const std::vector<std::string>& names) {
  ExportFormats f;
  for (const auto& n : names) {
    if (n == "svg") f.svg = true;
    else if (n == "png") f.png = true;
    else throw ValidationError("unknown export format '" + n + "' (svg, png)", "--format");
  }
  return f;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sketch animation: coarse keyframe motion refined by per-group displacement networks"};
  app.require_subcommand(1);

  // init
  std::string init_svg, init_out;
  std::size_t init_frames = motion::kDefaultFrameCount;
  auto* init = app.add_subcommand("init", "Create a project file from an SVG sketch");
  init->add_option("svg", init_svg, "Input SVG")->required();
  init->add_option("-o,--output", init_out, "Project file to write")->required();
  init->add_option("-K,--frames", init_frames, "Frame count K")->capture_default_str();

  // preview
  std::string preview_project, preview_out;
  std::size_t preview_size = 256;
  auto* preview = app.add_subcommand("preview", "Write the coarse animation frames");
  preview->add_option("project", preview_project, "Project file")->required();
  preview->add_option("-o,--output", preview_out, "Output directory")->required();
  preview->add_option("--size", preview_size, "PNG size in pixels")->capture_default_str();

  // refine
  std::string refine_project, refine_out, remote_url, prompt;
  std::optional<std::size_t> steps;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> priors;
  bool resume = false;
  auto* refine = app.add_subcommand("refine", "Optimize the displacement networks");
  refine->add_option("project", refine_project, "Project file")->required();
  refine->add_option("-o,--output", refine_out, "Output directory")->required();
  refine->add_option("--steps", steps, "Optimization steps (project default otherwise)");
  refine->add_option("--priors", priors, "Loss terms to use: traj,shape,smooth[,remote]")->delimiter(',');
  refine->add_option("--remote-prior", remote_url, "Remote prior base URL");
  refine->add_option("--prompt", prompt, "Text prompt passed to the remote prior");
  refine->add_option("--seed", seed, "Network initialization seed");
  refine->add_flag("--resume", resume, "Continue from <output>/checkpoint.smck");

  // export
  std::string export_dir, export_out;
  std::vector<std::string> formats{"svg", "png"};
  std::size_t export_size = 256;
  double fps = 8.0;
  auto* exp = app.add_subcommand("export", "Export a refined animation");
  exp->add_option("dir", export_dir, "Output directory of a refine run")->required();
  exp->add_option("--format", formats, "svg,png")->delimiter(',')->capture_default_str();
  exp->add_option("-o,--output", export_out, "Destination (default <dir>/export)");
  exp->add_option("--size", export_size, "PNG size in pixels")->capture_default_str();
  exp->add_option("--fps", fps, "Playback rate recorded in the manifest")->capture_default_str();

  // serve
  std::string host = "127.0.0.1", data_dir;
  int port = 8080;
  std::size_t workers = 0;
  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  serve->add_option("--port", port, "Port (env SKETCHMOTION_PORT)")->capture_default_str();
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  serve->add_option("--data", data_dir, "Data directory (env SKETCHMOTION_DATA_DIR)");
  serve->add_option("--workers", workers, "Refinement workers (0: one per CPU)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*init) {
      auto p = project::from_svg(read_text(init_svg), init_frames);
      project::realize(p);
      project::save_project(init_out, p);
      out << "wrote " << init_out << " (" << parse_svg(p.svg).strokes().size() << " strokes, "
          << p.groups.size() << " group" << (p.groups.size() == 1 ? "" : "s") << ", K=" << p.frames << ")\n";
    } else if (*preview) {
      const auto p = project::load_project(preview_project);
      const auto seq = project::coarse_animation(project::realize(p));
      optimize::ExportOptions eo;
      eo.raster = square(preview_size);
      const auto m = optimize::export_animation(seq, preview_out, eo);
      out << "wrote " << m.files.size() << " files to " << preview_out << "\n";
    } else if (*refine) {
      const auto p = project::load_project(refine_project);
      const auto scene = project::realize(p);
      auto guide = p.guidance;
      guidance::apply_environment(guide);
      if (!remote_url.empty()) guide.endpoint = remote_url;
      if (!prompt.empty()) guide.prompt = prompt;
      if (!priors.empty()) {
        if (!remote_url.empty()) priors.push_back("remote");
        guidance::apply_priors(guide, priors, "--priors");
      }
      auto opt = p.optimizer;
      if (steps) opt.steps = *steps;
      if (seed) opt.seed = *seed;
      opt.validate();
      guide.validate();

      const fs::path dir = refine_out;
      fs::create_directories(dir / "frames");
      optimize::RunOptions ro;
      ro.pause_checkpoint = dir / "checkpoint.smck";
      std::vector<optimize::StepRecord> trace;
      if (resume) {
        ro.resume = gdn::load_checkpoint(dir / "checkpoint.smck");
        if (fs::exists(dir / "trace.csv")) trace = optimize::read_trace_csv(dir / "trace.csv");
      }
      ro.on_step = [&](const optimize::StepRecord& r, const optimize::Refiner&) {
        trace.push_back(r);
        if ((r.step + 1) % 50 == 0 || r.step + 1 == opt.steps)
          err << "step " << r.step + 1 << "/" << opt.steps << " loss " << r.report.total << "\n";
        return true;
      };
      const auto problem = optimize::make_problem(scene.sketch, scene.partition, scene.trajectory);
      try {
        const auto result = optimize::run_refinement(problem, p.gdn, guide, opt, ro);
        gdn::save_checkpoint(dir / "checkpoint.smck", result.checkpoint);
        for (std::size_t k = 1; k <= result.refined.frame_count(); ++k) {
          std::ofstream f(dir / "frames" / frame_name(k), std::ios::binary);
          f << serialize_svg(result.refined.frame(k));
          if (!f) throw Error(ErrorCode::io, "cannot write frames under " + dir.string());
        }
      } catch (const Error& e) {
        optimize::write_trace_csv(dir / "trace.csv", trace);
        if (e.code() == ErrorCode::remote || e.code() == ErrorCode::non_finite)
          err << "paused at step " << trace.size() << "; state saved to "
              << (dir / "checkpoint.smck").string() << ", rerun with --resume\n";
        throw;
      }
      optimize::write_trace_csv(dir / "trace.csv", trace);
      project::save_project(dir / "project.json", p);
      out << "refined " << trace.size() << " steps into " << dir.string() << "\n";
    } else if (*exp) {
      const fs::path dir = export_dir;
      std::vector<Sketch> frames;
      for (std::size_t k = 1; fs::exists(dir / "frames" / frame_name(k)); ++k)
        frames.push_back(parse_svg(read_text(dir / "frames" / frame_name(k))));
      if (frames.empty()) throw Error(ErrorCode::not_found, "no frames under " + (dir / "frames").string());
      const auto f = parse_formats(formats);
      optimize::ExportOptions eo;
      eo.svg = f.svg;
      eo.png = f.png;
      eo.fps = fps;
      eo.raster = square(export_size);
      const fs::path dest = export_out.empty() ? dir / "export" : fs::path(export_out);
      const auto m = optimize::export_animation(stack_frames(frames), dest, eo);
      if (fs::exists(dir / "trace.csv"))
        fs::copy_file(dir / "trace.csv", dest / "trace.csv", fs::copy_options::overwrite_existing);
      out << "exported " << m.frames << " frames (" << m.files.size() << " files) to " << dest.string() << "\n";
    } else if (*serve) {
      service::ServiceConfig sc;
      if (const char* d = std::getenv("SKETCHMOTION_DATA_DIR"); d && *d) sc.data_dir = d;
      if (!data_dir.empty()) sc.data_dir = data_dir;
      if (const char* pe = std::getenv("SKETCHMOTION_PORT"); pe && *pe && serve->count("--port") == 0)
        port = std::stoi(pe);
      guidance::GuidanceConfig g;
      guidance::apply_environment(g);
      sc.remote_endpoint = g.endpoint;
      sc.remote_timeout_s = g.timeout_s;
      sc.workers = workers;
      service::Service svc(sc);
      out << "serving on http://" << host << ":" << port << " (data " << sc.data_dir.string() << ")\n"
          << std::flush;
      svc.listen(host, port);
    }
  } catch (const Error& e) {
    err << "error";
    if (!e.field().empty()) err << " at " << e.field();
    err << ": " << e.what() << "\n";
    return is_input_error(e.code()) ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace sketchmotion::cli
