#include "sketchmotion/optimize.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "sketchmotion/error.hpp"
#include "sketchmotion/svg.hpp"

namespace sketchmotion::optimize {

using ad::Tensor;

void OptimizerConfig::validate() const {
  if (steps < 1) throw ValidationError("steps must be at least 1", "/optimizer/steps");
  if (!(lr_global > 0.0)) throw ValidationError("lr_global must be positive", "/optimizer/lr_global");
  if (!(lr_local > 0.0)) throw ValidationError("lr_local must be positive", "/optimizer/lr_local");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ValidationError("beta1 must be in [0, 1)", "/optimizer/beta1");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("beta2 must be in [0, 1)", "/optimizer/beta2");
  if (!(eps > 0.0)) throw ValidationError("eps must be positive", "/optimizer/eps");
  if (!(clip_norm >= 0.0)) throw ValidationError("clip_norm must be >= 0", "/optimizer/clip_norm");
}

void adam_step(std::span<double> param, std::span<const double> grad, AdamState& state,
               double lr, const OptimizerConfig& cfg, const std::string& name) {
  if (grad.size() != param.size())
    throw ShapeError("gradient of " + name + " has " + std::to_string(grad.size()) +
                     " entries, parameter has " + std::to_string(param.size()));
  for (double g : grad)
    if (!std::isfinite(g)) throw Error(ErrorCode::non_finite, "non-finite gradient in " + name, name);
  if (state.m.empty()) {
    state.m.assign(param.size(), 0.0);
    state.v.assign(param.size(), 0.0);
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    param[i] -= lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + cfg.eps);
  }
}

RefineProblem make_problem(const Sketch& sketch, const motion::GroupPartition& partition,
                           const motion::TrajectorySpec& trajectory) {
  RefineProblem p{sketch, partition, {}, {}};
  p.coarse = motion::build_coarse_animation(sketch, partition, trajectory, trajectory.frame_count);
  p.targets = p.coarse;
  return p;
}

namespace {

std::uint64_t group_seed(std::uint64_t seed, std::size_t index) {
  // splitmix64 of (seed, index)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::string group_prefix(int id) { return "group." + std::to_string(id) + "/"; }

}  // namespace

Refiner::Refiner(RefineProblem problem, gdn::GdnConfig gdn, guidance::GuidanceConfig guide,
                 OptimizerConfig opt, std::shared_ptr<guidance::FramePrior> prior,
                 raster::RasterConfig raster)
    : problem_(std::move(problem)),
      gdn_(gdn),
      guide_(std::move(guide)),
      opt_(opt),
      prior_(std::move(prior)),
      raster_(raster) {
  gdn_.validate();
  guide_.validate();
  opt_.validate();
  raster_.validate();
  if (problem_.coarse.empty()) throw ValidationError("nothing to refine: no groups", "/groups");
  if (problem_.targets.empty()) problem_.targets = problem_.coarse;
  if (problem_.targets.size() != problem_.coarse.size())
    throw ShapeError("trajectory targets do not match the groups");

  const auto& sk = problem_.sketch;
  const FrameSequence coarse_seq = motion::merge_groups(problem_.coarse, sk.topology(), sk.canvas_w(), sk.canvas_h());
  const Tensor context = gdn::context_features(coarse_seq, gdn_.patch_grid, raster_.height, raster_.width);

  merge_index_.assign(sk.point_count(), 0);
  const Topology topo = sk.topology();
  std::size_t pos = 0;
  for (std::size_t i = 0; i < problem_.coarse.size(); ++i) {
    const auto& g = problem_.coarse[i];
    nets_.emplace_back(gdn_, group_seed(opt_.seed, i));
    inputs_.push_back(gdn::make_group_input(g, sk.canvas_w(), sk.canvas_h(), context));
    for (const auto& span : g.topology.strokes) {
      const auto& orig = topo.strokes[topo.index_of(span.id)];
      for (std::size_t j = 0; j < span.count; ++j) merge_index_[orig.offset + j] = pos++;
    }
  }
  if (pos != sk.point_count()) throw ShapeError("groups do not cover the sketch");
}

std::vector<Tensor> Refiner::refined_groups() const {
  const auto& sk = problem_.sketch;
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < nets_.size(); ++i) {
    const auto field = nets_[i].predict(inputs_[i]);
    out.push_back(gdn::refine_group(problem_.coarse[i], field.total(), sk.canvas_w(), sk.canvas_h()));
  }
  return out;
}

Tensor Refiner::merge(const std::vector<Tensor>& groups) const {
  return ad::index_select(ad::concat(groups, 0), 0, merge_index_);
}

FrameSequence Refiner::current() const {
  const auto& sk = problem_.sketch;
  const Tensor merged = merge(refined_groups());
  return FrameSequence(sk.topology(), sk.canvas_w(), sk.canvas_h(), problem_.coarse.front().frame_count,
                       std::vector<double>(merged.values().begin(), merged.values().end()));
}

StepRecord Refiner::step() {
  for (const auto& net : nets_)
    for (const auto& p : net.parameters()) {
      auto t = p.tensor;
      t.zero_grad();
    }

  const auto refined = refined_groups();
  guidance::LossTerms terms;
  if (guide_.w_traj > 0) terms.trajectory = guidance::trajectory_loss(refined, problem_.targets);
  if (guide_.w_shape > 0) terms.shape = guidance::shape_loss(refined, problem_.coarse);
  if (guide_.w_smooth > 0) terms.smoothness = guidance::smoothness_loss(refined);
  if (prior_ && guide_.w_remote > 0) {
    const auto& sk = problem_.sketch;
    const Tensor frames = raster::rasterize_sequence(merge(refined), sk.topology(), sk.canvas_w(),
                                                     sk.canvas_h(), raster_);
    terms.prior = prior_->evaluate(frames, step_);
  }
  const auto loss = guidance::total_loss(terms, guide_);
  if (!std::isfinite(loss.objective.item()))
    throw Error(ErrorCode::non_finite, "loss is not finite at step " + std::to_string(step_));
  ad::backward(loss.objective);

  const bool local_phase = step_ % 2 == 0;
  const double lr = local_phase ? opt_.lr_local : opt_.lr_global;
  const auto active_role = local_phase ? gdn::ParamRole::local : gdn::ParamRole::global;

  struct Active {
    std::string name;
    Tensor tensor;
    std::vector<double> grad;
  };
  std::vector<Active> active;
  double norm2 = 0.0;
  for (std::size_t i = 0; i < nets_.size(); ++i) {
    const auto prefix = group_prefix(problem_.coarse[i].group_id);
    for (const auto& p : nets_[i].parameters()) {
      if (p.role != gdn::ParamRole::shared && p.role != active_role) continue;
      Active a{prefix + p.name, p.tensor, {}};
      if (p.tensor.has_grad())
        a.grad.assign(p.tensor.grad().begin(), p.tensor.grad().end());
      else
        a.grad.assign(p.tensor.numel(), 0.0);
      for (double g : a.grad) {
        if (!std::isfinite(g))
          throw Error(ErrorCode::non_finite, "non-finite gradient in " + a.name, a.name);
        norm2 += g * g;
      }
      active.push_back(std::move(a));
    }
  }
  const double norm = std::sqrt(norm2);
  const double scale = opt_.clip_norm > 0 && norm > opt_.clip_norm ? opt_.clip_norm / norm : 1.0;
  for (auto& a : active) {
    if (scale != 1.0)
      for (auto& g : a.grad) g *= scale;
    adam_step(a.tensor.data(), a.grad, adam_[a.name], lr, opt_, a.name);
  }

  return {step_++, loss.report};
}

std::vector<gdn::NamedTensor> Refiner::state() const {
  std::vector<gdn::NamedTensor> out;
  for (std::size_t i = 0; i < nets_.size(); ++i) {
    auto s = gdn::snapshot(nets_[i].parameters(), group_prefix(problem_.coarse[i].group_id));
    out.insert(out.end(), s.begin(), s.end());
  }
  for (const auto& [name, st] : adam_) {
    out.push_back({"adam.m/" + name, {st.m.size()}, st.m});
    out.push_back({"adam.v/" + name, {st.v.size()}, st.v});
    out.push_back({"adam.t/" + name, {1}, {static_cast<double>(st.t)}});
  }
  out.push_back({"step", {1}, {static_cast<double>(step_)}});
  return out;
}

void Refiner::load_state(const std::vector<gdn::NamedTensor>& tensors) {
  for (std::size_t i = 0; i < nets_.size(); ++i)
    gdn::restore(nets_[i].parameters(), tensors, group_prefix(problem_.coarse[i].group_id));
  std::map<std::string, AdamState> adam;
  std::optional<std::size_t> step;
  auto strip = [](const std::string& s, const std::string& p) -> std::optional<std::string> {
    if (s.rfind(p, 0) == 0) return s.substr(p.size());
    return std::nullopt;
  };
  for (const auto& t : tensors) {
    if (auto n = strip(t.name, "adam.m/")) {
      adam[*n].m = t.values;
    } else if (auto n2 = strip(t.name, "adam.v/")) {
      adam[*n2].v = t.values;
    } else if (auto n3 = strip(t.name, "adam.t/")) {
      if (t.values.size() != 1) throw ShapeError("adam step counter of " + *n3 + " is not a scalar");
      adam[*n3].t = static_cast<std::size_t>(t.values[0]);
    } else if (t.name == "step") {
      if (t.values.size() != 1) throw ShapeError("step counter is not a scalar");
      step = static_cast<std::size_t>(t.values[0]);
    }
  }
  for (const auto& [name, st] : adam)
    if (st.m.size() != st.v.size()) throw ShapeError("adam moments of " + name + " disagree");
  if (!step) throw Error(ErrorCode::not_found, "checkpoint has no step counter", "step");
  adam_ = std::move(adam);
  step_ = *step;
}

RefinementResult run_refinement(const RefineProblem& problem, const gdn::GdnConfig& gdn,
                                const guidance::GuidanceConfig& guide, const OptimizerConfig& opt,
                                const RunOptions& options) {
  opt.validate();
  auto prior = options.prior;
  if (!prior && guide.endpoint)
    prior = std::make_shared<guidance::RemotePrior>(*guide.endpoint, guide.prompt, guide.timeout_s);
  Refiner refiner(problem, gdn, guide, opt, prior, options.raster);
  if (!options.resume.empty()) refiner.load_state(options.resume);

  RefinementResult result{refiner.current(), {}, {}};
  while (refiner.steps_done() < opt.steps) {
    StepRecord rec;
    try {
      rec = refiner.step();
    } catch (const Error& e) {
      if (options.pause_checkpoint &&
          (e.code() == ErrorCode::remote || e.code() == ErrorCode::non_finite))
        gdn::save_checkpoint(*options.pause_checkpoint, refiner.state());
      throw;
    }
    result.trace.push_back(rec);
    if (options.on_step && !options.on_step(rec, refiner)) break;
  }
  result.refined = refiner.current();
  result.checkpoint = refiner.state();
  return result;
}

// ---------------------------------------------------------------------------

void write_trace_csv(const std::filesystem::path& path, const std::vector<StepRecord>& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << "step,total,trajectory,shape,smoothness,prior,remote_grad_norm\n";
  for (const auto& r : trace) {
    const auto& p = r.report;
    out << r.step << ',' << format_number(p.total) << ',' << format_number(p.trajectory) << ','
        << format_number(p.shape) << ',' << format_number(p.smoothness) << ','
        << format_number(p.prior) << ',' << format_number(p.remote_grad_norm) << '\n';
  }
  if (!out) throw Error(ErrorCode::io, "failed writing " + path.string());
}

std::vector<StepRecord> read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "step,total,trajectory,shape,smoothness,prior,remote_grad_norm")
    throw ParseError("unexpected trace header", 0);
  std::vector<StepRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(row, cell, ',')) v.push_back(std::stod(cell));
    if (v.size() != 7) throw ParseError("trace row has " + std::to_string(v.size()) + " columns", 0);
    out.push_back({static_cast<std::size_t>(v[0]), {v[1], v[2], v[3], v[4], v[5], v[6]}});
  }
  return out;
}

// ---------------------------------------------------------------------------

ExportManifest export_animation(const FrameSequence& seq, const std::filesystem::path& dir,
                                const ExportOptions& options) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::io, "cannot create " + dir.string() + ": " + ec.message());
  ExportManifest m{seq.frame_count(), options.fps, {}};
  char base[32];
  for (std::size_t k = 1; k <= seq.frame_count(); ++k) {
    std::snprintf(base, sizeof base, "frame_%04zu", k);
    const Sketch frame = seq.frame(k);
    if (options.svg) {
      const auto name = std::string(base) + ".svg";
      std::ofstream out(dir / name, std::ios::binary);
      out << serialize_svg(frame);
      if (!out) throw Error(ErrorCode::io, "cannot write " + (dir / name).string());
      m.files.push_back(name);
    }
    if (options.png) {
      const auto name = std::string(base) + ".png";
      raster::write_png(dir / name, raster::rasterize(frame, options.raster));
      m.files.push_back(name);
    }
  }
  nlohmann::json j = {{"K", m.frames}, {"fps", m.fps}, {"files", m.files}};
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::io, "cannot write " + (dir / "manifest.json").string());
  return m;
}

}  // namespace sketchmotion::optimize
