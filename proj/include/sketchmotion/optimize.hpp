#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sketchmotion/gdn.hpp"
#include "sketchmotion/geometry.hpp"
#include "sketchmotion/guidance.hpp"
#include "sketchmotion/motion_init.hpp"
#include "sketchmotion/raster.hpp"

namespace sketchmotion::optimize {

struct OptimizerConfig {
  std::size_t steps = 500;
  double lr_global = 1e-4;
  double lr_local = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  std::size_t snapshot_every = 0;  // 0 disables periodic progress snapshots
  double clip_norm = 10.0;         // global gradient norm per step; 0 disables

  void validate() const;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t t = 0;
};

/// One bias-corrected Adam update. Throws Error{non_finite} naming `name` when
/// a gradient entry is NaN or infinite; the parameter is left untouched then.
void adam_step(std::span<double> param, std::span<const double> grad, AdamState& state,
               double lr, const OptimizerConfig& cfg, const std::string& name = "parameter");

/// Everything a refinement run needs, all per group in partition order.
struct RefineProblem {
  Sketch sketch;
  motion::GroupPartition partition;
  std::vector<motion::GroupTensor> coarse;   // network input and step-0 output
  std::vector<motion::GroupTensor> targets;  // trajectory-loss targets (default: coarse)
};

RefineProblem make_problem(const Sketch& sketch, const motion::GroupPartition& partition,
                           const motion::TrajectorySpec& trajectory);

struct StepRecord {
  std::size_t step = 0;  // 0-based; even steps train the local path
  guidance::LossReport report;
};

/// Holds the per-group networks and optimizer state of one job.
class Refiner {
 public:
  Refiner(RefineProblem problem, gdn::GdnConfig gdn, guidance::GuidanceConfig guide,
          OptimizerConfig opt, std::shared_ptr<guidance::FramePrior> prior = nullptr,
          raster::RasterConfig raster = raster::RasterConfig::optimization());

  std::size_t steps_done() const { return step_; }
  const RefineProblem& problem() const { return problem_; }
  const std::vector<gdn::GroupNetwork>& networks() const { return nets_; }

  /// Forward, losses, backward and one parameter update.
  StepRecord step();

  /// Refined points of every group (no update), each (N_i, K, 2) in canvas units.
  std::vector<ad::Tensor> refined_groups() const;
  /// Refined animation in the sketch's original point order.
  FrameSequence current() const;

  /// Parameters ("group.<id>/<name>"), Adam moments and the step counter.
  std::vector<gdn::NamedTensor> state() const;
  void load_state(const std::vector<gdn::NamedTensor>& tensors);

 private:
  ad::Tensor merge(const std::vector<ad::Tensor>& groups) const;

  RefineProblem problem_;
  gdn::GdnConfig gdn_;
  guidance::GuidanceConfig guide_;
  OptimizerConfig opt_;
  std::shared_ptr<guidance::FramePrior> prior_;
  raster::RasterConfig raster_;
  std::vector<gdn::GroupNetwork> nets_;
  std::vector<gdn::GroupInput> inputs_;
  std::vector<std::size_t> merge_index_;
  std::map<std::string, AdamState> adam_;
  std::size_t step_ = 0;
};

struct RefinementResult {
  FrameSequence refined;
  std::vector<StepRecord> trace;
  std::vector<gdn::NamedTensor> checkpoint;
};

struct RunOptions {
  std::shared_ptr<guidance::FramePrior> prior;  // overrides the configured endpoint
  raster::RasterConfig raster = raster::RasterConfig::optimization();
  /// Called after every step; return false to stop early.
  std::function<bool(const StepRecord&, const Refiner&)> on_step;
  /// Written when a step fails (remote or non-finite error) before rethrowing.
  std::optional<std::filesystem::path> pause_checkpoint;
  /// Resume from a saved state instead of step 0.
  std::vector<gdn::NamedTensor> resume;
};

RefinementResult run_refinement(const RefineProblem& problem, const gdn::GdnConfig& gdn,
                                const guidance::GuidanceConfig& guide, const OptimizerConfig& opt,
                                const RunOptions& options = {});

// --- loss trace ---
/// Columns: step,total,trajectory,shape,smoothness,prior,remote_grad_norm
void write_trace_csv(const std::filesystem::path& path, const std::vector<StepRecord>& trace);
std::vector<StepRecord> read_trace_csv(const std::filesystem::path& path);

// --- export ---
struct ExportOptions {
  bool svg = true;
  bool png = true;
  double fps = 8.0;
  raster::RasterConfig raster = raster::RasterConfig::preview();
};

struct ExportManifest {
  std::size_t frames = 0;
  double fps = 0.0;
  std::vector<std::string> files;
};

/// Writes frame_0001.svg/.png ... and manifest.json into `dir`.
ExportManifest export_animation(const FrameSequence& seq, const std::filesystem::path& dir,
                                const ExportOptions& options = {});

}  // namespace sketchmotion::optimize
