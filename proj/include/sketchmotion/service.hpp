#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "sketchmotion/raster.hpp"

namespace sketchmotion::service {

struct ServiceConfig {
  std::filesystem::path data_dir = "sketchmotion-data";
  std::size_t workers = 0;  // 0: one per CPU
  std::optional<std::string> remote_endpoint;
  double remote_timeout_s = 120.0;
  raster::RasterConfig raster = raster::RasterConfig::optimization();
  raster::RasterConfig export_raster = raster::RasterConfig::preview();
  double fps = 8.0;
};

/// HTTP/JSON API over file-backed projects and background refinement jobs.
///
///   GET  /projects                         ids and status
///   POST /projects                         multipart field "svg" or raw SVG body
///   GET  /projects/{id}
///   GET  /projects/{id}/groups             PUT {groups: [...]}
///   GET  /projects/{id}/keyframes          PUT {keyframes: [...], K?}
///   GET  /projects/{id}/preview/{k}        coarse frame k as SVG
///   GET  /projects/{id}/frames/{k}?stage=coarse|refined
///   POST /projects/{id}/refine             {steps?, seed?, priors?, remote_prior?, prompt?}
///   GET  /projects/{id}/export             tar of the latest finished job
///   GET  /jobs/{id}                        {state, step, steps, losses, trace, error?}
///   POST /jobs/{id}/resume                 continue a paused job from its checkpoint
///
/// Errors are {code, message, field?}: 422 for invalid input, 404 unknown ids,
/// 409 when a job conflicts, 502 for remote-prior failures, 500 otherwise.
class Service {
 public:
  explicit Service(ServiceConfig cfg);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds (port 0 picks a free one) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Blocks serving on the calling thread until stop().
  void listen(const std::string& host, int port);
  /// Stops accepting requests; running jobs pause at their next step.
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace sketchmotion::service
