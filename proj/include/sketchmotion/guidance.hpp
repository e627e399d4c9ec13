#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sketchmotion/autodiff.hpp"
#include "sketchmotion/motion_init.hpp"

namespace sketchmotion::guidance {

struct GuidanceConfig {
  double w_traj = 1.0;
  double w_shape = 0.5;
  double w_smooth = 0.1;
  double w_remote = 1.0;
  std::string prompt;
  std::optional<std::string> endpoint;  // remote prior base URL
  double timeout_s = 120.0;

  void validate() const;
};

/// Reads SKETCHMOTION_REMOTE_PRIOR and SKETCHMOTION_REMOTE_TIMEOUT into `cfg`.
void apply_environment(GuidanceConfig& cfg);

/// Keeps only the named terms (traj, shape, smooth, remote): the other
/// weights drop to 0 and, without "remote", the endpoint is cleared.
void apply_priors(GuidanceConfig& cfg, const std::vector<std::string>& priors,
                  const std::string& field = "/priors");

/// Mean over groups and frames of |centroid(refined) - centroid(target)|^2.
/// `refined[i]` is (N_i, K, 2).
ad::Tensor trajectory_loss(const std::vector<ad::Tensor>& refined,
                           const std::vector<motion::GroupTensor>& targets);

/// Mean over consecutive control-point pairs of every stroke and over frames of
/// (|p_a^k - p_b^k| - |p_a^1 - p_b^1|)^2, with frame 1 taken from `initial`.
/// Lengths use sqrt(d^2 + 1e-12) so the gradient stays finite.
ad::Tensor shape_loss(const std::vector<ad::Tensor>& refined,
                      const std::vector<motion::GroupTensor>& initial);

/// Mean over points and interior frames of |p^{k+1} - 2 p^k + p^{k-1}|^2.
/// Zero (with a warning on stderr) when K < 3.
ad::Tensor smoothness_loss(const std::vector<ad::Tensor>& refined);

/// Pixel-space guidance on the rendered (K, H, W) stack.
struct PriorTerm {
  ad::Tensor objective;  // scalar whose gradient is the prior's pixel gradient
  double value = 0.0;    // loss value when known, else 0
  double grad_norm = 0.0;
  bool reports_loss = false;
};

class FramePrior {
 public:
  virtual ~FramePrior() = default;
  virtual std::string name() const = 0;
  virtual PriorTerm evaluate(const ad::Tensor& frames, std::size_t step) = 0;
};

/// mean((I - T)^2) computed on the tape.
class PixelMsePrior : public FramePrior {
 public:
  explicit PixelMsePrior(ad::Tensor target);
  std::string name() const override { return "pixel-mse"; }
  PriorTerm evaluate(const ad::Tensor& frames, std::size_t step) override;

 private:
  ad::Tensor target_;
};

// --- remote prior wire format ---
// Request and response bodies are one line of JSON, a '\n', then K*H*W
// little-endian float32 values (frame-major, row-major).
struct WireHeader {
  std::size_t k_frames = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::string prompt;
  std::int64_t step = 0;
};

std::string encode_payload(const WireHeader& header, const std::vector<double>& values,
                           bool is_request);
/// Throws Error{remote} on a malformed body or size mismatch.
std::pair<WireHeader, std::vector<double>> decode_payload(const std::string& body);

/// Fetches d(loss)/d(pixel) from an external scorer over HTTP
/// (POST {endpoint}/v1/gradient) and injects it as sum(frames * G).
class RemotePrior : public FramePrior {
 public:
  RemotePrior(std::string endpoint, std::string prompt, double timeout_s = 120.0);
  std::string name() const override { return "remote"; }
  PriorTerm evaluate(const ad::Tensor& frames, std::size_t step) override;

  /// Raw gradient exchange; throws Error{remote} on transport, shape or
  /// non-finite failures.
  std::vector<double> fetch(const ad::Tensor& frames, std::size_t step);

  std::size_t last_request_bytes() const { return last_request_bytes_; }
  std::size_t last_response_bytes() const { return last_response_bytes_; }

 private:
  std::string endpoint_;
  std::string prompt_;
  double timeout_s_;
  std::size_t last_request_bytes_ = 0;
  std::size_t last_response_bytes_ = 0;
};

/// Reference scorer for tests and local runs. "zero" answers with zeros;
/// "mse" answers with 2 (I - T) / (K H W) for a fixed target T.
class StubPriorServer {
 public:
  enum class Mode { zero, mse };

  StubPriorServer(Mode mode, std::vector<double> target = {});
  ~StubPriorServer();
  StubPriorServer(const StubPriorServer&) = delete;
  StubPriorServer& operator=(const StubPriorServer&) = delete;

  /// Binds (port 0 picks a free one) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Blocks serving on the calling thread.
  void listen(const std::string& host, int port);
  void stop();

  std::string url() const;
  std::size_t requests() const;
  std::size_t last_payload_bytes() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// --- totals ---
struct LossTerms {
  ad::Tensor trajectory;
  ad::Tensor shape;
  ad::Tensor smoothness;
  std::optional<PriorTerm> prior;
};

struct LossReport {
  double total = 0.0;  // sum of the weighted differentiable terms
  double trajectory = 0.0;
  double shape = 0.0;
  double smoothness = 0.0;
  double prior = 0.0;
  double remote_grad_norm = 0.0;
};

struct TotalLoss {
  ad::Tensor objective;  // what backward runs on
  LossReport report;     // weighted contributions
};

TotalLoss total_loss(const LossTerms& terms, const GuidanceConfig& cfg);

}  // namespace sketchmotion::guidance
