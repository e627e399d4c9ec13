#include "sketchmotion/guidance.hpp"

#include <httplib.h>

#include <bit>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <json.hpp>
#include <mutex>
#include <regex>
#include <thread>

#include "sketchmotion/error.hpp"

namespace sketchmotion::guidance {

using ad::Tensor;
using nlohmann::json;

void GuidanceConfig::validate() const {
  const std::pair<double, const char*> weights[] = {{w_traj, "/guidance/w_traj"},
                                                    {w_shape, "/guidance/w_shape"},
                                                    {w_smooth, "/guidance/w_smooth"},
                                                    {w_remote, "/guidance/w_remote"}};
  bool any = false;
  for (const auto& [w, field] : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("loss weights must be >= 0", field);
    any = any || w > 0.0;
  }
  if (!any) throw ValidationError("at least one loss weight must be positive", "/guidance");
  if (!(timeout_s > 0.0)) throw ValidationError("timeout must be positive", "/guidance/timeout_s");
}

void apply_environment(GuidanceConfig& cfg) {
  if (const char* e = std::getenv("SKETCHMOTION_REMOTE_PRIOR"); e && *e) cfg.endpoint = e;
  if (const char* t = std::getenv("SKETCHMOTION_REMOTE_TIMEOUT"); t && *t) {
    char* end = nullptr;
    const double v = std::strtod(t, &end);
    if (end == t || !(v > 0.0))
      throw ValidationError("SKETCHMOTION_REMOTE_TIMEOUT must be a positive number of seconds");
    cfg.timeout_s = v;
  }
}

void apply_priors(GuidanceConfig& g, const std::vector<std::string>& priors,
                  const std::string& field) {
  bool traj = false, shape = false, smooth = false, remote = false;
  for (std::size_t i = 0; i < priors.size(); ++i) {
    const auto& p = priors[i];
    if (p == "traj") traj = true;
    else if (p == "shape") shape = true;
    else if (p == "smooth") smooth = true;
    else if (p == "remote") remote = true;
    else throw ValidationError("unknown prior '" + p + "' (traj, shape, smooth, remote)", field + "/" + std::to_string(i));
  }
  if (!traj) g.w_traj = 0;
  if (!shape) g.w_shape = 0;
  if (!smooth) g.w_smooth = 0;
  if (!remote) g.endpoint.reset();
}

namespace {

Tensor constant(ad::Shape shape, std::vector<double> v) { return Tensor::from(std::move(shape), std::move(v)); }

void check_group(const Tensor& refined, const motion::GroupTensor& g) {
  if (refined.shape() != ad::Shape{g.point_count(), g.frame_count, 2})
    throw ShapeError("refined group " + std::to_string(g.group_id) + " does not match its reference");
}

}  // namespace

Tensor trajectory_loss(const std::vector<Tensor>& refined,
                       const std::vector<motion::GroupTensor>& targets) {
  if (refined.size() != targets.size()) throw ShapeError("trajectory_loss: group count mismatch");
  if (refined.empty()) return Tensor::scalar(0.0);
  Tensor total;
  std::size_t terms = 0;
  for (std::size_t i = 0; i < refined.size(); ++i) {
    const auto& t = targets[i];
    check_group(refined[i], t);
    const auto K = t.frame_count;
    // same reduction as the refined side so identical inputs give exactly 0
    const Tensor target = ad::mean(Tensor::from({t.point_count(), K, 2}, t.points), 0);
    const Tensor diff = ad::sub(ad::mean(refined[i], 0), target);
    const Tensor sq = ad::sum(ad::square(diff));
    total = total.defined() ? ad::add(total, sq) : sq;
    terms += K;
  }
  return ad::mul(total, 1.0 / static_cast<double>(terms));
}

Tensor shape_loss(const std::vector<Tensor>& refined,
                  const std::vector<motion::GroupTensor>& initial) {
  if (refined.size() != initial.size()) throw ShapeError("shape_loss: group count mismatch");
  constexpr double kEps = 1e-12;
  Tensor total;
  std::size_t count = 0;
  for (std::size_t i = 0; i < refined.size(); ++i) {
    const auto& g = initial[i];
    check_group(refined[i], g);
    const auto K = g.frame_count;
    std::vector<std::size_t> a, b;
    for (const auto& s : g.topology.strokes)
      for (std::size_t j = 0; j + 1 < s.count; ++j) {
        a.push_back(s.offset + j);
        b.push_back(s.offset + j + 1);
      }
    if (a.empty()) continue;
    const auto P = a.size();
    std::vector<double> ref(P);
    for (std::size_t p = 0; p < P; ++p) {
      const double dx = g.points[(a[p] * K) * 2] - g.points[(b[p] * K) * 2];
      const double dy = g.points[(a[p] * K) * 2 + 1] - g.points[(b[p] * K) * 2 + 1];
      ref[p] = std::sqrt(dx * dx + dy * dy + kEps);
    }
    const Tensor d = ad::sub(ad::index_select(refined[i], 0, a), ad::index_select(refined[i], 0, b));
    const Tensor len = ad::sqrt(ad::add(ad::sum(ad::square(d), 2), kEps));  // (P, K, 1)
    const Tensor sq = ad::sum(ad::square(ad::sub(len, constant({P, 1, 1}, std::move(ref)))));
    total = total.defined() ? ad::add(total, sq) : sq;
    count += P * K;
  }
  if (count == 0) return Tensor::scalar(0.0);
  return ad::mul(total, 1.0 / static_cast<double>(count));
}

Tensor smoothness_loss(const std::vector<Tensor>& refined) {
  Tensor total;
  std::size_t count = 0;
  for (const auto& r : refined) {
    if (r.rank() != 3 || r.dim(2) != 2) throw ShapeError("smoothness_loss expects (N, K, 2)");
    const auto N = r.dim(0), K = r.dim(1);
    if (K < 3) {
      std::cerr << "warning: smoothness loss needs at least 3 frames; contributing 0\n";
      return Tensor::scalar(0.0);
    }
    const Tensor next = ad::slice(r, 1, 2, K);
    const Tensor cur = ad::slice(r, 1, 1, K - 1);
    const Tensor prev = ad::slice(r, 1, 0, K - 2);
    const Tensor sq = ad::sum(ad::square(ad::add(ad::sub(next, ad::mul(cur, 2.0)), prev)));
    total = total.defined() ? ad::add(total, sq) : sq;
    count += N * (K - 2);
  }
  if (count == 0) return Tensor::scalar(0.0);
  return ad::mul(total, 1.0 / static_cast<double>(count));
}

// ---------------------------------------------------------------------------

PixelMsePrior::PixelMsePrior(Tensor target) : target_(std::move(target)) {}

PriorTerm PixelMsePrior::evaluate(const Tensor& frames, std::size_t) {
  if (frames.shape() != target_.shape()) throw ShapeError("pixel-mse target has a different shape");
  PriorTerm t;
  t.objective = ad::mean(ad::square(ad::sub(frames, target_)));
  t.value = t.objective.item();
  const auto n = static_cast<double>(frames.numel());
  double g2 = 0.0;
  for (std::size_t i = 0; i < frames.numel(); ++i) {
    const double g = 2.0 * (frames.values()[i] - target_.values()[i]) / n;
    g2 += g * g;
  }
  t.grad_norm = std::sqrt(g2);
  t.reports_loss = true;
  return t;
}

// ---------------------------------------------------------------------------
// Wire format

std::string encode_payload(const WireHeader& header, const std::vector<double>& values,
                           bool is_request) {
  if (values.size() != header.k_frames * header.h * header.w)
    throw ShapeError("payload holds " + std::to_string(values.size()) + " values, header says " +
                     std::to_string(header.k_frames * header.h * header.w));
  json j = {{"k_frames", header.k_frames}, {"h", header.h}, {"w", header.w}};
  if (is_request) {
    j["prompt"] = header.prompt;
    j["step"] = header.step;
  }
  std::string out = j.dump();
  out.push_back('\n');
  out.reserve(out.size() + values.size() * 4);
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
  }
  return out;
}

std::pair<WireHeader, std::vector<double>> decode_payload(const std::string& body) {
  const auto nl = body.find('\n');
  if (nl == std::string::npos) throw Error(ErrorCode::remote, "payload has no header line");
  WireHeader h;
  try {
    const auto j = json::parse(body.substr(0, nl));
    h.k_frames = j.at("k_frames").get<std::size_t>();
    h.h = j.at("h").get<std::size_t>();
    h.w = j.at("w").get<std::size_t>();
    if (j.contains("prompt")) h.prompt = j["prompt"].get<std::string>();
    if (j.contains("step")) h.step = j["step"].get<std::int64_t>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::remote, std::string("bad payload header: ") + e.what());
  }
  const std::size_t n = h.k_frames * h.h * h.w;
  if (body.size() - nl - 1 != n * 4)
    throw Error(ErrorCode::remote, "payload carries " + std::to_string(body.size() - nl - 1) +
                                       " bytes, expected " + std::to_string(n * 4));
  std::vector<double> values(n);
  const auto* p = reinterpret_cast<const unsigned char*>(body.data() + nl + 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(p[i * 4 + b]) << (8 * b);
    values[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return {h, std::move(values)};
}

// ---------------------------------------------------------------------------
// Remote prior

RemotePrior::RemotePrior(std::string endpoint, std::string prompt, double timeout_s)
    : endpoint_(std::move(endpoint)), prompt_(std::move(prompt)), timeout_s_(timeout_s) {}

std::vector<double> RemotePrior::fetch(const Tensor& frames, std::size_t step) {
  if (frames.rank() != 3) throw ShapeError("remote prior expects (K, H, W) frames");
  static const std::regex url(R"(^(http://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(endpoint_, m, url))
    throw Error(ErrorCode::remote, "remote prior endpoint must be an http:// URL, got " + endpoint_);
  std::string prefix = m[2].matched ? m[2].str() : "";
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

  WireHeader h{frames.dim(0), frames.dim(1), frames.dim(2), prompt_, static_cast<std::int64_t>(step)};
  const std::string body =
      encode_payload(h, std::vector<double>(frames.values().begin(), frames.values().end()), true);
  last_request_bytes_ = body.size() - body.find('\n') - 1;

  httplib::Client cli(m[1].str());
  const auto secs = static_cast<time_t>(timeout_s_);
  const auto usecs = static_cast<time_t>((timeout_s_ - static_cast<double>(secs)) * 1e6);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  auto res = cli.Post(prefix + "/v1/gradient", body, "application/octet-stream");
  if (!res)
    throw Error(ErrorCode::remote, "remote prior at " + endpoint_ + " unreachable: " +
                                       httplib::to_string(res.error()));
  if (res->status != 200)
    throw Error(ErrorCode::remote, "remote prior answered HTTP " + std::to_string(res->status) +
                                       ": " + res->body.substr(0, 200));
  auto [rh, grad] = decode_payload(res->body);
  last_response_bytes_ = res->body.size() - res->body.find('\n') - 1;
  if (rh.k_frames != h.k_frames || rh.h != h.h || rh.w != h.w)
    throw Error(ErrorCode::remote, "remote gradient shape does not match the request");
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!std::isfinite(grad[i]))
      throw Error(ErrorCode::remote, "remote gradient has a non-finite value at index " + std::to_string(i));
  return grad;
}

PriorTerm RemotePrior::evaluate(const Tensor& frames, std::size_t step) {
  auto grad = fetch(frames, step);
  double g2 = 0.0;
  for (double g : grad) g2 += g * g;
  PriorTerm t;
  t.objective = ad::sum(ad::mul(frames, Tensor::from(frames.shape(), std::move(grad))));
  t.grad_norm = std::sqrt(g2);
  return t;
}

// ---------------------------------------------------------------------------
// Stub server

struct StubPriorServer::Impl {
  Mode mode;
  std::vector<double> target;
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::string host;
  mutable std::mutex mu;
  std::size_t requests = 0;
  std::size_t last_bytes = 0;
};

StubPriorServer::StubPriorServer(Mode mode, std::vector<double> target)
    : impl_(std::make_unique<Impl>()) {
  impl_->mode = mode;
  impl_->target = std::move(target);
  auto* impl = impl_.get();
  impl_->server.Post("/v1/gradient", [impl](const httplib::Request& req, httplib::Response& res) {
    try {
      auto [h, frames] = decode_payload(req.body);
      std::vector<double> grad(frames.size(), 0.0);
      if (impl->mode == Mode::mse) {
        if (impl->target.size() != frames.size()) {
          res.status = 400;
          res.set_content("target size does not match the frames", "text/plain");
          return;
        }
        const double n = static_cast<double>(frames.size());
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = 2.0 * (frames[i] - impl->target[i]) / n;
      }
      {
        std::lock_guard lock(impl->mu);
        ++impl->requests;
        impl->last_bytes = req.body.size() - req.body.find('\n') - 1;
      }
      res.set_content(encode_payload({h.k_frames, h.h, h.w, {}, 0}, grad, false),
                      "application/octet-stream");
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(e.what(), "text/plain");
    }
  });
}

StubPriorServer::~StubPriorServer() { stop(); }

int StubPriorServer::start(const std::string& host, int port) {
  impl_->host = host;
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port(host);
  } else if (impl_->server.bind_to_port(host, port)) {
    impl_->port = port;
  } else {
    impl_->port = -1;
  }
  if (impl_->port <= 0) throw Error(ErrorCode::io, "stub prior cannot bind " + host);
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->port;
}

void StubPriorServer::listen(const std::string& host, int port) {
  impl_->host = host;
  impl_->port = port;
  if (!impl_->server.listen(host, port))
    throw Error(ErrorCode::io, "stub prior cannot listen on " + host + ":" + std::to_string(port));
}

void StubPriorServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string StubPriorServer::url() const {
  return "http://" + impl_->host + ":" + std::to_string(impl_->port);
}

std::size_t StubPriorServer::requests() const {
  std::lock_guard lock(impl_->mu);
  return impl_->requests;
}

std::size_t StubPriorServer::last_payload_bytes() const {
  std::lock_guard lock(impl_->mu);
  return impl_->last_bytes;
}

// ---------------------------------------------------------------------------

TotalLoss total_loss(const LossTerms& terms, const GuidanceConfig& cfg) {
  TotalLoss out;
  auto accumulate = [&](const Tensor& t, double w, double& slot) {
    if (!t.defined() || w == 0.0) return;
    const Tensor weighted = ad::mul(t, w);
    slot = weighted.item();
    out.objective = out.objective.defined() ? ad::add(out.objective, weighted) : weighted;
  };
  accumulate(terms.trajectory, cfg.w_traj, out.report.trajectory);
  accumulate(terms.shape, cfg.w_shape, out.report.shape);
  accumulate(terms.smoothness, cfg.w_smooth, out.report.smoothness);
  out.report.total = out.report.trajectory + out.report.shape + out.report.smoothness;
  if (terms.prior && cfg.w_remote != 0.0) {
    const auto& p = *terms.prior;
    const Tensor weighted = ad::mul(p.objective, cfg.w_remote);
    out.objective = out.objective.defined() ? ad::add(out.objective, weighted) : weighted;
    if (p.reports_loss) {
      out.report.prior = cfg.w_remote * p.value;
      out.report.total += out.report.prior;
    }
    out.report.remote_grad_norm = p.grad_norm;
  }
  if (!out.objective.defined()) out.objective = Tensor::scalar(0.0);
  return out;
}

}  // namespace sketchmotion::guidance
