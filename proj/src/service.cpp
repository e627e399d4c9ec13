#include "sketchmotion/service.hpp"

#include <httplib.h>

#include <atomic>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <thread>

#include "sketchmotion/archive.hpp"
#include "sketchmotion/error.hpp"
#include "sketchmotion/optimize.hpp"
#include "sketchmotion/project.hpp"
#include "sketchmotion/svg.hpp"

namespace sketchmotion::service {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct ProjectEntry {
  std::string id;
  fs::path dir;
  std::mutex mu;  // serializes mutations of this project
  project::Project payload;
  std::string status = "draft";  // draft | refining | done
  std::string active_job;        // running or paused
  std::string last_job;          // latest finished job
};

struct RefineRequest {
  std::optional<std::size_t> steps;
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<std::string>> priors;
  std::optional<std::string> remote_prior;
  std::optional<std::string> prompt;
};

struct Job {
  std::string id;
  std::string project_id;
  fs::path dir;

  // prepared at submission
  std::optional<optimize::RefineProblem> problem;
  gdn::GdnConfig gdn;
  guidance::GuidanceConfig guide;
  optimize::OptimizerConfig opt;

  mutable std::mutex mu;  // guards the fields below; the worker is the only writer
  std::string state = "running";  // running | paused | failed | done
  std::size_t step = 0;
  std::vector<optimize::StepRecord> trace;
  std::string error;
};

json report_json(const guidance::LossReport& r) {
  return {{"total", r.total},           {"trajectory", r.trajectory}, {"shape", r.shape},
          {"smoothness", r.smoothness}, {"prior", r.prior},           {"remote_grad_norm", r.remote_grad_norm}};
}

json job_json(const Job& j) {
  std::lock_guard lock(j.mu);
  json out = {{"id", j.id}, {"project", j.project_id}, {"state", j.state},
              {"step", j.step}, {"steps", j.opt.steps}};
  out["losses"] = j.trace.empty() ? json(nullptr) : report_json(j.trace.back().report);
  out["trace"] = json::array();
  for (const auto& r : j.trace) {
    auto row = report_json(r.report);
    row["step"] = r.step;
    out["trace"].push_back(std::move(row));
  }
  if (!j.error.empty()) out["error"] = j.error;
  return out;
}

int http_status(ErrorCode c) {
  switch (c) {
    case ErrorCode::not_found: return 404;
    case ErrorCode::conflict: return 409;
    case ErrorCode::remote: return 502;
    case ErrorCode::io:
    case ErrorCode::non_finite: return 500;
    default: return 422;
  }
}

void send_error(httplib::Response& res, const Error& e) {
  json body = {{"code", to_string(e.code())}, {"message", e.what()}};
  std::string field = e.field();
  if (field.empty() && (e.code() == ErrorCode::parse || e.code() == ErrorCode::unsupported_feature ||
                        e.code() == ErrorCode::empty_sketch))
    field = "/svg";
  if (!field.empty()) body["field"] = field;
  res.status = http_status(e.code());
  res.set_content(body.dump(), "application/json");
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("request body is not valid JSON: ") + e.what(), e.byte);
  }
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t frame_index(const std::string& s, std::size_t frames) {
  std::size_t k = 0;
  try {
    k = std::stoul(s);
  } catch (const std::exception&) {
    throw ValidationError("frame must be a number", "/frame");
  }
  if (k < 1 || k > frames)
    throw Error(ErrorCode::not_found, "frame " + s + " outside 1.." + std::to_string(frames), "/frame");
  return k;
}

std::string frame_name(std::size_t k, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04zu.%s", k, ext);
  return buf;
}

RefineRequest parse_refine(const json& body) {
  if (!body.is_object()) throw ValidationError("expected an object", "/");
  RefineRequest r;
  for (const auto& [k, v] : body.items()) {
    const std::string f = "/" + k;
    if (k == "steps") {
      if (!v.is_number_unsigned()) throw ValidationError("steps must be a non-negative integer", f);
      r.steps = v.get<std::size_t>();
    } else if (k == "seed") {
      if (!v.is_number_unsigned()) throw ValidationError("seed must be a non-negative integer", f);
      r.seed = v.get<std::uint64_t>();
    } else if (k == "priors") {
      if (!v.is_array()) throw ValidationError("priors must be an array", f);
      r.priors.emplace();
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_string()) throw ValidationError("prior names are strings", f + "/" + std::to_string(i));
        r.priors->push_back(v[i].get<std::string>());
      }
    } else if (k == "remote_prior") {
      if (!v.is_string()) throw ValidationError("remote_prior must be a URL string", f);
      r.remote_prior = v.get<std::string>();
    } else if (k == "prompt") {
      if (!v.is_string()) throw ValidationError("prompt must be a string", f);
      r.prompt = v.get<std::string>();
    } else {
      throw ValidationError("unknown property '" + k + "'", f);
    }
  }
  return r;
}

}  // namespace

struct Service::Impl {
  ServiceConfig cfg;
  httplib::Server server;
  std::unique_ptr<httplib::ThreadPool> pool;
  std::thread listener;
  std::atomic<bool> stopping{false};

  std::mutex registry_mu;
  std::map<std::string, std::shared_ptr<ProjectEntry>> projects;
  std::map<std::string, std::shared_ptr<Job>> jobs;
  std::mt19937_64 id_rng{std::random_device{}()};

  explicit Impl(ServiceConfig c) : cfg(std::move(c)) {
    fs::create_directories(cfg.data_dir / "projects");
    fs::create_directories(cfg.data_dir / "jobs");
    const std::size_t n = cfg.workers ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());
    pool = std::make_unique<httplib::ThreadPool>(n);
    load_existing();
    routes();
  }

  // --- persistence ---

  std::string new_id(char prefix) {
    std::lock_guard lock(registry_mu);
    for (;;) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%c%012llx", prefix,
                    static_cast<unsigned long long>(id_rng() & 0xffffffffffffull));
      if (!projects.contains(buf) && !jobs.contains(buf)) return buf;
    }
  }

  static void save_status(const ProjectEntry& e) {
    const json s = {{"status", e.status}, {"active_job", e.active_job}, {"last_job", e.last_job}};
    project::atomic_write(e.dir / "status.json", s.dump(2) + "\n");
  }

  static void save_job(const Job& j) {
    json body = job_json(j);
    project::atomic_write(j.dir / "job.json", body.dump(2) + "\n");
  }

  void load_existing() {
    for (const auto& d : fs::directory_iterator(cfg.data_dir / "projects")) {
      if (!d.is_directory()) continue;
      auto e = std::make_shared<ProjectEntry>();
      e->id = d.path().filename().string();
      e->dir = d.path();
      try {
        e->payload = project::load_project(e->dir / "project.json");
        if (fs::exists(e->dir / "status.json")) {
          const auto s = json::parse(read_text(e->dir / "status.json"));
          e->status = s.value("status", "draft");
          e->last_job = s.value("last_job", "");
          // a job interrupted by a restart cannot be resumed in-process
          if (e->status == "refining") e->status = e->last_job.empty() ? "draft" : "done";
        }
      } catch (const std::exception& ex) {
        std::cerr << "warning: skipping project " << e->id << ": " << ex.what() << "\n";
        continue;
      }
      projects[e->id] = e;
    }
    for (const auto& d : fs::directory_iterator(cfg.data_dir / "jobs")) {
      if (!fs::exists(d.path() / "job.json")) continue;
      try {
        const auto j = json::parse(read_text(d.path() / "job.json"));
        auto job = std::make_shared<Job>();
        job->id = j.at("id").get<std::string>();
        job->project_id = j.at("project").get<std::string>();
        job->dir = d.path();
        job->state = j.at("state").get<std::string>();
        if (job->state == "running") job->state = "failed";
        job->step = j.at("step").get<std::size_t>();
        job->opt.steps = j.at("steps").get<std::size_t>();
        for (const auto& r : j.at("trace"))
          job->trace.push_back({r.at("step").get<std::size_t>(),
                                {r.at("total"), r.at("trajectory"), r.at("shape"), r.at("smoothness"),
                                 r.at("prior"), r.at("remote_grad_norm")}});
        job->error = j.value("error", "");
        jobs[job->id] = job;
      } catch (const std::exception& ex) {
        std::cerr << "warning: skipping job " << d.path().filename() << ": " << ex.what() << "\n";
      }
    }
  }

  std::shared_ptr<ProjectEntry> find_project(const std::string& id) {
    std::lock_guard lock(registry_mu);
    auto it = projects.find(id);
    if (it == projects.end()) throw Error(ErrorCode::not_found, "no project " + id);
    return it->second;
  }

  std::shared_ptr<Job> find_job(const std::string& id) {
    std::lock_guard lock(registry_mu);
    auto it = jobs.find(id);
    if (it == jobs.end()) throw Error(ErrorCode::not_found, "no job " + id);
    return it->second;
  }

  bool job_active(const ProjectEntry& e) {
    if (e.active_job.empty()) return false;
    const auto j = find_job(e.active_job);
    std::lock_guard lock(j->mu);
    return j->state == "running";
  }

  // Replaces one top-level section of the project document and re-validates
  // the whole project through the same parser and validators as the CLI.
  void mutate(ProjectEntry& e, const std::function<void(json&)>& edit) {
    if (job_active(e)) throw Error(ErrorCode::conflict, "project " + e.id + " is being refined");
    json doc = json::parse(project::to_json(e.payload));
    edit(doc);
    auto updated = project::parse_project(doc.dump());
    project::realize(updated);
    project::save_project(e.dir / "project.json", updated);
    e.payload = std::move(updated);
    e.status = "draft";
    e.last_job.clear();
    save_status(e);
  }

  json project_json(ProjectEntry& e) {
    return {{"id", e.id}, {"status", e.status}, {"active_job", e.active_job},
            {"last_job", e.last_job}, {"project", json::parse(project::to_json(e.payload))}};
  }

  // --- jobs ---

  void run_job(const std::shared_ptr<Job>& job, bool resume) {
    const auto entry = find_project(job->project_id);
    optimize::RunOptions o;
    o.raster = cfg.raster;
    o.pause_checkpoint = job->dir / "checkpoint.smck";
    std::string final_state = "done", message;
    try {
      if (stopping) throw Error(ErrorCode::io, "service stopped before the job started");
      if (resume) o.resume = gdn::load_checkpoint(job->dir / "checkpoint.smck");
      o.on_step = [&](const optimize::StepRecord& rec, const optimize::Refiner& r) {
        {
          std::lock_guard lock(job->mu);
          job->step = rec.step + 1;
          job->trace.push_back(rec);
        }
        if (job->opt.snapshot_every && (rec.step + 1) % job->opt.snapshot_every == 0)
          gdn::save_checkpoint(job->dir / "checkpoint.smck", r.state());
        if (stopping) gdn::save_checkpoint(job->dir / "checkpoint.smck", r.state());
        return !stopping;
      };
      const auto result = optimize::run_refinement(*job->problem, job->gdn, job->guide, job->opt, o);
      if (stopping) {
        final_state = "paused";
        message = "service stopped; resume to continue";
      } else {
        optimize::ExportOptions eo;
        eo.raster = cfg.export_raster;
        eo.fps = cfg.fps;
        optimize::export_animation(result.refined, job->dir / "export", eo);
        std::vector<optimize::StepRecord> trace;
        {
          std::lock_guard lock(job->mu);
          trace = job->trace;
        }
        optimize::write_trace_csv(job->dir / "export" / "trace.csv", trace);
        gdn::save_checkpoint(job->dir / "checkpoint.smck", result.checkpoint);
      }
    } catch (const Error& e) {
      final_state = (e.code() == ErrorCode::remote || e.code() == ErrorCode::non_finite) &&
                            fs::exists(job->dir / "checkpoint.smck")
                        ? "paused"
                        : "failed";
      message = e.what();
    } catch (const std::exception& e) {
      final_state = "failed";
      message = e.what();
    }
    {
      std::lock_guard lock(job->mu);
      job->state = final_state;
      job->error = message;
    }
    save_job(*job);
    std::lock_guard lock(entry->mu);
    if (entry->active_job == job->id && final_state != "paused") {
      entry->active_job.clear();
      if (final_state == "done") {
        entry->status = "done";
        entry->last_job = job->id;
      } else {
        entry->status = entry->last_job.empty() ? "draft" : "done";
      }
    }
    save_status(*entry);
  }

  std::shared_ptr<Job> submit(ProjectEntry& e, const RefineRequest& req) {
    if (job_active(e)) throw Error(ErrorCode::conflict, "project " + e.id + " already has a running job");
    const auto scene = project::realize(e.payload);
    auto job = std::make_shared<Job>();
    job->project_id = e.id;
    job->problem = optimize::make_problem(scene.sketch, scene.partition, scene.trajectory);
    job->gdn = e.payload.gdn;
    job->opt = e.payload.optimizer;
    job->guide = e.payload.guidance;
    job->guide.endpoint = cfg.remote_endpoint;
    job->guide.timeout_s = cfg.remote_timeout_s;
    if (req.remote_prior) job->guide.endpoint = req.remote_prior;
    if (req.prompt) job->guide.prompt = *req.prompt;
    if (req.priors) guidance::apply_priors(job->guide, *req.priors, "/priors");
    if (req.steps) job->opt.steps = *req.steps;
    if (req.seed) job->opt.seed = *req.seed;
    job->opt.validate();
    job->guide.validate();

    job->id = new_id('j');
    job->dir = cfg.data_dir / "jobs" / job->id;
    fs::create_directories(job->dir);
    if (!e.active_job.empty()) {  // a paused job is superseded
      const auto old = find_job(e.active_job);
      std::lock_guard lock(old->mu);
      old->state = "failed";
      old->error = "superseded by job " + job->id;
    }
    {
      std::lock_guard lock(registry_mu);
      jobs[job->id] = job;
    }
    e.active_job = job->id;
    e.status = "refining";
    save_status(e);
    save_job(*job);
    pool->enqueue([this, job] { run_job(job, false); });
    return job;
  }

  // --- routes ---

  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  static Handler guard(Handler fn) {
    return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const Error& e) {
        send_error(res, e);
      } catch (const json::exception& e) {
        send_error(res, ValidationError(e.what()));
      } catch (const std::exception& e) {
        send_error(res, Error(ErrorCode::io, e.what()));
      }
    };
  }

  void routes() {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });

    server.Get("/projects", guard([this](const httplib::Request&, httplib::Response& res) {
      json out = json::array();
      std::vector<std::shared_ptr<ProjectEntry>> all;
      {
        std::lock_guard lock(registry_mu);
        for (const auto& [id, e] : projects) all.push_back(e);
      }
      for (const auto& e : all) {
        std::lock_guard lock(e->mu);
        out.push_back({{"id", e->id}, {"status", e->status}});
      }
      send_json(res, out);
    }));

    server.Post("/projects", guard([this](const httplib::Request& req, httplib::Response& res) {
      std::string svg = req.body;
      if (req.is_multipart_form_data()) {
        if (!req.has_file("svg")) throw ValidationError("multipart upload needs an 'svg' field", "/svg");
        svg = req.get_file_value("svg").content;
      }
      std::size_t frames = motion::kDefaultFrameCount;
      if (req.has_param("K")) frames = frame_index(req.get_param_value("K"), motion::kMaxFrameCount);
      auto e = std::make_shared<ProjectEntry>();
      e->payload = project::from_svg(svg, frames);
      project::realize(e->payload);
      e->id = new_id('p');
      e->dir = cfg.data_dir / "projects" / e->id;
      fs::create_directories(e->dir);
      project::save_project(e->dir / "project.json", e->payload);
      save_status(*e);
      {
        std::lock_guard lock(registry_mu);
        projects[e->id] = e;
      }
      std::lock_guard lock(e->mu);
      send_json(res, project_json(*e), 201);
    }));

    server.Get(R"(/projects/([^/]+))", guard([this](const httplib::Request& req, httplib::Response& res) {
      auto e = find_project(req.matches[1]);
      std::lock_guard lock(e->mu);
      send_json(res, project_json(*e));
    }));

    server.Get(R"(/projects/([^/]+)/groups)", guard([this](const httplib::Request& req, httplib::Response& res) {
      auto e = find_project(req.matches[1]);
      std::lock_guard lock(e->mu);
      const auto doc = json::parse(project::to_json(e->payload));
      json strokes = json::array();
      for (const auto& s : parse_svg(e->payload.svg).strokes()) strokes.push_back(s.id);
      send_json(res, {{"groups", doc["groups"]}, {"strokes", strokes}});
    }));

    server.Put(R"(/projects/([^/]+)/groups)", guard([this](const httplib::Request& req, httplib::Response& res) {
      auto e = find_project(req.matches[1]);
      const auto body = parse_body(req);
      if (!body.is_object() || !body.contains("groups")) throw ValidationError("body needs 'groups'", "/groups");
      std::lock_guard lock(e->mu);
      mutate(*e, [&](json& doc) {
        doc["groups"] = body["groups"];
        // keyframes of groups that no longer exist are dropped
        std::set<json> ids;
        if (body["groups"].is_array())
          for (const auto& g : body["groups"])
            if (g.is_object() && g.contains("id")) ids.insert(g["id"]);
        json kept = json::array();
        for (const auto& k : doc["keyframes"])
          if (ids.contains(k["group"])) kept.push_back(k);
        doc["keyframes"] = kept;
      });
      send_json(res, project_json(*e));
    }));

    server.Get(R"(/projects/([^/]+)/keyframes)", guard([this](const httplib::Request& req, httplib::Response& res) {
      auto e = find_project(req.matches[1]);
      std::lock_guard lock(e->mu);
      const auto doc = json::parse(project::to_json(e->payload));
      send_json(res, {{"K", doc["K"]}, {"keyframes", doc["keyframes"]}});
    }));

    server.Put(R"(/projects/([^/]+)/keyframes)", guard([this](const httplib::Request& req, httplib::Response& res) {
      auto e = find_project(req.matches[1]);
      const auto body = parse_body(req);
      if (!body.is_object() || !body.contains("keyframes"))
        throw ValidationError("body needs 'keyframes'", "/keyframes");
      for (const auto& [k, v] : body.items())
        if (k != "keyframes" && k != "K") throw ValidationError("unknown property '" + k + "'", "/" + k);
      std::lock_guard lock(e->mu);
      mutate(*e, [&](json& doc) {
        doc["keyframes"] = body["keyframes"];
        if (body.contains("K")) doc["K"] = body["K"];
      });
      send_json(res, project_json(*e));
    }));

    server.Get(R"(/projects/([^/]+)/preview/([^/]+))", guard([this](const httplib::Request& req, httplib::Response& res) {
      auto e = find_project(req.matches[1]);
      project::Project p;
      {
        std::lock_guard lock(e->mu);
        p = e->payload;
      }
      const auto seq = project::coarse_animation(project::realize(p));
      const auto k = frame_index(req.matches[2], seq.frame_count());
      res.set_content(serialize_svg(seq.frame(k)), "image/svg+xml");
    }));

    server.Get(R"(/projects/([^/]+)/frames/([^/]+))", guard([this](const httplib::Request& req, httplib::Response& res) {
      auto e = find_project(req.matches[1]);
      const std::string stage = req.has_param("stage") ? req.get_param_value("stage") : "coarse";
      project::Project p;
      std::string last;
      {
        std::lock_guard lock(e->mu);
        p = e->payload;
        last = e->last_job;
      }
      if (stage == "coarse") {
        const auto seq = project::coarse_animation(project::realize(p));
        const auto k = frame_index(req.matches[2], seq.frame_count());
        res.set_content(serialize_svg(seq.frame(k)), "image/svg+xml");
      } else if (stage == "refined") {
        if (last.empty()) throw Error(ErrorCode::not_found, "no refined animation yet; run refine first");
        const auto k = frame_index(req.matches[2], p.frames);
        res.set_content(read_text(cfg.data_dir / "jobs" / last / "export" / frame_name(k, "svg")),
                        "image/svg+xml");
      } else {
        throw ValidationError("stage must be coarse or refined", "/stage");
      }
    }));

    server.Post(R"(/projects/([^/]+)/refine)", guard([this](const httplib::Request& req, httplib::Response& res) {
      auto e = find_project(req.matches[1]);
      const auto r = parse_refine(parse_body(req));
      std::lock_guard lock(e->mu);
      const auto job = submit(*e, r);
      send_json(res, {{"job", job->id}}, 202);
    }));

    server.Get(R"(/projects/([^/]+)/export)", guard([this](const httplib::Request& req, httplib::Response& res) {
      auto e = find_project(req.matches[1]);
      std::string last;
      {
        std::lock_guard lock(e->mu);
        last = e->last_job;
      }
      if (last.empty()) throw Error(ErrorCode::not_found, "nothing to export; run refine first");
      const auto dir = cfg.data_dir / "jobs" / last / "export";
      std::vector<std::string> names;
      for (const auto& f : fs::directory_iterator(dir)) names.push_back(f.path().filename().string());
      std::sort(names.begin(), names.end());
      std::vector<std::pair<std::string, std::string>> files;
      for (const auto& n : names) files.emplace_back(n, read_text(dir / n));
      res.set_header("Content-Disposition", "attachment; filename=\"" + e->id + ".tar\"");
      res.set_content(make_tar(files), "application/x-tar");
    }));

    server.Get(R"(/jobs/([^/]+))", guard([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, job_json(*find_job(req.matches[1])));
    }));

    server.Post(R"(/jobs/([^/]+)/resume)", guard([this](const httplib::Request& req, httplib::Response& res) {
      auto job = find_job(req.matches[1]);
      auto e = find_project(job->project_id);
      std::lock_guard plock(e->mu);
      {
        std::lock_guard lock(job->mu);
        if (job->state != "paused" || e->active_job != job->id)
          throw Error(ErrorCode::conflict, "job " + job->id + " is " + job->state + ", not paused");
        if (!job->problem)
          throw Error(ErrorCode::conflict, "job " + job->id + " predates a restart and cannot resume");
        job->state = "running";
        job->error.clear();
      }
      e->status = "refining";
      save_status(*e);
      pool->enqueue([this, job] { run_job(job, true); });
      send_json(res, {{"job", job->id}}, 202);
    }));
  }
};

Service::Service(ServiceConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {}

Service::~Service() { stop(); }

int Service::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound <= 0) throw Error(ErrorCode::io, "cannot bind " + host + ":" + std::to_string(port));
  impl_->listener = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void Service::listen(const std::string& host, int port) {
  if (!impl_->server.listen(host, port))
    throw Error(ErrorCode::io, "cannot listen on " + host + ":" + std::to_string(port));
}

void Service::stop() {
  if (!impl_ || !impl_->pool) return;
  impl_->stopping = true;
  impl_->server.stop();
  if (impl_->listener.joinable()) impl_->listener.join();
  impl_->pool->shutdown();
  impl_->pool.reset();
}

}  // namespace sketchmotion::service
