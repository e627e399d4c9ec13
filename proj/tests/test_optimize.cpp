#include <doctest.h>

#include <cmath>
#include <fstream>
#include <json.hpp>

#include "sketchmotion/error.hpp"
#include "sketchmotion/optimize.hpp"
#include "sketchmotion/svg.hpp"
#include "test_support.hpp"

using namespace sketchmotion;
using namespace sketchmotion::optimize;
using ad::Tensor;

namespace {

gdn::GdnConfig small_gdn() {
  gdn::GdnConfig c;
  c.d = 16;
  c.layers = 1;
  c.heads = 2;
  c.pe_bands = 4;
  c.patch_grid = 4;
  return c;
}

raster::RasterConfig small_raster() {
  raster::RasterConfig r;
  r.height = r.width = 32;
  return r;
}

// ball = strokes 1-3 (group 1), box = strokes 4-6 (group 2); the ball slides right.
RefineProblem two_object_problem(std::size_t K = 8) {
  const Sketch sk = parse_svg(test_support::read_file(test_support::fixture("two_objects.svg")));
  const auto part = motion::assign_groups(sk, {{1, 1}, {2, 1}, {3, 1}, {4, 2}, {5, 2}, {6, 2}}, {});
  const auto traj = motion::make_trajectory(part, {{1, {{1, {0, 0}}, {K, {40, 0}}}}}, K);
  return make_problem(sk, part, traj);
}

// Shift group `g`'s trajectory target linearly in time by `end` at frame K.
void perturb_target(RefineProblem& p, std::size_t g, Point2 end) {
  auto& t = p.targets[g];
  const auto K = t.frame_count;
  for (std::size_t n = 0; n < t.point_count(); ++n)
    for (std::size_t k = 0; k < K; ++k) {
      const double a = static_cast<double>(k) / static_cast<double>(K - 1);
      t.points[(n * K + k) * 2] += a * end.x;
      t.points[(n * K + k) * 2 + 1] += a * end.y;
    }
}

guidance::GuidanceConfig traj_only() {
  guidance::GuidanceConfig g;
  g.w_shape = g.w_smooth = g.w_remote = 0;
  return g;
}

OptimizerConfig opt_steps(std::size_t n) {
  OptimizerConfig o;
  o.steps = n;
  o.seed = 42;
  return o;
}

std::map<std::string, std::vector<double>> by_name(const std::vector<gdn::NamedTensor>& s) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& t : s) out[t.name] = t.values;
  return out;
}

}  // namespace

TEST_CASE("optimizer defaults and validation") {
  OptimizerConfig c;
  CHECK(c.steps == 500);
  CHECK(c.lr_global == 1e-4);
  CHECK(c.lr_local == 5e-3);
  CHECK(c.beta1 == 0.9);
  CHECK(c.beta2 == 0.999);
  CHECK(c.eps == 1e-8);
  CHECK_NOTHROW(c.validate());
  c.steps = 0;
  try {
    c.validate();
    FAIL("steps = 0 accepted");
  } catch (const ValidationError& e) {
    CHECK(e.field() == "/optimizer/steps");
  }
  c = {};
  c.lr_local = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.lr_global = -1;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  CHECK_THROWS_AS(run_refinement(two_object_problem(), small_gdn(), traj_only(), opt_steps(0)),
                  ValidationError);
}

TEST_CASE("adam minimizes a parabola") {
  OptimizerConfig cfg;
  std::vector<double> x{0.0};
  AdamState st;
  for (int i = 0; i < 200; ++i) {
    const double g = 2 * (x[0] - 3);
    adam_step(x, std::vector<double>{g}, st, 0.1, cfg);
  }
  CHECK(std::abs(x[0] - 3) < 1e-2);
  CHECK(st.t == 200);
}

TEST_CASE("adam with zero gradient leaves parameters unchanged and decays moments") {
  OptimizerConfig cfg;
  std::vector<double> x{1.0, -2.0};
  AdamState st;
  adam_step(x, std::vector<double>{0.0, 0.0}, st, 0.1, cfg);
  CHECK(x == std::vector<double>{1.0, -2.0});

  AdamState warm{{0.5, -0.5}, {0.25, 0.25}, 3};
  const auto before = warm;
  std::vector<double> y{1.0, 1.0};
  adam_step(y, std::vector<double>{0.0, 0.0}, warm, 0.1, cfg);
  CHECK(warm.m[0] == doctest::Approx(0.9 * before.m[0]));
  CHECK(warm.v[0] == doctest::Approx(0.999 * before.v[0]));
}

TEST_CASE("adam step size approaches lr under a constant gradient") {
  OptimizerConfig cfg;
  std::vector<double> x{0.0};
  AdamState st;
  double last = 0;
  for (int i = 0; i < 2000; ++i) {
    const double before = x[0];
    adam_step(x, std::vector<double>{0.37}, st, 0.01, cfg);
    last = before - x[0];
  }
  CHECK(last == doctest::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("adam rejects non-finite gradients by name") {
  OptimizerConfig cfg;
  std::vector<double> x{1.0, 2.0};
  AdamState st;
  try {
    adam_step(x, std::vector<double>{0.1, std::nan("")}, st, 0.1, cfg, "blocks.0.ffn.1.w");
    FAIL("accepted NaN");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::non_finite);
    CHECK(std::string(e.what()).find("blocks.0.ffn.1.w") != std::string::npos);
  }
  CHECK(x == std::vector<double>{1.0, 2.0});
  CHECK(st.t == 0);
}

TEST_CASE("step 0 reproduces the coarse animation") {
  const auto p = two_object_problem();
  Refiner r(p, small_gdn(), traj_only(), opt_steps(1), nullptr, small_raster());
  const auto coarse = motion::merge_groups(p.coarse, p.sketch.topology(), p.sketch.canvas_w(),
                                           p.sketch.canvas_h());
  CHECK(r.current() == coarse);
}

TEST_CASE("trajectory-only loss at the coarse optimum gives zero gradients") {
  const auto p = two_object_problem();
  Refiner r(p, small_gdn(), traj_only(), opt_steps(1), nullptr, small_raster());
  const auto before = r.state();
  const auto rec = r.step();
  CHECK(rec.report.total == 0.0);
  for (const auto& net : r.networks())
    for (const auto& param : net.parameters())
      if (param.tensor.has_grad())
        for (double g : param.tensor.grad()) CHECK(g == 0.0);
  const auto after = by_name(r.state());
  for (const auto& t : before)
    if (t.name.rfind("group.", 0) == 0) CHECK(after.at(t.name) == t.values);
}

TEST_CASE("local and global paths alternate") {
  auto p = two_object_problem();
  perturb_target(p, 0, {6, -4});
  perturb_target(p, 1, {-5, 3});
  guidance::GuidanceConfig g;  // all surrogates on
  Refiner r(p, small_gdn(), g, opt_steps(6), nullptr, small_raster());
  std::map<std::string, gdn::ParamRole> role;
  for (std::size_t i = 0; i < r.networks().size(); ++i)
    for (const auto& param : r.networks()[i].parameters())
      role["group." + std::to_string(p.coarse[i].group_id) + "/" + param.name] = param.role;

  for (std::size_t s = 0; s < 6; ++s) {
    const auto before = by_name(r.state());
    r.step();
    const auto after = by_name(r.state());
    std::map<gdn::ParamRole, bool> changed;
    for (const auto& [name, rl] : role) {
      const bool diff = before.at(name) != after.at(name);
      changed[rl] = changed[rl] || diff;
    }
    INFO("step " << s);
    if (s % 2 == 0) {
      CHECK(changed[gdn::ParamRole::local]);
      CHECK_FALSE(changed[gdn::ParamRole::global]);
    } else {
      CHECK(changed[gdn::ParamRole::global]);
      CHECK_FALSE(changed[gdn::ParamRole::local]);
    }
    // zero-initialized heads block the gradient to shared modules at step 0
    if (s > 0) CHECK(changed[gdn::ParamRole::shared]);
  }
}

TEST_CASE("refinement is deterministic for a seed") {
  auto p = two_object_problem();
  perturb_target(p, 1, {-5, 3});
  guidance::GuidanceConfig g;
  const auto a = run_refinement(p, small_gdn(), g, opt_steps(5), {nullptr, small_raster()});
  const auto b = run_refinement(p, small_gdn(), g, opt_steps(5), {nullptr, small_raster()});
  REQUIRE(a.trace.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(a.trace[i].step == i);
    CHECK(a.trace[i].report.total == b.trace[i].report.total);
  }
  CHECK(a.checkpoint == b.checkpoint);
  CHECK(a.refined == b.refined);

  auto other = opt_steps(5);
  other.seed = 43;
  const auto c = run_refinement(p, small_gdn(), g, other, {nullptr, small_raster()});
  CHECK(c.checkpoint != a.checkpoint);
}

TEST_CASE("a group without loss signal keeps its parameters") {
  auto p = two_object_problem();
  perturb_target(p, 1, {-8, 6});  // only group 2 is off target
  Refiner r(p, small_gdn(), traj_only(), opt_steps(6), nullptr, small_raster());
  const auto before = by_name(r.state());
  for (int s = 0; s < 6; ++s) r.step();
  const auto after = by_name(r.state());
  bool moved2 = false;
  for (const auto& [name, v] : before) {
    if (name.rfind("group.1/", 0) == 0) CHECK(after.at(name) == v);
    if (name.rfind("group.2/", 0) == 0) moved2 = moved2 || after.at(name) != v;
  }
  CHECK(moved2);
}

TEST_CASE("resuming from a checkpoint continues the same run") {
  auto p = two_object_problem();
  perturb_target(p, 0, {4, 4});
  guidance::GuidanceConfig g;
  const auto full = run_refinement(p, small_gdn(), g, opt_steps(4), {nullptr, small_raster()});

  const auto dir = test_support::temp_dir("resume");
  const auto half = run_refinement(p, small_gdn(), g, opt_steps(2), {nullptr, small_raster()});
  gdn::save_checkpoint(dir / "state.smck", half.checkpoint);
  RunOptions opts{nullptr, small_raster()};
  opts.resume = gdn::load_checkpoint(dir / "state.smck");
  const auto rest = run_refinement(p, small_gdn(), g, opt_steps(4), opts);
  REQUIRE(rest.trace.size() == 2);
  CHECK(rest.trace[0].step == 2);
  CHECK(rest.trace[1].report.total == full.trace[3].report.total);
  CHECK(rest.checkpoint == full.checkpoint);
}

namespace {

class FailingPrior : public guidance::FramePrior {
 public:
  explicit FailingPrior(std::size_t fail_at) : fail_at_(fail_at) {}
  std::string name() const override { return "failing"; }
  guidance::PriorTerm evaluate(const Tensor& frames, std::size_t step) override {
    if (step == fail_at_) throw Error(ErrorCode::remote, "scorer went away");
    guidance::PriorTerm t;
    t.objective = ad::mul(ad::sum(frames), 0.0);
    return t;
  }

 private:
  std::size_t fail_at_;
};

}  // namespace

TEST_CASE("a remote failure pauses with a checkpoint") {
  const auto dir = test_support::temp_dir("pause");
  RunOptions opts{std::make_shared<FailingPrior>(2), small_raster()};
  opts.pause_checkpoint = dir / "paused.smck";
  try {
    run_refinement(two_object_problem(), small_gdn(), guidance::GuidanceConfig{}, opt_steps(5), opts);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::remote);
  }
  const auto saved = by_name(gdn::load_checkpoint(dir / "paused.smck"));
  CHECK(saved.at("step") == std::vector<double>{2.0});
}

TEST_CASE("trace csv round trip") {
  std::vector<StepRecord> trace{{0, {1.5, 1.0, 0.25, 0.25, 0.0, 0.0}},
                                {1, {0.1 + 0.2, 0.3, 1e-17, 0.0, 0.0, 3.25}}};
  const auto dir = test_support::temp_dir("trace");
  write_trace_csv(dir / "trace.csv", trace);
  const auto back = read_trace_csv(dir / "trace.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[1].step == 1);
  CHECK(back[1].report.total == 0.1 + 0.2);
  CHECK(back[1].report.shape == 1e-17);
  CHECK(back[1].report.remote_grad_norm == 3.25);
  CHECK(test_support::read_file(dir / "trace.csv").rfind(
            "step,total,trajectory,shape,smoothness,prior,remote_grad_norm\n", 0) == 0);
}

TEST_CASE("export writes frames and a manifest") {
  const auto p = two_object_problem();
  Refiner r(p, small_gdn(), traj_only(), opt_steps(1), nullptr, small_raster());
  const auto seq = r.current();
  const auto dir = test_support::temp_dir("export");
  ExportOptions eo;
  eo.raster = small_raster();
  const auto m = export_animation(seq, dir, eo);
  CHECK(m.frames == 8);
  CHECK(m.files.size() == 16);

  const auto j = nlohmann::json::parse(test_support::read_file(dir / "manifest.json"));
  CHECK(j["K"] == 8);
  CHECK(j["fps"] == 8.0);
  CHECK(j["files"].size() == 16);
  for (const auto& f : j["files"]) CHECK(std::filesystem::exists(dir / f.get<std::string>()));

  // identity refinement: frame 1 is the input sketch
  CHECK(parse_svg(test_support::read_file(dir / "frame_0001.svg")) == p.sketch);

  for (std::size_t k = 1; k <= 8; ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04zu.png", k);
    const auto img = raster::read_png(dir / name);
    CHECK(img.pixels == raster::to_gray8(raster::rasterize(seq.frame(k), small_raster())));
  }
}
