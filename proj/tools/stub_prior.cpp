// Reference remote prior for local runs: answers POST /v1/gradient with zeros
// or with the pixel-MSE gradient toward a directory of target PNG frames.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "sketchmotion/error.hpp"
#include "sketchmotion/guidance.hpp"
#include "sketchmotion/raster.hpp"

namespace fs = std::filesystem;
using namespace sketchmotion;

int main(int argc, char** argv) {
  CLI::App app{"Stub remote prior"};
  std::string host = "127.0.0.1", mode = "zero", target_dir;
  int port = 8765;
  app.add_option("--host", host)->capture_default_str();
  app.add_option("--port", port)->capture_default_str();
  app.add_option("--mode", mode, "zero | mse")->check(CLI::IsMember({"zero", "mse"}))->capture_default_str();
  app.add_option("--target", target_dir, "Directory of frame_0001.png ... (mse mode)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    std::vector<double> target;
    if (mode == "mse") {
      if (target_dir.empty()) throw ValidationError("mse mode needs --target", "--target");
      char name[32];
      for (std::size_t k = 1;; ++k) {
        std::snprintf(name, sizeof name, "frame_%04zu.png", k);
        const auto path = fs::path(target_dir) / name;
        if (!fs::exists(path)) break;
        for (auto px : raster::read_png(path).pixels) target.push_back(1.0 - px / 255.0);
      }
      if (target.empty()) throw ValidationError("no target frames in " + target_dir, "--target");
    }
    guidance::StubPriorServer server(
        mode == "mse" ? guidance::StubPriorServer::Mode::mse : guidance::StubPriorServer::Mode::zero,
        std::move(target));
    std::cout << "stub prior (" << mode << ") on http://" << host << ":" << port << std::endl;
    server.listen(host, port);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::validation ? 2 : 1;
  }
  return 0;
}
