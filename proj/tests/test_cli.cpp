#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "edgeseg/config.hpp"
#include "edgeseg/dataio.hpp"
#include "edgeseg/image.hpp"
#include "support/test_configs.hpp"

using namespace edgeseg;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
  int exit_code;
  std::string output;  // stdout + stderr
};

std::string cli_path() {
  const char* p = std::getenv("EDGESEG_CLI");
  REQUIRE(p != nullptr);
  return p;
}

RunResult run(const std::string& args) {
  const std::string cmd = cli_path() + " " + args + " 2>&1";
  std::FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  std::array<char, 4096> buf;
  while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe))
    out += buf.data();
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() / "edgeseg-cli-test";
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string str(const std::string& leaf) const { return (dir / leaf).string(); }
};

std::string tiny_config_path(const Workspace& ws) {
  NetworkConfig c = testcfg::tiny_config(5, 3);
  const std::string path = ws.str("tiny.json");
  save_config(c, path);
  return path;
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("help documents every frozen flag across subcommands") {
  RunResult top = run("--help");
  CHECK(top.exit_code == 0);
  for (const char* sub :
       {"summarize", "train", "infer", "bench", "search", "gradcheck"})
    CHECK(top.output.find(sub) != std::string::npos);

  const std::vector<std::pair<std::string, std::vector<std::string>>> want = {
      {"summarize", {"--config", "--json"}},
      {"train",
       {"--config", "--synthetic", "--data-images", "--data-labels",
        "--palette", "--epochs", "--lr", "--momentum", "--batch", "--seed",
        "--out", "--json", "--flip-augment"}},
      {"infer", {"--ckpt", "--input", "--palette", "--out", "--json"}},
      {"bench", {"--config", "--ckpt", "--iters", "--warmup", "--seed",
                 "--json"}},
      {"search",
       {"--config", "--synthetic", "--iters", "--budget", "--acc-min", "--lr",
        "--momentum", "--batch", "--seed", "--out", "--json"}},
      {"gradcheck", {"--config", "--tol", "--seed", "--json"}},
  };
  for (const auto& [sub, flags] : want) {
    RunResult help = run(sub + " --help");
    CHECK(help.exit_code == 0);
    for (const std::string& flag : flags) {
      CAPTURE(sub);
      CAPTURE(flag);
      CHECK(help.output.find(flag) != std::string::npos);
    }
  }
}

TEST_CASE("unknown flags and missing subcommands are usage errors") {
  CHECK(run("summarize --config x.json --no-such-flag").exit_code == 2);
  CHECK(run("").exit_code == 2);
  CHECK(run("frobnicate").exit_code == 2);
  CHECK(run("summarize").exit_code == 2);  // missing required --config
}

TEST_CASE("summarize reports the reference model size inside the band") {
  const char* cfg_dir = std::getenv("EDGESEG_CONFIG_DIR");
  REQUIRE(cfg_dir != nullptr);
  RunResult r = run(std::string("summarize --config ") + cfg_dir +
                    "/edgesegnet-ref.json --json");
  REQUIRE(r.exit_code == 0);
  json j = json::parse(r.output);
  const double mb = j["model_megabytes"].get<double>();
  CHECK(mb >= 15.9);
  CHECK(mb <= 17.5);
  CHECK(j["logits"][2] == 352);
  CHECK(j["logits"][3] == 480);

  RunResult text = run(std::string("summarize --config ") + cfg_dir +
                       "/edgesegnet-ref.json");
  CHECK(text.exit_code == 0);
  CHECK(text.output.find("MB") != std::string::npos);
}

TEST_CASE("summarize on a broken config exits 1 and names the problem") {
  Workspace ws;
  NetworkConfig c = testcfg::tiny_config();
  c.edges.push_back({"ghost", "head", "in"});
  const std::string path = ws.str("broken.json");
  save_config(c, path);
  RunResult r = run("summarize --config " + path);
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("ghost") != std::string::npos);
}

TEST_CASE("train on synthetic data is deterministic end to end") {
  Workspace ws;
  const std::string cfg = tiny_config_path(ws);
  const std::string args = "train --config " + cfg +
                           " --synthetic 12,4,32,32,3 --epochs 1 --batch 4 "
                           "--seed 11 --json --out ";
  RunResult r1 = run(args + ws.str("a.ckpt"));
  REQUIRE(r1.exit_code == 0);
  RunResult r2 = run(args + ws.str("b.ckpt"));
  REQUIRE(r2.exit_code == 0);
  CHECK(slurp(ws.str("a.ckpt")) == slurp(ws.str("b.ckpt")));

  json j = json::parse(r1.output);
  CHECK(j.contains("final_val_accuracy"));
  CHECK(j["epochs"].size() == 1);
}

TEST_CASE("infer writes a palette PNG and reports latency") {
  Workspace ws;
  const std::string cfg = tiny_config_path(ws);
  REQUIRE(run("train --config " + cfg +
              " --synthetic 8,2,32,32,3 --epochs 1 --batch 4 --seed 3 --out " +
              ws.str("m.ckpt"))
              .exit_code == 0);

  // Input image from the synthetic generator, saved as PNG.
  Dataset ds = synth_dataset(77, 1, 32, 32, 3);
  write_png(tensor_to_image(ds.samples[0].image), ws.str("in.png"));

  // A palette for the three synthetic classes.
  Palette pal;
  pal.classes = {{0, "bg", {10, 10, 10}},
                 {1, "a", {200, 40, 40}},
                 {2, "b", {40, 200, 40}}};
  save_palette(pal, ws.str("pal.json"));

  RunResult r = run("infer --ckpt " + ws.str("m.ckpt") + " --input " +
                    ws.str("in.png") + " --palette " + ws.str("pal.json") +
                    " --out " + ws.str("seg.png") + " --json");
  REQUIRE(r.exit_code == 0);
  json j = json::parse(r.output);
  CHECK(j.contains("latency_ms"));
  CHECK(fs::exists(ws.str("seg.png")));
  RgbImage seg = read_image(ws.str("seg.png"));
  CHECK(seg.w == 32);
  CHECK(seg.h == 32);
}

TEST_CASE("bench prints one summary line plus a JSON record") {
  Workspace ws;
  const std::string cfg = tiny_config_path(ws);
  RunResult r = run("bench --config " + cfg + " --iters 3 --warmup 1");
  REQUIRE(r.exit_code == 0);
  int fps_lines = 0;
  std::string json_line;
  std::stringstream ss(r.output);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.rfind("bench:", 0) == 0) ++fps_lines;
    if (!line.empty() && line[0] == '{') json_line = line;
  }
  CHECK(fps_lines == 1);
  REQUIRE(!json_line.empty());
  json j = json::parse(json_line);
  CHECK(j["iters"] == 3);
  CHECK(j.contains("mean_fps"));
  CHECK(j.contains("median_fps"));
  CHECK(j.contains("std_fps"));
}

TEST_CASE("gradcheck exit code follows the report") {
  Workspace ws;
  const std::string cfg = tiny_config_path(ws);
  RunResult pass = run("gradcheck --config " + cfg + " --tol 1e-4 --seed 2");
  CHECK(pass.exit_code == 0);
  CHECK(pass.output.find("gradcheck passed") != std::string::npos);

  RunResult fail = run("gradcheck --config " + cfg + " --tol 0 --seed 2");
  CHECK(fail.exit_code == 1);
}

TEST_CASE("search writes a trace directory") {
  Workspace ws;
  const std::string cfg = tiny_config_path(ws);
  RunResult r = run("search --config " + cfg +
                    " --synthetic 8,4,32,32,3 --iters 2 --budget 1 --batch 4 "
                    "--acc-min 30 --seed 5 --out " +
                    ws.str("sweep") + " --json");
  REQUIRE(r.exit_code == 0);
  json j = json::parse(r.output);
  CHECK(j["iterations"] == 2);
  CHECK(fs::exists(ws.str("sweep") + "/trace.jsonl"));
}
