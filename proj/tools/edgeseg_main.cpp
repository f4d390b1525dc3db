// Command-line front end: summarize, train, infer, bench, search, gradcheck.
// Exit codes: 0 success, 1 operational failure, 2 usage error.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "edgeseg/analysis.hpp"
#include "edgeseg/checkpoint.hpp"
#include "edgeseg/config.hpp"
#include "edgeseg/dataio.hpp"
#include "edgeseg/error.hpp"
#include "edgeseg/explorer.hpp"
#include "edgeseg/graph.hpp"
#include "edgeseg/image.hpp"
#include "edgeseg/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace edgeseg;

namespace {

constexpr int kDefaultH = 352;
constexpr int kDefaultW = 480;

struct SynthSpec {
  int train = 200;
  int val = 50;
  int h = 64;
  int w = 64;
  int classes = 3;
};

SynthSpec parse_synth_spec(const std::string& text) {
  SynthSpec s;
  if (text.empty()) return s;
  std::vector<int> parts;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) parts.push_back(std::stoi(tok));
  if (parts.size() != 5)
    throw ArgumentError(
        "--synthetic expects \"train,val,h,w,classes\" (e.g. 200,50,64,64,3)");
  s.train = parts[0];
  s.val = parts[1];
  s.h = parts[2];
  s.w = parts[3];
  s.classes = parts[4];
  return s;
}

// The synthetic class count overrides the config's head so desk-scale runs
// do not drag a 32-class head around.
NetworkConfig with_classes(NetworkConfig c, int num_classes) {
  if (c.num_classes == num_classes) return c;
  c.num_classes = num_classes;
  for (ModuleSpec& m : c.nodes)
    if (auto* h = std::get_if<HeadSpec>(&m.v)) h->num_classes = num_classes;
  return c;
}

Tensor<float> seeded_input(const Shape4& s, std::uint64_t seed) {
  Tensor<float> t(s);
  Rng rng(seed);
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

struct CommonFlags {
  std::string config_path;
  std::string ckpt_path;
  std::string data_images, data_labels, palette_path;
  std::string synthetic;
  bool use_synthetic = false;
  int epochs = 20;
  double lr = 0.05;
  double momentum = 0.9;
  int batch = 8;
  std::uint64_t seed = 42;
  std::string out;
  std::string input;
  int iters = 0;
  int warmup = 5;
  double tol = 1e-4;
  int budget = 1;
  double acc_min = 50.0;
  bool as_json = false;
  bool flip_augment = false;
};

int run_summarize(const CommonFlags& f) {
  NetworkConfig config = load_config(f.config_path);
  const Shape4 input{1, config.input_channels, kDefaultH, kDefaultW};
  ShapeTable shapes = infer_shapes(config, input);
  ComplexityReport report = count_flops(config, input);

  if (f.as_json) {
    json j = json::parse(report.to_json());
    json rows = json::array();
    for (const auto& row : shapes.modules) {
      rows.push_back({{"name", row.name},
                      {"kind", row.kind},
                      {"output",
                       {row.output.n, row.output.c, row.output.h,
                        row.output.w}}});
    }
    j["shapes"] = rows;
    j["logits"] = {shapes.logits.n, shapes.logits.c, shapes.logits.h,
                   shapes.logits.w};
    std::cout << j.dump() << "\n";
    return 0;
  }

  std::cout << "input " << input.str() << "\n";
  for (const auto& row : shapes.modules) {
    std::cout << "  " << row.name;
    for (std::size_t pad = row.name.size(); pad < 12; ++pad) std::cout << ' ';
    std::cout << row.kind;
    for (std::size_t pad = row.kind.size(); pad < 24; ++pad) std::cout << ' ';
    std::cout << "-> " << row.output.str() << "\n";
  }
  std::cout << report.table();
  return 0;
}

Dataset load_dir_dataset(const CommonFlags& f, const Palette& palette) {
  LoadStats stats;
  Dataset ds = load_dataset(f.data_images, f.data_labels, palette, kDefaultH,
                            kDefaultW, &stats);
  if (stats.skipped_unmatched > 0)
    std::cerr << "warning: skipped " << stats.skipped_unmatched
              << " unmatched file stem(s)\n";
  return ds;
}

int run_train(const CommonFlags& f) {
  NetworkConfig config = load_config(f.config_path);
  Dataset train_set, val_set;
  std::optional<int> ignore;

  if (f.use_synthetic) {
    SynthSpec s = parse_synth_spec(f.synthetic);
    config = with_classes(config, s.classes);
    train_set = synth_dataset(f.seed, s.train, s.h, s.w, s.classes);
    train_set.split = "train";
    val_set = synth_dataset(f.seed + 1, s.val, s.h, s.w, s.classes);
    val_set.split = "val";
  } else {
    if (f.data_images.empty() || f.data_labels.empty() ||
        f.palette_path.empty())
      throw ArgumentError(
          "train needs --synthetic or --data-images/--data-labels/--palette");
    Palette palette = load_palette(f.palette_path);
    if (palette.num_classes() != config.num_classes)
      throw DataError("palette has " + std::to_string(palette.num_classes()) +
                      " classes but the config expects " +
                      std::to_string(config.num_classes));
    ignore = palette.ignore_label;
    train_set = load_dir_dataset(f, palette);
    train_set.split = "train";
  }
  if (train_set.empty()) throw DataError("train: no training samples");

  NetworkGraph<float> graph = assemble_network<float>(config, f.seed);
  TrainOptions opts;
  opts.epochs = f.epochs;
  opts.lr = f.lr;
  opts.momentum = f.momentum;
  opts.batch = f.batch;
  opts.seed = f.seed;
  opts.flip_augment = f.flip_augment;
  opts.ignore_label = ignore;

  TrainResult result =
      train(graph, train_set, val_set.empty() ? nullptr : &val_set, opts,
            [&](const EpochStats& e) {
              if (f.as_json) return;
              std::cout << "epoch " << e.epoch << ": loss " << e.mean_loss;
              if (e.val_pixel_accuracy)
                std::cout << "  val_acc " << *e.val_pixel_accuracy;
              std::cout << "\n" << std::flush;
            });
  if (result.diverged) {
    std::cerr << "error: training diverged (non-finite loss)\n";
    return 1;
  }

  const std::string out = f.out.empty() ? "edgeseg.ckpt" : f.out;
  save_checkpoint(graph, out);

  if (f.as_json) {
    json j;
    j["checkpoint"] = out;
    j["epochs"] = json::array();
    for (const EpochStats& e : result.epochs) {
      json je{{"epoch", e.epoch}, {"loss", e.mean_loss}};
      if (e.val_pixel_accuracy) je["val_accuracy"] = *e.val_pixel_accuracy;
      j["epochs"].push_back(je);
    }
    if (!result.epochs.empty() && result.epochs.back().val_pixel_accuracy)
      j["final_val_accuracy"] = *result.epochs.back().val_pixel_accuracy;
    std::cout << j.dump() << "\n";
  } else {
    std::cout << "saved checkpoint to " << out << "\n";
  }
  return 0;
}

int run_infer(const CommonFlags& f) {
  NetworkGraph<float> graph = load_checkpoint(f.ckpt_path);
  Palette palette = load_palette(f.palette_path);
  const int rf = graph.config().reduction_factor;

  RgbImage img = read_image(f.input);
  auto round_to = [&](int v) {
    int r = (v + rf / 2) / rf * rf;
    return std::max(rf, r);
  };
  const int th = round_to(img.h), tw = round_to(img.w);
  Tensor<float> x = resize_bilinear(image_to_tensor(img), th, tw);

  const auto t0 = std::chrono::steady_clock::now();
  Tensor<float> logits = graph.forward(x, Mode::Inference);
  const double ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
  LabelMap labels = argmax_channel(logits);

  const std::string out =
      f.out.empty() ? fs::path(f.input).stem().string() + "_labels.png"
                    : f.out;
  write_label_png(labels, palette, out);

  if (f.as_json) {
    json j{{"output", out},
           {"latency_ms", ms},
           {"input_resized", {1, 3, th, tw}}};
    std::cout << j.dump() << "\n";
  } else {
    std::cout << "wrote " << out << " (forward latency " << ms << " ms at "
              << th << "x" << tw << ")\n";
  }
  return 0;
}

int run_bench(const CommonFlags& f) {
  NetworkGraph<float> graph =
      !f.ckpt_path.empty()
          ? load_checkpoint(f.ckpt_path)
          : assemble_network<float>(load_config(f.config_path));
  const int iters = f.iters > 0 ? f.iters : 50;
  const Shape4 in{1, graph.config().input_channels, kDefaultH, kDefaultW};
  Tensor<float> x = seeded_input(in, f.seed);

  for (int i = 0; i < f.warmup; ++i) graph.forward(x, Mode::Inference);

  std::vector<double> fps(static_cast<std::size_t>(iters));
  for (int i = 0; i < iters; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Tensor<float> y = graph.forward(x, Mode::Inference);
    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
    fps[static_cast<std::size_t>(i)] = 1000.0 / ms;
  }
  double mean = 0;
  for (double v : fps) mean += v;
  mean /= static_cast<double>(fps.size());
  std::vector<double> sorted = fps;
  std::sort(sorted.begin(), sorted.end());
  const double median =
      sorted.size() % 2
          ? sorted[sorted.size() / 2]
          : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
  double var = 0;
  for (double v : fps) var += (v - mean) * (v - mean);
  var /= static_cast<double>(fps.size());

  std::cout << "bench: mean_fps=" << mean << " median_fps=" << median
            << " std_fps=" << std::sqrt(var) << " iters=" << iters
            << " warmup=" << f.warmup << " input=" << in.str() << "\n";
  json j{{"mean_fps", mean},
         {"median_fps", median},
         {"std_fps", std::sqrt(var)},
         {"iters", iters},
         {"warmup", f.warmup},
         {"input", {in.n, in.c, in.h, in.w}}};
  std::cout << j.dump() << "\n";
  return 0;
}

int run_search(const CommonFlags& f) {
  NetworkConfig config = load_config(f.config_path);
  SynthSpec s = parse_synth_spec(f.synthetic);
  config = with_classes(config, s.classes);

  Dataset train_set = synth_dataset(f.seed, s.train, s.h, s.w, s.classes);
  Dataset val_set = synth_dataset(f.seed + 1, s.val, s.h, s.w, s.classes);

  Requirements req;
  req.acc_min = f.acc_min;
  EvalOptions eopts;
  eopts.budget_epochs = f.budget;
  eopts.lr = f.lr;
  eopts.momentum = f.momentum;
  eopts.batch = f.batch;
  eopts.seed = f.seed;

  const std::string out = f.out.empty() ? "search-out" : f.out;
  const int iterations = f.iters > 0 ? f.iters : 15;
  SearchState st =
      search(config, req, train_set, val_set, iterations, f.seed, eopts, out);

  if (f.as_json) {
    json j;
    j["seed"] = st.seed;
    j["iterations"] = st.iterations;
    j["infeasible_start"] = st.infeasible_start;
    j["accepted"] = json::array();
    for (const auto& [digest, perf] : st.accepted)
      j["accepted"].push_back({{"digest", digest},
                               {"a", perf.a},
                               {"p", perf.p},
                               {"f", perf.f},
                               {"u", perf.u}});
    j["trace_file"] = (fs::path(out) / "trace.jsonl").string();
    std::cout << j.dump() << "\n";
    return 0;
  }
  for (const TraceEntry& e : st.log) {
    std::cout << "k=" << e.k << (e.accepted ? " ACCEPT " : " reject ")
              << "a=" << e.perf.a << " p=" << e.perf.p << " f=" << e.perf.f
              << " u=" << e.perf.u << "  (" << e.mutation << ")\n";
  }
  std::cout << "accepted " << st.accepted.size() << " design(s); trace in "
            << out << "/trace.jsonl\n";
  return 0;
}

int run_gradcheck(const CommonFlags& f) {
  NetworkConfig config = load_config(f.config_path);
  auto graph = assemble_network<double>(config, f.seed);

  const Shape4 in{1, config.input_channels, 32, 32};
  Tensor<double> x(in);
  Rng rng(f.seed + 17);
  for (std::int64_t i = 0; i < x.numel(); ++i) x[i] = rng.uniform(-1.0, 1.0);
  LabelMap labels(1, 32, 32);
  for (auto& v : labels.values())
    v = static_cast<std::int32_t>(
        rng.uniform_int(static_cast<std::uint64_t>(config.num_classes)));

  FdReport report = finite_diff_check(graph, x, labels, f.tol);

  if (f.as_json) {
    json j;
    j["tolerance"] = report.tolerance;
    j["all_pass"] = report.all_pass;
    j["samples_per_param"] = report.options.samples_per_param;
    j["entries"] = json::array();
    for (const FdEntry& e : report.entries)
      j["entries"].push_back({{"path", e.path},
                              {"max_rel_err", e.max_rel_err},
                              {"pass", e.pass}});
    std::cout << j.dump() << "\n";
  } else {
    for (const FdEntry& e : report.entries) {
      std::cout << (e.pass ? "  ok   " : "  FAIL ") << e.path
                << "  max_rel_err=" << e.max_rel_err << "\n";
    }
    std::cout << (report.all_pass ? "gradcheck passed" : "gradcheck FAILED")
              << " (tolerance " << report.tolerance << ", "
              << report.entries.size() << " parameters)\n";
  }
  return report.all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"edgeseg: compact semantic-segmentation networks"};
  app.require_subcommand(1);

  CommonFlags f;

  auto add_config = [&](CLI::App* cmd, bool required) {
    auto* opt =
        cmd->add_option("--config", f.config_path, "network config JSON file");
    if (required) opt->required();
    return opt;
  };
  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option("--seed", f.seed, "deterministic seed");
  };
  auto add_json = [&](CLI::App* cmd) {
    cmd->add_flag("--json", f.as_json, "emit machine-readable JSON");
  };
  auto add_synth = [&](CLI::App* cmd) {
    cmd->add_option("--synthetic", f.synthetic,
                    "synthetic dataset spec train,val,h,w,classes")
        ->expected(0, 1);
  };

  CLI::App* summarize =
      app.add_subcommand("summarize", "shapes, parameters, MACs, model size");
  add_config(summarize, true);
  add_json(summarize);

  CLI::App* train_cmd = app.add_subcommand("train", "train a network");
  add_config(train_cmd, true);
  add_synth(train_cmd);
  train_cmd->add_option("--data-images", f.data_images, "image directory");
  train_cmd->add_option("--data-labels", f.data_labels, "label directory");
  train_cmd->add_option("--palette", f.palette_path, "palette JSON file");
  train_cmd->add_option("--epochs", f.epochs, "training epochs");
  train_cmd->add_option("--lr", f.lr, "learning rate");
  train_cmd->add_option("--momentum", f.momentum, "SGD momentum");
  train_cmd->add_option("--batch", f.batch, "mini-batch size");
  train_cmd->add_option("--out", f.out, "checkpoint output path");
  train_cmd->add_flag("--flip-augment", f.flip_augment,
                      "random horizontal flip augmentation");
  add_seed(train_cmd);
  add_json(train_cmd);

  CLI::App* infer =
      app.add_subcommand("infer", "segment one image with a checkpoint");
  infer->add_option("--ckpt", f.ckpt_path, "checkpoint file")->required();
  infer->add_option("--input", f.input, "input image (PNG or PPM)")->required();
  infer->add_option("--palette", f.palette_path, "palette JSON file")
      ->required();
  infer->add_option("--out", f.out, "output label PNG path");
  add_json(infer);

  CLI::App* bench =
      app.add_subcommand("bench", "timed forward passes, single-image batch");
  add_config(bench, false);
  bench->add_option("--ckpt", f.ckpt_path, "checkpoint file");
  bench->add_option("--iters", f.iters, "timed iterations");
  bench->add_option("--warmup", f.warmup, "discarded warmup passes");
  add_seed(bench);
  add_json(bench);

  CLI::App* search_cmd =
      app.add_subcommand("search", "iterative constrained design exploration");
  add_config(search_cmd, true);
  add_synth(search_cmd);
  search_cmd->add_option("--iters", f.iters, "search iterations");
  search_cmd->add_option("--budget", f.budget,
                         "training epochs per candidate evaluation");
  search_cmd->add_option("--acc-min", f.acc_min,
                         "indicator accuracy threshold, percent");
  search_cmd->add_option("--lr", f.lr, "candidate training learning rate");
  search_cmd->add_option("--momentum", f.momentum, "candidate SGD momentum");
  search_cmd->add_option("--batch", f.batch, "candidate mini-batch size");
  search_cmd->add_option("--out", f.out, "trace output directory");
  add_seed(search_cmd);
  add_json(search_cmd);

  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference verification of the gradients");
  add_config(gradcheck, true);
  gradcheck->add_option("--tol", f.tol, "relative-error tolerance");
  add_seed(gradcheck);
  add_json(gradcheck);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (summarize->parsed()) return run_summarize(f);
    if (train_cmd->parsed()) {
      f.use_synthetic = train_cmd->count("--synthetic") > 0;
      return run_train(f);
    }
    if (infer->parsed()) return run_infer(f);
    if (bench->parsed()) {
      if (f.config_path.empty() && f.ckpt_path.empty())
        throw ArgumentError("bench needs --config or --ckpt");
      return run_bench(f);
    }
    if (search_cmd->parsed()) return run_search(f);
    if (gradcheck->parsed()) return run_gradcheck(f);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
