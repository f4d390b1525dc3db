#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <zlib.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "edgeseg/checkpoint.hpp"
#include "edgeseg/dataio.hpp"
#include "edgeseg/error.hpp"
#include "edgeseg/graph.hpp"
#include "edgeseg/image.hpp"
#include "support/reference_ops.hpp"
#include "support/test_configs.hpp"

using namespace edgeseg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("edgeseg-test-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& leaf = "") const {
    return leaf.empty() ? path.string() : (path / leaf).string();
  }
};

Palette two_tone_palette() {
  Palette p;
  p.classes = {{0, "bg", {0, 0, 0}},
               {1, "a", {255, 0, 0}},
               {2, "b", {0, 255, 0}},
               {3, "c", {0, 0, 255}}};
  return p;
}

std::vector<std::uint8_t> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("palette validation") {
  Palette p = two_tone_palette();
  p.validate();

  Palette dup = p;
  dup.classes[2].color = {255, 0, 0};
  CHECK_THROWS_AS(dup.validate(), DataError);

  Palette sparse = p;
  sparse.classes[1].index = 9;
  CHECK_THROWS_AS(sparse.validate(), DataError);
}

TEST_CASE("camvid palette ships 32 dense classes with unique colors") {
  Palette p = load_palette(std::string(TEST_CONFIG_DIR) + "/camvid32.json");
  CHECK(p.num_classes() == 32);
  REQUIRE(p.ignore_label.has_value());
  CHECK(p.classes[static_cast<std::size_t>(*p.ignore_label)].name == "Void");
}

TEST_CASE("label image maps colors to indices by exact lookup") {
  Palette p = two_tone_palette();
  RgbImage img;
  img.w = 2;
  img.h = 2;
  img.data = {0, 0, 0, 0, 0, 255, 255, 0, 0, 0, 255, 0};
  LabelMap m = image_to_labels(img, p, "inline");
  CHECK(m.at(0, 0, 0) == 0);
  CHECK(m.at(0, 0, 1) == 3);
  CHECK(m.at(0, 1, 0) == 1);
  CHECK(m.at(0, 1, 1) == 2);

  img.data[0] = 7;  // a color absent from the palette
  CHECK_THROWS_AS(image_to_labels(img, p, "inline"), DataError);
  try {
    image_to_labels(img, p, "inline");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("inline") != std::string::npos);
    CHECK(msg.find("x1") != std::string::npos);  // offending pixel count
  }
}

TEST_CASE("write_label_png then load maps back to identical indices") {
  TempDir dir("labelpng");
  Palette p = two_tone_palette();
  LabelMap m = refops::random_labels(1, 9, 13, 4, 77);
  const std::string path = dir.str("labels.png");
  write_label_png(m, p, path);
  RgbImage back = read_image(path);
  CHECK(image_to_labels(back, p, path) == m);

  // Degenerate 1x1 map.
  LabelMap one(1, 1, 1);
  one.at(0, 0, 0) = 2;
  write_label_png(one, p, dir.str("one.png"));
  RgbImage b1 = read_image(dir.str("one.png"));
  CHECK(b1.w == 1);
  CHECK(b1.h == 1);
  CHECK(b1.data[1] == 255);

  LabelMap bad(1, 1, 1);
  bad.at(0, 0, 0) = 9;
  CHECK_THROWS_AS(write_label_png(bad, p, dir.str("bad.png")), DataError);
}

TEST_CASE("ppm round trip and format detection") {
  TempDir dir("ppm");
  RgbImage img;
  img.w = 3;
  img.h = 2;
  img.data.resize(18);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = static_cast<std::uint8_t>(13 * i);
  write_ppm(img, dir.str("x.ppm"));
  RgbImage back = read_image(dir.str("x.ppm"));
  CHECK(back.w == 3);
  CHECK(back.h == 2);
  CHECK(back.data == img.data);

  std::ofstream junk(dir.str("junk.png"), std::ios::binary);
  junk << "not an image";
  junk.close();
  CHECK_THROWS_AS(read_image(dir.str("junk.png")), FormatError);
}

TEST_CASE("load_dataset pairs stems, skips unmatched, orders by stem") {
  TempDir images("imgs");
  TempDir labels("lbls");
  Palette p = two_tone_palette();

  auto put_pair = [&](const std::string& stem, int cls) {
    RgbImage img;
    img.w = 32;
    img.h = 32;
    img.data.assign(32 * 32 * 3, 100);
    write_png(img, images.str(stem + ".png"));
    LabelMap m(1, 32, 32);
    for (auto& v : m.values()) v = cls;
    write_label_png(m, p, labels.str(stem + ".png"));
  };
  put_pair("bbb", 1);
  put_pair("aaa", 2);
  // Unmatched on both sides.
  RgbImage extra;
  extra.w = extra.h = 4;
  extra.data.assign(48, 0);
  write_png(extra, images.str("only-image.png"));
  write_png(extra, labels.str("only-label.png"));

  LoadStats stats;
  Dataset ds = load_dataset(images.str(), labels.str(), p, 16, 16, &stats);
  REQUIRE(ds.size() == 2);
  CHECK(stats.loaded == 2);
  CHECK(stats.skipped_unmatched == 2);
  CHECK(ds.samples[0].stem == "aaa");  // lexicographic
  CHECK(ds.samples[1].stem == "bbb");
  CHECK(ds.samples[0].image.shape() == Shape4{1, 3, 16, 16});
  CHECK(ds.samples[0].label.at(0, 3, 3) == 2);
  CHECK(ds.samples[1].label.at(0, 15, 15) == 1);
}

TEST_CASE("load_dataset on empty directories yields an empty dataset") {
  TempDir images("empty-imgs");
  TempDir labels("empty-lbls");
  Dataset ds =
      load_dataset(images.str(), labels.str(), two_tone_palette(), 16, 16);
  CHECK(ds.empty());
}

TEST_CASE("synthetic dataset determinism and construction") {
  Dataset a = synth_dataset(42, 5, 32, 32, 3);
  Dataset b = synth_dataset(42, 5, 32, 32, 3);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.samples[i].image == b.samples[i].image);
    CHECK(a.samples[i].label == b.samples[i].label);
  }

  Dataset c = synth_dataset(43, 5, 32, 32, 3);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!(a.samples[i].image == c.samples[i].image)) differs = true;
  CHECK(differs);
}

TEST_CASE("synthetic dataset covers every class across a batch") {
  Dataset ds = synth_dataset(7, 20, 32, 32, 4);
  std::set<std::int32_t> seen;
  for (const Sample& s : ds.samples)
    for (auto v : s.label.values()) seen.insert(v);
  CHECK(seen.size() == 4);
}

TEST_CASE("synthetic dataset with zero noise is piecewise constant") {
  Dataset ds = synth_dataset(5, 2, 32, 32, 3, 0.0f);
  for (const Sample& s : ds.samples) {
    // Every pixel's color is one of the class colors: count distinct values.
    std::set<float> values;
    for (std::int64_t i = 0; i < s.image.numel(); ++i)
      values.insert(s.image[i]);
    CHECK(values.size() <= 9);  // 3 classes x 3 channel values
  }
}

TEST_CASE("synthetic dataset argument checks") {
  CHECK_THROWS_AS(synth_dataset(1, 2, 30, 32, 3), ArgumentError);
  CHECK_THROWS_AS(synth_dataset(1, 2, 32, 32, 1), ArgumentError);
}

TEST_CASE("checkpoint save-load-save is byte-identical") {
  TempDir dir("ckpt");
  NetworkConfig cfg = testcfg::tiny_config();
  auto graph = assemble_network<float>(cfg);
  const std::string p1 = dir.str("a.ckpt");
  const std::string p2 = dir.str("b.ckpt");
  save_checkpoint(graph, p1);
  NetworkGraph<float> loaded = load_checkpoint(p1);
  save_checkpoint(loaded, p2);
  CHECK(slurp(p1) == slurp(p2));

  // And the loaded graph behaves identically.
  auto x = refops::random_tensor<float>(Shape4{1, 3, 32, 32}, 3);
  CHECK(graph.forward(x, Mode::Inference) ==
        loaded.forward(x, Mode::Inference));
}

TEST_CASE("checkpoint corruption, magic, and version errors") {
  TempDir dir("ckpt-err");
  NetworkConfig cfg = testcfg::tiny_config();
  auto graph = assemble_network<float>(cfg);
  const std::string path = dir.str("x.ckpt");
  save_checkpoint(graph, path);

  auto bytes = slurp(path);

  SUBCASE("flipping one payload byte is detected by the CRC") {
    auto corrupted = bytes;
    corrupted[corrupted.size() / 2] ^= 0x40;
    std::ofstream out(dir.str("bad.ckpt"), std::ios::binary);
    out.write(reinterpret_cast<const char*>(corrupted.data()),
              static_cast<std::streamsize>(corrupted.size()));
    out.close();
    CHECK_THROWS_AS(load_checkpoint(dir.str("bad.ckpt")), CorruptionError);
  }
  SUBCASE("bad magic is a format error") {
    auto wrong = bytes;
    wrong[0] = 'X';
    std::ofstream out(dir.str("magic.ckpt"), std::ios::binary);
    out.write(reinterpret_cast<const char*>(wrong.data()),
              static_cast<std::streamsize>(wrong.size()));
    out.close();
    CHECK_THROWS_AS(load_checkpoint(dir.str("magic.ckpt")), FormatError);
  }
  SUBCASE("unsupported version is a version error") {
    // The CRC covers the version field, so patch both.
    std::vector<std::uint8_t> body(bytes.begin() + 4, bytes.end() - 4);
    body[0] = 9;
    const auto crc =
        crc32(0L, body.data(), static_cast<uInt>(body.size()));
    std::ofstream out(dir.str("ver.ckpt"), std::ios::binary);
    out.write("ESEG", 4);
    out.write(reinterpret_cast<const char*>(body.data()),
              static_cast<std::streamsize>(body.size()));
    for (int i = 0; i < 4; ++i) {
      char b = static_cast<char>((crc >> (8 * i)) & 0xff);
      out.write(&b, 1);
    }
    out.close();
    CHECK_THROWS_AS(load_checkpoint(dir.str("ver.ckpt")), VersionError);
  }
}

TEST_CASE("checkpoint file size tracks predicted bytes within one percent") {
  TempDir dir("ckpt-size");
  NetworkConfig cfg = testcfg::tiny_config();
  auto graph = assemble_network<float>(cfg);
  const std::string path = dir.str("x.ckpt");
  save_checkpoint(graph, path);
  const auto file_size = static_cast<double>(fs::file_size(path));
  const double payload =
      static_cast<double>(graph.parameter_count(true)) * 4.0;
  CHECK(file_size >= payload);
  CHECK(file_size <= payload * 1.01);
}

TEST_CASE("checkpoint round trip across random configs") {
  TempDir dir("ckpt-sweep");
  Rng rng(31337);
  for (int trial = 0; trial < 5; ++trial) {
    NetworkConfig cfg = testcfg::random_config(rng);
    auto graph = assemble_network<float>(cfg);
    const std::string p1 = dir.str("a.ckpt");
    const std::string p2 = dir.str("b.ckpt");
    save_checkpoint(graph, p1);
    auto loaded = load_checkpoint(p1);
    save_checkpoint(loaded, p2);
    CHECK(slurp(p1) == slurp(p2));
  }
}
