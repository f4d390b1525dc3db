#include "edgeseg/dataio.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "edgeseg/error.hpp"
#include "edgeseg/rng.hpp"

namespace edgeseg {

namespace fs = std::filesystem;
using nlohmann::json;

int Palette::index_of(std::uint8_t r, std::uint8_t g, std::uint8_t b) const {
  for (const Entry& e : classes) {
    if (e.color[0] == r && e.color[1] == g && e.color[2] == b) return e.index;
  }
  return -1;
}

void Palette::validate() const {
  if (classes.empty()) throw DataError("palette: no classes");
  std::set<int> indices;
  std::set<std::array<std::uint8_t, 3>> colors;
  for (const Entry& e : classes) {
    if (!indices.insert(e.index).second)
      throw DataError("palette: duplicate class index " +
                      std::to_string(e.index));
    if (!colors.insert(e.color).second)
      throw DataError("palette: duplicate color for class \"" + e.name + "\"");
  }
  for (int k = 0; k < num_classes(); ++k) {
    if (!indices.count(k))
      throw DataError("palette: class indices must be dense 0.." +
                      std::to_string(num_classes() - 1) + ", missing " +
                      std::to_string(k));
  }
  if (ignore_label && (*ignore_label < 0 || *ignore_label >= num_classes()))
    throw DataError("palette: ignore_label out of range");
}

Palette palette_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("palette is not valid JSON: ") + e.what());
  }
  Palette p;
  if (!j.contains("classes") || !j["classes"].is_array())
    throw DataError("palette: missing array field \"classes\"");
  for (const json& je : j["classes"]) {
    Palette::Entry e;
    e.index = je.at("index").get<int>();
    e.name = je.at("name").get<std::string>();
    auto color = je.at("color");
    if (!color.is_array() || color.size() != 3)
      throw DataError("palette: color must be an [r,g,b] triple");
    for (int k = 0; k < 3; ++k) {
      int v = color[k].get<int>();
      if (v < 0 || v > 255) throw DataError("palette: color values are 0..255");
      e.color[static_cast<std::size_t>(k)] = static_cast<std::uint8_t>(v);
    }
    p.classes.push_back(e);
  }
  std::sort(p.classes.begin(), p.classes.end(),
            [](const auto& a, const auto& b) { return a.index < b.index; });
  if (j.contains("ignore_label") && !j["ignore_label"].is_null())
    p.ignore_label = j["ignore_label"].get<int>();
  p.validate();
  return p;
}

Palette load_palette(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open palette file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return palette_from_json(buf.str());
}

void save_palette(const Palette& palette, const std::string& path) {
  json j;
  j["classes"] = json::array();
  for (const Palette::Entry& e : palette.classes) {
    json je;
    je["index"] = e.index;
    je["name"] = e.name;
    je["color"] = {e.color[0], e.color[1], e.color[2]};
    j["classes"].push_back(je);
  }
  if (palette.ignore_label) j["ignore_label"] = *palette.ignore_label;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write palette file: " + path);
  out << j.dump(2) << "\n";
}

LabelMap image_to_labels(const RgbImage& img, const Palette& palette,
                         const std::string& origin) {
  LabelMap labels(1, img.h, img.w);
  std::map<std::array<std::uint8_t, 3>, std::int64_t> unknown;
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      const std::uint8_t* px = img.pixel(y, x);
      int idx = palette.index_of(px[0], px[1], px[2]);
      if (idx < 0) {
        ++unknown[{px[0], px[1], px[2]}];
        continue;
      }
      labels.at(0, y, x) = idx;
    }
  }
  if (!unknown.empty()) {
    std::ostringstream os;
    os << "label image " << origin << " contains colors absent from the palette:";
    for (const auto& [color, count] : unknown) {
      os << " (" << int(color[0]) << "," << int(color[1]) << ","
         << int(color[2]) << ") x" << count;
    }
    throw DataError(os.str());
  }
  return labels;
}

namespace {

std::map<std::string, fs::path> stems_in(const std::string& dir) {
  std::map<std::string, fs::path> out;
  if (!fs::exists(dir)) throw IoError("directory does not exist: " + dir);
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext != ".png" && ext != ".ppm") continue;
    out[entry.path().stem().string()] = entry.path();
  }
  return out;
}

}  // namespace

Dataset load_dataset(const std::string& image_dir, const std::string& label_dir,
                     const Palette& palette, int target_h, int target_w,
                     LoadStats* stats) {
  palette.validate();
  auto images = stems_in(image_dir);
  auto labels = stems_in(label_dir);

  LoadStats local;
  Dataset ds;
  for (const auto& [stem, img_path] : images) {
    auto it = labels.find(stem);
    if (it == labels.end()) {
      ++local.skipped_unmatched;
      continue;
    }
    RgbImage img = read_image(img_path.string());
    RgbImage lbl_img = read_image(it->second.string());
    LabelMap lbl = image_to_labels(lbl_img, palette, it->second.string());

    Sample s;
    s.stem = stem;
    s.image = resize_bilinear(image_to_tensor(img), target_h, target_w);
    s.label = resize_nearest(lbl, target_h, target_w);
    ds.samples.push_back(std::move(s));
    ++local.loaded;
  }
  for (const auto& [stem, path] : labels)
    if (!images.count(stem)) ++local.skipped_unmatched;
  if (stats) *stats = local;
  return ds;  // map iteration is lexicographic by stem
}

namespace {

// Characteristic color per synthetic class, spread around the hue wheel so
// classes stay separable under noise. Class 0 (background) is dark gray.
std::array<float, 3> synth_class_color(int k, int num_classes) {
  if (k == 0) return {0.15f, 0.15f, 0.15f};
  const double t = static_cast<double>(k - 1) /
                   std::max(1, num_classes - 1);  // in [0, 1)
  const double hue = 6.0 * t;
  const int sector = static_cast<int>(hue) % 6;
  const float f = static_cast<float>(hue - static_cast<int>(hue));
  const float v = 0.85f, p = 0.2f;
  const float q = v - (v - p) * f;
  const float r = p + (v - p) * f;
  switch (sector) {
    case 0: return {v, r, p};
    case 1: return {q, v, p};
    case 2: return {p, v, r};
    case 3: return {p, q, v};
    case 4: return {r, p, v};
    default: return {v, p, q};
  }
}

}  // namespace

Dataset synth_dataset(std::uint64_t seed, int count, int h, int w,
                      int num_classes, float noise_sigma) {
  if (num_classes < 2)
    throw ArgumentError("synth_dataset: num_classes must be >= 2");
  if (h < 16 || w < 16 || h % 16 != 0 || w % 16 != 0)
    throw ArgumentError(
        "synth_dataset: extents must be positive multiples of 16");
  if (count < 0) throw ArgumentError("synth_dataset: count must be >= 0");

  Dataset ds;
  const Rng root(seed);
  for (int idx = 0; idx < count; ++idx) {
    Rng rng = root.derive(static_cast<std::uint64_t>(idx));

    LabelMap label(1, h, w);
    Tensor<float> image(Shape4{1, 3, h, w});
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;

    auto paint = [&](int y0, int y1, int x0, int x1, int cls) {
      const auto color = synth_class_color(cls, num_classes);
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          label.at(0, y, x) = cls;
          const std::int64_t i = static_cast<std::int64_t>(y) * w + x;
          image[i] = color[0];
          image[plane + i] = color[1];
          image[2 * plane + i] = color[2];
        }
      }
    };
    paint(0, h, 0, w, 0);

    // One rectangle per non-background class, sized at least a quarter of
    // each extent so every class stays visible at coarse resolutions.
    for (int cls = 1; cls < num_classes; ++cls) {
      const int rh = h / 4 + static_cast<int>(rng.uniform_int(
                                 static_cast<std::uint64_t>(h / 4)));
      const int rw = w / 4 + static_cast<int>(rng.uniform_int(
                                 static_cast<std::uint64_t>(w / 4)));
      const int y0 =
          static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(h - rh)));
      const int x0 =
          static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(w - rw)));
      paint(y0, y0 + rh, x0, x0 + rw, cls);
    }

    if (noise_sigma > 0.0f) {
      for (std::int64_t i = 0; i < image.numel(); ++i) {
        float v = image[i] + noise_sigma * static_cast<float>(rng.normal());
        image[i] = std::clamp(v, 0.0f, 1.0f);
      }
    }

    Sample s;
    s.stem = "synthetic-" + std::to_string(idx);
    s.image = std::move(image);
    s.label = std::move(label);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

void write_label_png(const LabelMap& labels, const Palette& palette,
                     const std::string& path) {
  palette.validate();
  RgbImage img;
  img.w = labels.w();
  img.h = labels.h();
  img.data.resize(static_cast<std::size_t>(3) * img.w * img.h);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      const std::int32_t cls = labels.at(0, y, x);
      if (cls < 0 || cls >= palette.num_classes())
        throw DataError("write_label_png: label " + std::to_string(cls) +
                        " has no palette entry");
      const auto& color = palette.classes[static_cast<std::size_t>(cls)].color;
      std::uint8_t* px = img.pixel(y, x);
      px[0] = color[0];
      px[1] = color[1];
      px[2] = color[2];
    }
  }
  write_png(img, path);
}

}  // namespace edgeseg
