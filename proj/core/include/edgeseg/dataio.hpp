#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "edgeseg/image.hpp"
#include "edgeseg/tensor.hpp"

namespace edgeseg {

/// Class inventory: dense indices 0..K-1, each with a name and a unique RGB
/// color. Supplied as data (configs/camvid32.json ships the CamVid inventory).
struct Palette {
  struct Entry {
    int index;
    std::string name;
    std::array<std::uint8_t, 3> color;
  };
  std::vector<Entry> classes;
  std::optional<int> ignore_label;

  int num_classes() const { return static_cast<int>(classes.size()); }
  /// Exact color lookup; -1 when the color is not in the palette.
  int index_of(std::uint8_t r, std::uint8_t g, std::uint8_t b) const;
  void validate() const;
};

Palette palette_from_json(const std::string& text);
Palette load_palette(const std::string& path);
void save_palette(const Palette& palette, const std::string& path);

struct Sample {
  std::string stem;       // shared file stem of the image/label pair
  Tensor<float> image;    // (1, 3, h, w) in [0, 1]
  LabelMap label;         // (1, h, w)
};

struct Dataset {
  std::vector<Sample> samples;
  std::string split;  // "train" or "val"

  bool empty() const { return samples.empty(); }
  std::size_t size() const { return samples.size(); }
};

struct LoadStats {
  int loaded = 0;
  int skipped_unmatched = 0;  // stems present on one side only
};

/// Pairs image and label files by stem (lexicographic order), decodes them
/// (PNG or binary PPM), resizes images bilinearly and labels nearest-neighbor
/// to target_h x target_w, and maps label colors to class indices via exact
/// palette lookup. Indexed label PNGs and RGB label images are both accepted.
Dataset load_dataset(const std::string& image_dir, const std::string& label_dir,
                     const Palette& palette, int target_h, int target_w,
                     LoadStats* stats = nullptr);

/// Deterministic desk-scale dataset: per sample, a class-0 background plus
/// num_classes-1 axis-aligned rectangles of the remaining classes, each class
/// drawn in a characteristic color with seeded Gaussian noise (sigma 0.05,
/// set noise_sigma to 0 for the exactly piecewise-constant variant).
Dataset synth_dataset(std::uint64_t seed, int count, int h, int w,
                      int num_classes, float noise_sigma = 0.05f);

/// Renders a label map (sample 0) as an 8-bit RGB PNG via the palette.
void write_label_png(const LabelMap& labels, const Palette& palette,
                     const std::string& path);

/// Maps an RGB label image to class indices by exact palette lookup. Throws
/// DataError naming the offending color and pixel count on any unknown color.
LabelMap image_to_labels(const RgbImage& img, const Palette& palette,
                         const std::string& origin);

}  // namespace edgeseg
