#include "edgeseg/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include "edgeseg/error.hpp"

namespace edgeseg {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

RgbImage read_png_file(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open image: " + path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng: allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng: allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("not a decodable PNG: " + path);
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);

  // Normalize everything to 8-bit RGB.
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  RgbImage img;
  img.w = static_cast<int>(w);
  img.h = static_cast<int>(h);
  img.data.resize(static_cast<std::size_t>(3) * w * h);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y)
    rows[y] = img.data.data() + static_cast<std::size_t>(3) * w * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

RgbImage read_ppm_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path);
  std::string magic;
  in >> magic;
  if (magic != "P6") throw FormatError("not a binary PPM (P6): " + path);

  auto next_int = [&]() {
    // Skips whitespace and '#' comments.
    for (;;) {
      int ch = in.peek();
      if (ch == '#') {
        std::string line;
        std::getline(in, line);
      } else if (std::isspace(ch)) {
        in.get();
      } else {
        break;
      }
    }
    int v = -1;
    in >> v;
    return v;
  };
  int w = next_int(), h = next_int(), maxval = next_int();
  if (w < 1 || h < 1) throw FormatError("PPM with invalid extents: " + path);
  if (maxval != 255)
    throw FormatError("only maxval-255 PPM images are supported: " + path);
  in.get();  // single whitespace before payload

  RgbImage img;
  img.w = w;
  img.h = h;
  img.data.resize(static_cast<std::size_t>(3) * w * h);
  in.read(reinterpret_cast<char*>(img.data.data()),
          static_cast<std::streamsize>(img.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.data.size()))
    throw FormatError("truncated PPM payload: " + path);
  return img;
}

}  // namespace

RgbImage read_image(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoError("cannot open image: " + path);
  unsigned char sig[8] = {};
  probe.read(reinterpret_cast<char*>(sig), 8);
  probe.close();
  static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G',
                                           '\r', '\n', 0x1a, '\n'};
  if (std::memcmp(sig, png_sig, 8) == 0) return read_png_file(path);
  if (sig[0] == 'P' && sig[1] == '6') return read_ppm_file(path);
  throw FormatError("unsupported image format (expected PNG or P6 PPM): " +
                    path);
}

void write_png(const RgbImage& img, const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot write image: " + path);

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng: allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng: allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng: write failed: " + path);
  }

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.w),
               static_cast<png_uint_32>(img.h), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.h));
  for (int y = 0; y < img.h; ++y)
    rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(
        img.data.data() + static_cast<std::size_t>(3) * img.w * y);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_ppm(const RgbImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write image: " + path);
  out << "P6\n" << img.w << " " << img.h << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
}

Tensor<float> image_to_tensor(const RgbImage& img) {
  Tensor<float> t(Shape4{1, 3, img.h, img.w});
  const std::int64_t plane = static_cast<std::int64_t>(img.h) * img.w;
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      const std::uint8_t* px = img.pixel(y, x);
      const std::int64_t i = static_cast<std::int64_t>(y) * img.w + x;
      t[i] = px[0] / 255.0f;
      t[plane + i] = px[1] / 255.0f;
      t[2 * plane + i] = px[2] / 255.0f;
    }
  }
  return t;
}

RgbImage tensor_to_image(const Tensor<float>& t) {
  const Shape4& s = t.shape();
  if (s.n != 1 || s.c != 3)
    throw ShapeError("tensor_to_image: expected shape (1,3,h,w), got " +
                     s.str());
  RgbImage img;
  img.w = s.w;
  img.h = s.h;
  img.data.resize(static_cast<std::size_t>(3) * s.w * s.h);
  const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
  for (std::int64_t i = 0; i < plane; ++i) {
    for (int ch = 0; ch < 3; ++ch) {
      float v = std::clamp(t[ch * plane + i], 0.0f, 1.0f);
      img.data[3 * i + ch] =
          static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  }
  return img;
}

Tensor<float> resize_bilinear(const Tensor<float>& input, int out_h,
                              int out_w) {
  if (out_h < 1 || out_w < 1)
    throw ArgumentError("resize_bilinear: target extents must be >= 1");
  const Shape4& s = input.shape();
  if (s.h == out_h && s.w == out_w) return input;
  Tensor<float> out(Shape4{s.n, s.c, out_h, out_w});

  const double sy = static_cast<double>(s.h) / out_h;
  const double sx = static_cast<double>(s.w) / out_w;
  const std::int64_t in_plane = static_cast<std::int64_t>(s.h) * s.w;
  const std::int64_t out_plane = static_cast<std::int64_t>(out_h) * out_w;
  const std::int64_t planes = static_cast<std::int64_t>(s.n) * s.c;

  for (std::int64_t pl = 0; pl < planes; ++pl) {
    const float* src = input.data() + pl * in_plane;
    float* dst = out.data() + pl * out_plane;
    for (int oy = 0; oy < out_h; ++oy) {
      double fy = (oy + 0.5) * sy - 0.5;
      fy = std::clamp(fy, 0.0, static_cast<double>(s.h - 1));
      const int y0 = static_cast<int>(fy);
      const int y1 = std::min(y0 + 1, s.h - 1);
      const double wy = fy - y0;
      for (int ox = 0; ox < out_w; ++ox) {
        double fx = (ox + 0.5) * sx - 0.5;
        fx = std::clamp(fx, 0.0, static_cast<double>(s.w - 1));
        const int x0 = static_cast<int>(fx);
        const int x1 = std::min(x0 + 1, s.w - 1);
        const double wx = fx - x0;
        const double v =
            (1 - wy) * ((1 - wx) * src[y0 * s.w + x0] +
                        wx * src[y0 * s.w + x1]) +
            wy * ((1 - wx) * src[y1 * s.w + x0] + wx * src[y1 * s.w + x1]);
        dst[static_cast<std::int64_t>(oy) * out_w + ox] =
            static_cast<float>(v);
      }
    }
  }
  return out;
}

LabelMap resize_nearest(const LabelMap& labels, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1)
    throw ArgumentError("resize_nearest: target extents must be >= 1");
  if (labels.h() == out_h && labels.w() == out_w) return labels;
  LabelMap out(labels.n(), out_h, out_w);
  const double sy = static_cast<double>(labels.h()) / out_h;
  const double sx = static_cast<double>(labels.w()) / out_w;
  for (int n = 0; n < labels.n(); ++n) {
    for (int oy = 0; oy < out_h; ++oy) {
      int iy = std::min(static_cast<int>((oy + 0.5) * sy), labels.h() - 1);
      for (int ox = 0; ox < out_w; ++ox) {
        int ix = std::min(static_cast<int>((ox + 0.5) * sx), labels.w() - 1);
        out.at(n, oy, ox) = labels.at(n, iy, ix);
      }
    }
  }
  return out;
}

}  // namespace edgeseg
