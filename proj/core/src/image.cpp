#include "t4d/image.hpp"

#include <png.h>

#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "t4d/error.hpp"

static_assert(std::endian::native == std::endian::little, "little-endian host required");

namespace t4d {

namespace {

std::uint8_t quantize(double v) {
  v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

void png_error_fn(png_structp png, png_const_charp msg) {
  throw Error("image.png", msg);
}

void png_warning_fn(png_structp, png_const_charp) {}

struct PngWriteBuffer {
  std::vector<std::uint8_t> bytes;
};

void png_write_cb(png_structp png, png_bytep data, png_size_t length) {
  auto* buf = static_cast<PngWriteBuffer*>(png_get_io_ptr(png));
  buf->bytes.insert(buf->bytes.end(), data, data + length);
}

void png_flush_cb(png_structp) {}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image& img) {
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
  if (!png) throw Error("image.png", "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("image.png", "png_create_info_struct failed");
  }

  PngWriteBuffer buf;
  std::vector<std::uint8_t> row(static_cast<std::size_t>(3) * img.width);
  try {
    png_set_write_fn(png, &buf, png_write_cb, png_flush_cb);
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        const double* p = img.at(x, y);
        row[3 * x + 0] = quantize(p[0]);
        row[3 * x + 1] = quantize(p[1]);
        row[3 * x + 2] = quantize(p[2]);
      }
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return std::move(buf.bytes);
}

void save_png(const Image& img, const std::string& path) {
  const auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("image.io", "cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("image.io", "write failed for '" + path + "'");
}

namespace {

struct PngReadBuffer {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos;
};

void png_read_cb(png_structp png, png_bytep out, png_size_t length) {
  auto* buf = static_cast<PngReadBuffer*>(png_get_io_ptr(png));
  if (buf->pos + length > buf->size) png_error(png, "truncated PNG stream");
  std::memcpy(out, buf->data + buf->pos, length);
  buf->pos += length;
}

}  // namespace

Image load_png(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("image.io", "cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
  if (!png) throw Error("image.png", "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error("image.png", "png_create_info_struct failed");
  }

  Image img;
  try {
    PngReadBuffer buf{bytes.data(), bytes.size(), 0};
    png_set_read_fn(png, &buf, png_read_cb);
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    img = Image(w, h);
    std::vector<std::uint8_t> row(png_get_rowbytes(png, info));
    for (int y = 0; y < h; ++y) {
      png_read_row(png, row.data(), nullptr);
      for (int x = 0; x < w; ++x) {
        double* p = img.at(x, y);
        p[0] = row[3 * x + 0] / 255.0;
        p[1] = row[3 * x + 1] / 255.0;
        p[2] = row[3 * x + 2] / 255.0;
      }
    }
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void save_pfm(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("image.io", "cannot open '" + path + "' for writing");
  out << "PF\n" << img.width << " " << img.height << "\n-1.0\n";
  std::vector<float> row(static_cast<std::size_t>(3) * img.width);
  for (int y = img.height - 1; y >= 0; --y) {
    for (int x = 0; x < img.width; ++x) {
      const double* p = img.at(x, y);
      row[3 * x + 0] = static_cast<float>(p[0]);
      row[3 * x + 1] = static_cast<float>(p[1]);
      row[3 * x + 2] = static_cast<float>(p[2]);
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw Error("image.io", "write failed for '" + path + "'");
}

Image load_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("image.io", "cannot open '" + path + "'");
  std::string magic;
  in >> magic;
  if (magic != "PF") throw Error("image.pfm", "expected color PFM magic 'PF'");
  int w = 0, h = 0;
  double scale = 0.0;
  in >> w >> h >> scale;
  in.get();  // newline after scale
  if (w <= 0 || h <= 0) throw Error("image.pfm", "bad dimensions");
  if (scale >= 0) throw Error("image.pfm", "big-endian PFM is not supported");
  Image img(w, h);
  std::vector<float> row(static_cast<std::size_t>(3) * w);
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) throw Error("image.pfm", "truncated pixel data");
    for (int x = 0; x < w; ++x) {
      double* p = img.at(x, y);
      p[0] = row[3 * x + 0];
      p[1] = row[3 * x + 1];
      p[2] = row[3 * x + 2];
    }
  }
  return img;
}

Image load_image(const std::string& path) {
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".pfm") == 0) return load_pfm(path);
  return load_png(path);
}

double psnr(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height)
    throw Error("image.mismatch", "image dimensions differ");
  double se = 0.0;
  for (std::size_t i = 0; i < a.px.size(); ++i) {
    const double d = a.px[i] - b.px[i];
    se += d * d;
  }
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = se / static_cast<double>(a.px.size());
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace t4d
