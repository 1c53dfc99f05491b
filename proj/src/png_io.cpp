#include "anosups/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include "anosups/error.hpp"

namespace anosups {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_handler(png_structp, png_const_charp message) {
  throw Error(ErrorCode::kFormat, std::string("libpng: ") + message);
}

void png_warning_handler(png_structp, png_const_charp) {}

struct RawPng {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

RawPng read_raw(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw Error(ErrorCode::kIo, "cannot open " + path.string());

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler, png_warning_handler);
  png_infop info = png_create_info_struct(png);
  RawPng raw;
  try {
    png_init_io(png, file.get());
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    const auto depth = png_get_bit_depth(png, info);
    if (depth == 16) throw Error(ErrorCode::kFormat, path.string() + ": 16-bit PNG not supported");
    if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) {
      throw Error(ErrorCode::kFormat, path.string() + ": alpha channel not supported");
    }
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);

    raw.width = static_cast<int>(png_get_image_width(png, info));
    raw.height = static_cast<int>(png_get_image_height(png, info));
    raw.channels = png_get_channels(png, info);
    raw.pixels.resize(static_cast<std::size_t>(raw.width) * raw.height * raw.channels);
    std::vector<png_bytep> rows(static_cast<std::size_t>(raw.height));
    for (int y = 0; y < raw.height; ++y) {
      rows[static_cast<std::size_t>(y)] =
          raw.pixels.data() + static_cast<std::size_t>(y) * raw.width * raw.channels;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return raw;
}

void write_raw(const std::filesystem::path& path, const RawPng& raw) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw Error(ErrorCode::kIo, "cannot create " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler,
                                            png_warning_handler);
  png_infop info = png_create_info_struct(png);
  try {
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(raw.width),
                 static_cast<png_uint_32>(raw.height), 8,
                 raw.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < raw.height; ++y) {
      png_write_row(png, raw.pixels.data() + static_cast<std::size_t>(y) * raw.width * raw.channels);
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
}

}  // namespace

ImageTensor read_png(const std::filesystem::path& path) {
  RawPng raw = read_raw(path);
  if (raw.channels != 1 && raw.channels != 3) {
    throw Error(ErrorCode::kFormat, path.string() + ": unsupported channel count");
  }
  std::vector<double> data(raw.pixels.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = raw.pixels[i] / 255.0;
  return ImageTensor(raw.height, raw.width, raw.channels, std::move(data));
}

void write_png(const std::filesystem::path& path, const ImageTensor& image) {
  RawPng raw{image.width(), image.height(), image.channels(), {}};
  raw.pixels.reserve(image.size());
  for (double v : image.data()) raw.pixels.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
  write_raw(path, raw);
}

void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask) {
  RawPng raw{mask.width, mask.height, 1, {}};
  raw.pixels.reserve(mask.data.size());
  for (auto v : mask.data) raw.pixels.push_back(v ? 255 : 0);
  write_raw(path, raw);
}

BinaryMask read_mask_png(const std::filesystem::path& path) {
  RawPng raw = read_raw(path);
  if (raw.channels != 1) throw Error(ErrorCode::kFormat, path.string() + ": mask must be grayscale");
  BinaryMask mask(raw.height, raw.width);
  for (std::size_t i = 0; i < raw.pixels.size(); ++i) mask.data[i] = raw.pixels[i] != 0;
  return mask;
}

}  // namespace anosups
