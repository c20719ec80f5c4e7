#include "photocon/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <vector>

#include "photocon/error.hpp"

namespace photocon {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void on_png_error(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = msg;
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

}  // namespace

ImageTensor load_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw DecodeError("cannot open PNG '" + path.string() + "'");

  unsigned char sig[8] = {};
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw DecodeError("'" + path.string() + "' is not a PNG file");

  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, on_png_error, on_png_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DecodeError("libpng allocation failed for '" + path.string() + "'");
  }

  // Everything touched after setjmp lives in this struct so longjmp leaves it intact.
  struct State {
    std::vector<unsigned char> bytes;
    std::vector<png_bytep> rows;
    int height = 0, width = 0, channels = 0, depth = 0;
    std::string reject;
  } st;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DecodeError("failed to decode PNG '" + path.string() + "': " + err);
  }

  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) {
    png_set_palette_to_rgb(png);
    st.channels = 3;
    st.depth = 8;
  } else if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_RGB) {
    st.channels = color == PNG_COLOR_TYPE_GRAY ? 1 : 3;
    st.depth = depth;
    if (depth != 8 && depth != 16) st.reject = "unsupported bit depth " + std::to_string(depth);
  } else {
    st.reject = "unsupported channel layout (color type " + std::to_string(color) + ")";
  }
  if (!st.reject.empty()) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DecodeError("cannot decode '" + path.string() + "': " + st.reject);
  }
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  if (st.depth == 16) png_set_swap(png);
  png_read_update_info(png, info);

  st.height = static_cast<int>(png_get_image_height(png, info));
  st.width = static_cast<int>(png_get_image_width(png, info));
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  st.bytes.resize(rowbytes * st.height);
  st.rows.resize(st.height);
  for (int y = 0; y < st.height; ++y) st.rows[y] = st.bytes.data() + rowbytes * y;
  png_read_image(png, st.rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  ImageTensor img(st.height, st.width, st.channels);
  auto out = img.data();
  if (st.depth == 8) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = st.bytes[i] / 255.0f;
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) {
      const unsigned v = st.bytes[2 * i] | (static_cast<unsigned>(st.bytes[2 * i + 1]) << 8);
      out[i] = static_cast<float>(v / 65535.0);
    }
  }
  return img;
}

void save_png(const ImageTensor& img, const std::filesystem::path& path) {
  if (img.channels() != 1 && img.channels() != 3)
    throw FormatError("save_png supports 1 or 3 channels, got " + std::to_string(img.channels()));

  std::vector<unsigned char> bytes(img.size());
  const auto src = img.data();
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const float v = std::isfinite(src[i]) ? std::clamp(src[i], 0.0f, 1.0f) : 0.0f;
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }

  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw DataError("cannot open '" + path.string() + "' for writing");

  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, on_png_error, on_png_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng allocation failed for '" + path.string() + "'");
  }
  std::vector<png_bytep> rows(img.height());
  const std::size_t stride = static_cast<std::size_t>(img.width()) * img.channels();
  for (int y = 0; y < img.height(); ++y) rows[y] = bytes.data() + stride * y;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("failed to encode PNG '" + path.string() + "': " + err);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, img.width(), img.height(), 8,
               img.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace photocon
