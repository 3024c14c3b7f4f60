/*
 * Copyright 2026 The PPS Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "pps/png.hpp"

#include <csetjmp>
#include <cstring>

#include <png.h>

#include "pps/error.hpp"

namespace pps::png {

namespace {

void append_data(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), length);
}

void no_flush(png_structp) {}

struct ReadCursor {
  std::string_view bytes;
  std::size_t at = 0;
};

void read_data(png_structp png, png_bytep data, png_size_t length) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->at + length > cur->bytes.size()) png_error(png, "truncated PNG");
  std::memcpy(data, cur->bytes.data() + cur->at, length);
  cur->at += length;
}

void ignore_warning(png_structp, png_const_charp) {}

// libpng reports errors by longjmp; these helpers keep every C++ object with a
// destructor outside the frame that calls setjmp.
bool write_rows(png_structp png, png_infop info, const Image& image) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(image.rgb.data() +
                                             static_cast<std::size_t>(y) * image.width * 3));
  }
  png_write_end(png, nullptr);
  return true;
}

bool read_header(png_structp png, png_infop info, int* width, int* height) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  *width = static_cast<int>(png_get_image_width(png, info));
  *height = static_cast<int>(png_get_image_height(png, info));
  return true;
}

bool read_rows(png_structp png, std::uint8_t* rgb, int width, int height) {
  if (setjmp(png_jmpbuf(png))) return false;
  for (int y = 0; y < height; ++y) {
    png_read_row(png, rgb + static_cast<std::size_t>(y) * width * 3, nullptr);
  }
  return true;
}

}  // namespace

std::string encode(const Image& image) {
  if (image.width <= 0 || image.height <= 0 ||
      image.rgb.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
    throw Error("PngError", "image buffer does not match its dimensions");
  }
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, ignore_warning);
  png_infop info = png_create_info_struct(png);
  std::string out;
  png_set_write_fn(png, &out, append_data, no_flush);
  const bool ok = write_rows(png, info, image);
  png_destroy_write_struct(&png, &info);
  if (!ok) throw Error("PngError", "PNG encoding failed");
  return out;
}

Image decode(std::string_view bytes) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0) {
    throw Error("PngError", "not a PNG stream");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, ignore_warning);
  png_infop info = png_create_info_struct(png);
  ReadCursor cursor{bytes, 0};
  png_set_read_fn(png, &cursor, read_data);
  Image image;
  bool ok = read_header(png, info, &image.width, &image.height);
  if (ok) {
    image.rgb.resize(static_cast<std::size_t>(image.width) * image.height * 3);
    ok = read_rows(png, image.rgb.data(), image.width, image.height);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (!ok) throw Error("PngError", "PNG decoding failed");
  return image;
}

}  // namespace pps::png
