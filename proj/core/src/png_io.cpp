#include "osmseg/png_io.hpp"

#include <png.h>

#include <cstring>

#include "osmseg/error.hpp"

namespace osmseg {

namespace {

png_uint_32 format_for(int channels) {
  switch (channels) {
    case 1: return PNG_FORMAT_GRAY;
    case 3: return PNG_FORMAT_RGB;
    case 4: return PNG_FORMAT_RGBA;
    default: throw InvalidArgument("unsupported channel count " + std::to_string(channels));
  }
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image8& image) {
  if (image.pixels.size() !=
      static_cast<std::size_t>(image.width) * image.height * image.channels) {
    throw InvalidArgument("image buffer size does not match dimensions");
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = format_for(image.channels);
  if (png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr) == 0) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IoFailure("cannot write " + path.string() + ": " + msg);
  }
}

Image8 read_png(const std::filesystem::path& path, int channels) {
  if (!std::filesystem::exists(path)) throw IoFailure("no such file " + path.string());
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_file(&img, path.c_str()) == 0) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw FormatViolation(path.string() + ": " + msg);
  }
  img.format = format_for(channels);
  Image8 out;
  out.width = static_cast<int>(img.width);
  out.height = static_cast<int>(img.height);
  out.channels = channels;
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr) == 0) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw FormatViolation(path.string() + ": " + msg);
  }
  return out;
}

}  // namespace osmseg
