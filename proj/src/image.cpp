#include "docbin/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

#include "docbin/errors.hpp"

namespace docbin {

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool is_png(const std::vector<unsigned char>& bytes) {
  return bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0;
}

struct PngReadState {
  const std::vector<unsigned char>* bytes;
  std::size_t offset;
};

struct PngErrorState {
  char message[256] = {};
};

void png_read_from_memory(png_structp png, png_bytep out, png_size_t len) {
  auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (st->offset + len > st->bytes->size()) png_error(png, "truncated PNG");
  std::copy_n(st->bytes->data() + st->offset, len, out);
  st->offset += len;
}

void png_record_error(png_structp png, png_const_charp msg) {
  auto* st = static_cast<PngErrorState*>(png_get_error_ptr(png));
  std::snprintf(st->message, sizeof(st->message), "%s", msg);
  png_longjmp(png, 1);
}

void png_warning_ignore(png_structp, png_const_charp) {}

// libpng reports errors by longjmp; these helpers hold no C++ objects with
// destructors between setjmp and the libpng calls.
bool png_read_header(png_structp png, png_infop info) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_read_info(png, info);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  return true;
}

bool png_read_pixels(png_structp png, png_bytepp rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_read_image(png, rows);
  png_read_end(png, nullptr);
  return true;
}

GrayImage decode_png(const std::vector<unsigned char>& bytes,
                     const std::filesystem::path& path) {
  PngErrorState err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err,
                                           png_record_error, png_warning_ignore);
  if (png == nullptr) throw FormatError("PNG: cannot allocate reader");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};

  PngReadState state{&bytes, 0};
  png_set_read_fn(png, &state, png_read_from_memory);
  if (!png_read_header(png, info)) {
    throw FormatError(path.string() + ": " + err.message);
  }
  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (depth != 8 || (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_RGB)) {
    throw FormatError(path.string() + ": unsupported PNG (need 8-bit gray or RGB, got depth " +
                      std::to_string(depth) + ", color type " + std::to_string(color) + ")");
  }
  const std::size_t channels = color == PNG_COLOR_TYPE_RGB ? 3 : 1;
  const std::size_t stride = png_get_rowbytes(png, info);
  std::vector<unsigned char> raw(stride * height);
  std::vector<png_bytep> rows(height);
  for (png_uint_32 r = 0; r < height; ++r) rows[r] = raw.data() + r * stride;
  if (!png_read_pixels(png, rows.data())) {
    throw FormatError(path.string() + ": " + err.message);
  }

  GrayImage img(height, width);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const unsigned char* px = raw.data() + r * stride + c * channels;
      if (channels == 1) {
        img.at(r, c) = px[0] / 255.0;
      } else {
        img.at(r, c) = (0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]) / 255.0;
      }
    }
  }
  return img;
}

// Parses one whitespace-delimited PGM header token, skipping comments.
std::size_t pgm_token(const std::vector<unsigned char>& bytes, std::size_t& pos,
                      const std::filesystem::path& path) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(bytes[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::size_t value = 0;
  std::size_t digits = 0;
  while (pos < bytes.size() && std::isdigit(bytes[pos])) {
    value = value * 10 + (bytes[pos] - '0');
    ++pos;
    ++digits;
  }
  if (digits == 0) throw FormatError(path.string() + ": malformed PGM header");
  return value;
}

GrayImage decode_pgm(const std::vector<unsigned char>& bytes,
                     const std::filesystem::path& path) {
  std::size_t pos = 2;
  const std::size_t width = pgm_token(bytes, pos, path);
  const std::size_t height = pgm_token(bytes, pos, path);
  const std::size_t maxval = pgm_token(bytes, pos, path);
  if (maxval == 0 || maxval > 255) {
    throw FormatError(path.string() + ": unsupported PGM maxval " + std::to_string(maxval));
  }
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    throw FormatError(path.string() + ": truncated PGM header");
  }
  ++pos;
  if (bytes.size() - pos < width * height) {
    throw FormatError(path.string() + ": truncated PGM data");
  }
  GrayImage img(height, width);
  const double scale = static_cast<double>(maxval);
  for (std::size_t i = 0; i < width * height; ++i) img.pixels[i] = bytes[pos + i] / scale;
  return img;
}

unsigned char quantize(double v) {
  const double clamped = std::min(1.0, std::max(0.0, v));
  return static_cast<unsigned char>(std::lround(clamped * 255.0));
}

void write_bytes(const std::vector<unsigned char>& gray, std::size_t height,
                 std::size_t width, const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  for (char& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (ext == ".pgm") {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "P5\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(gray.data()),
              static_cast<std::streamsize>(gray.size()));
    if (!out) throw IoError("write failed for " + path.string());
    return;
  }
  if (ext != ".png") {
    throw FormatError("unsupported output extension '" + ext + "' (use .png or .pgm)");
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, gray.data(), 0, nullptr)) {
    throw IoError("cannot write " + path.string() + ": " + image.message);
  }
}

}  // namespace

GrayImage load_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (is_png(bytes)) return decode_png(bytes, path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return decode_pgm(bytes, path);
  throw FormatError(path.string() + ": unsupported image format");
}

void save_image(const GrayImage& image, const std::filesystem::path& path) {
  std::vector<unsigned char> gray(image.pixels.size());
  for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = quantize(image.pixels[i]);
  write_bytes(gray, image.height, image.width, path);
}

void save_image(const BinaryImage& image, const std::filesystem::path& path) {
  std::vector<unsigned char> gray(image.pixels.size());
  for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = image.pixels[i] ? 255 : 0;
  write_bytes(gray, image.height, image.width, path);
}

BinaryImage threshold_image(const GrayImage& image, double threshold) {
  BinaryImage out(image.height, image.width);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    out.pixels[i] = image.pixels[i] < threshold ? 0 : 1;
  }
  return out;
}

GrayImage to_gray(const BinaryImage& image) {
  GrayImage out(image.height, image.width);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) out.pixels[i] = image.pixels[i];
  return out;
}

}  // namespace docbin
