#include "deblur_forge/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>
#include <vector>

namespace dforge {
namespace {

std::string lower_ext(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open image file: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

// ---- PNG ----------------------------------------------------------------

struct PngReadState {
  const std::vector<unsigned char>* bytes;
  std::size_t pos;
};

void png_read_from_memory(png_structp png, png_bytep out, png_size_t len) {
  auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (st->pos + len > st->bytes->size()) png_error(png, "unexpected end of PNG data");
  std::copy_n(st->bytes->data() + st->pos, len, out);
  st->pos += len;
}

void png_error_to_jmp(png_structp png, png_const_charp msg) {
  auto* buf = static_cast<std::string*>(png_get_error_ptr(png));
  if (buf != nullptr) *buf = msg;
  png_longjmp(png, 1);
}

void png_warning_ignore(png_structp, png_const_charp) {}

Image decode_png(const std::vector<unsigned char>& bytes, const std::string& name) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw ImageIoError("not a PNG file: " + name);
  }
  // Everything that must survive a longjmp is constructed before setjmp.
  std::string err;
  PngReadState state{&bytes, 0};
  std::vector<unsigned char> raw;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int channels = 0;
  int depth = 0;

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_to_jmp, png_warning_ignore);
  if (png == nullptr) throw ImageIoError("libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw ImageIoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError("failed to decode PNG " + name + ": " + err);
  }
  png_set_read_fn(png, &state, png_read_from_memory);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_read_update_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  channels = png_get_channels(png, info);
  depth = png_get_bit_depth(png, info);
  const png_size_t stride = png_get_rowbytes(png, info);
  raw.resize(stride * height);
  rows.resize(height);
  for (png_uint_32 r = 0; r < height; ++r) rows[r] = raw.data() + r * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const double maxval = depth == 16 ? 65535.0 : 255.0;
  const std::size_t bytes_per = depth == 16 ? 2 : 1;
  auto sample = [&](std::size_t r, std::size_t c, int ch) {
    const unsigned char* p = rows[r] + (c * channels + ch) * bytes_per;
    const unsigned v = bytes_per == 2 ? (unsigned(p[0]) << 8) | p[1] : p[0];
    return static_cast<double>(v) / maxval;
  };
  Image img(height, width);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      img(r, c) = channels >= 3 ? luma(sample(r, c, 0), sample(r, c, 1), sample(r, c, 2))
                                : sample(r, c, 0);
    }
  }
  return img;
}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

void encode_png(const std::vector<unsigned char>& raw, std::size_t height, std::size_t width,
                int depth, const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.string().c_str(), "wb"));
  if (!file) throw ImageIoError("cannot open for writing: " + path.string());
  std::string err;
  std::vector<png_bytep> rows(height);
  const std::size_t stride = width * (depth == 16 ? 2 : 1);
  for (std::size_t r = 0; r < height; ++r) {
    rows[r] = const_cast<png_bytep>(raw.data() + r * stride);
  }
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_to_jmp, png_warning_ignore);
  if (png == nullptr) throw ImageIoError("libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    throw ImageIoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError("failed to encode PNG " + path.string() + ": " + err);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), depth,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// ---- PGM ----------------------------------------------------------------

Image decode_pgm(const std::vector<unsigned char>& bytes, const std::string& name) {
  std::size_t pos = 0;
  auto fail = [&](const std::string& why) -> ImageIoError {
    return ImageIoError("failed to decode PGM " + name + ": " + why);
  };
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&]() -> unsigned long {
    skip_space();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw fail("malformed header");
    unsigned long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      if (v > (1ul << 31)) throw fail("header value out of range");
    }
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw fail("not a binary PGM (P5)");
  pos = 2;
  const unsigned long width = read_uint();
  const unsigned long height = read_uint();
  const unsigned long maxval = read_uint();
  if (width == 0 || height == 0) throw fail("zero dimension");
  if (maxval == 0 || maxval > 65535) throw fail("maxval out of range");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw fail("malformed header");
  ++pos;
  const std::size_t bytes_per = maxval < 256 ? 1 : 2;
  const std::size_t need = width * height * bytes_per;
  if (bytes.size() - pos < need) throw fail("truncated pixel data");
  Image img(height, width);
  auto px = img.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    const unsigned char* p = bytes.data() + pos + i * bytes_per;
    const unsigned v = bytes_per == 2 ? (unsigned(p[0]) << 8) | p[1] : p[0];
    if (v > maxval) throw fail("sample exceeds maxval");
    px[i] = static_cast<double>(v) / static_cast<double>(maxval);
  }
  return img;
}

std::vector<unsigned char> quantize(const Image& img, BitDepth depth) {
  const double maxval = depth == BitDepth::k16 ? 65535.0 : 255.0;
  const std::size_t bytes_per = depth == BitDepth::k16 ? 2 : 1;
  std::vector<unsigned char> raw(img.size() * bytes_per);
  auto px = img.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    const double v = std::isfinite(px[i]) ? std::clamp(px[i], 0.0, 1.0) : 0.0;
    const auto code = static_cast<unsigned>(std::lround(v * maxval));
    if (bytes_per == 2) {
      raw[2 * i] = static_cast<unsigned char>(code >> 8);
      raw[2 * i + 1] = static_cast<unsigned char>(code & 0xff);
    } else {
      raw[i] = static_cast<unsigned char>(code);
    }
  }
  return raw;
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) {
    return decode_png(bytes, path.string());
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') {
    return decode_pgm(bytes, path.string());
  }
  throw ImageIoError("unsupported image format (expected PNG or binary PGM): " + path.string());
}

void save_image(const Image& img, const std::filesystem::path& path, BitDepth depth) {
  if (img.empty()) throw ImageIoError("refusing to save an empty image");
  const auto raw = quantize(img, depth);
  const std::string ext = lower_ext(path);
  if (ext == ".png") {
    encode_png(raw, img.height(), img.width(), static_cast<int>(depth), path);
  } else if (ext == ".pgm") {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ImageIoError("cannot open for writing: " + path.string());
    out << "P5\n" << img.width() << ' ' << img.height() << '\n'
        << (depth == BitDepth::k16 ? 65535 : 255) << '\n';
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw ImageIoError("write failed: " + path.string());
  } else {
    throw ImageIoError("unsupported output extension '" + ext + "' (use .png or .pgm)");
  }
}

}  // namespace dforge
