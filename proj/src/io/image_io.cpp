#include "puca/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>

namespace puca::io {

ImageError::ImageError(const std::string& msg, std::size_t offset)
    : std::runtime_error(msg + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

unsigned quantize(double v, unsigned maxval) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<unsigned>(std::floor(c * maxval + 0.5));
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// PNM

namespace {

class PnmReader {
 public:
  explicit PnmReader(const std::vector<unsigned char>& b) : b_(b) {}

  std::size_t pos() const { return pos_; }
  // Offset of the most recent number token.
  std::size_t last_start() const { return last_start_; }

  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  unsigned number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    last_start_ = start;
    unsigned long v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + static_cast<unsigned>(b_[pos_] - '0');
      if (v > 0xffffffUL) throw ImageError(std::string("PNM ") + what + " too large", start);
      ++pos_;
    }
    if (pos_ == start) throw ImageError(std::string("PNM: expected ") + what, start);
    return static_cast<unsigned>(v);
  }

  unsigned byte() {
    if (pos_ >= b_.size()) throw ImageError("PNM: truncated raster", pos_);
    return b_[pos_++];
  }

  void single_whitespace() {
    if (pos_ >= b_.size() || !std::isspace(b_[pos_])) throw ImageError("PNM: expected whitespace after header", pos_);
    ++pos_;
  }

 private:
  const std::vector<unsigned char>& b_;
  std::size_t pos_ = 0;
  std::size_t last_start_ = 0;
};

}  // namespace

Tensor decode_pnm(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') throw ImageError("PNM: bad magic", 0);
  const char kind = static_cast<char>(bytes[1]);
  int channels = 0;
  bool ascii = false;
  switch (kind) {
    case '2': channels = 1; ascii = true; break;
    case '3': channels = 3; ascii = true; break;
    case '5': channels = 1; break;
    case '6': channels = 3; break;
    default: throw ImageError(std::string("PNM: unsupported type P") + kind, 1);
  }
  PnmReader r(bytes);
  r.byte();
  r.byte();
  const unsigned w = r.number("width");
  const unsigned h = r.number("height");
  const unsigned maxval = r.number("maxval");
  if (maxval == 0 || maxval > 65535) throw ImageError("PNM: maxval must be in 1..65535", r.last_start());
  if (!ascii) r.single_whitespace();

  Tensor img({1, channels, static_cast<int>(h), static_cast<int>(w)});
  const double m = maxval;
  for (unsigned y = 0; y < h; ++y) {
    for (unsigned x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) {
        std::size_t at = r.pos();
        unsigned v;
        if (ascii) {
          v = r.number("sample");
          at = r.last_start();
        } else if (maxval < 256) {
          v = r.byte();
        } else {
          v = r.byte() << 8;
          v |= r.byte();
        }
        if (v > maxval) throw ImageError("PNM: sample exceeds maxval", at);
        img.at(0, c, static_cast<int>(y), static_cast<int>(x)) = v / m;
      }
    }
  }
  return img;
}

namespace {

void require_image(const Tensor& image) {
  const Shape& s = image.shape();
  if (s.n != 1 || (s.c != 1 && s.c != 3)) {
    throw ShapeError("image must have shape (1,1,h,w) or (1,3,h,w), got " + s.str());
  }
}

unsigned maxval_for(int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw std::invalid_argument("bit depth must be 8 or 16");
  return bit_depth == 8 ? 255u : 65535u;
}

}  // namespace

std::vector<unsigned char> encode_pgm(const Tensor& image, int bit_depth) {
  require_image(image);
  const unsigned maxval = maxval_for(bit_depth);
  const Shape& s = image.shape();
  const std::string header =
      std::string(s.c == 1 ? "P5" : "P6") + "\n" + std::to_string(s.w) + " " + std::to_string(s.h) + "\n" +
      std::to_string(maxval) + "\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(out.size() + s.numel() * (bit_depth / 8));
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      for (int c = 0; c < s.c; ++c) {
        const unsigned v = quantize(image.at(0, c, y, x), maxval);
        if (bit_depth == 16) out.push_back(static_cast<unsigned char>(v >> 8));
        out.push_back(static_cast<unsigned char>(v & 0xff));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// PNG (libpng, classic API; no timestamps so output bytes are reproducible)

namespace {

struct MemReader {
  const std::vector<unsigned char>* bytes;
  std::size_t pos;
};

void png_mem_read(png_structp png, png_bytep out, png_size_t len) {
  auto* r = static_cast<MemReader*>(png_get_io_ptr(png));
  if (r->pos + len > r->bytes->size()) png_error(png, "unexpected end of data");
  std::memcpy(out, r->bytes->data() + r->pos, len);
  r->pos += len;
}

void png_mem_write(png_structp png, png_bytep data, png_size_t len) {
  auto* v = static_cast<std::vector<unsigned char>*>(png_get_io_ptr(png));
  v->insert(v->end(), data, data + len);
}

void png_mem_flush(png_structp) {}

struct PngRaw {
  unsigned width = 0, height = 0;
  int channels = 0, bit_depth = 0;
  std::vector<unsigned char> pixels;
  char error[256] = {};
  std::size_t error_pos = 0;
};

void png_error_fn(png_structp png, png_const_charp msg) {
  auto* raw = static_cast<PngRaw*>(png_get_error_ptr(png));
  std::snprintf(raw->error, sizeof raw->error, "%s", msg);
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

// C-style decode: no objects with destructors live across setjmp.
bool png_decode_raw(const std::vector<unsigned char>* bytes, PngRaw* raw) {
  MemReader reader{bytes, 0};
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, raw, png_error_fn, png_warning_fn);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  png_bytep* rows = nullptr;
  if (setjmp(png_jmpbuf(png))) {
    raw->error_pos = reader.pos;
    std::free(rows);
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, &reader, png_mem_read);
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);  // host little-endian samples
  png_read_update_info(png, info);
  raw->width = png_get_image_width(png, info);
  raw->height = png_get_image_height(png, info);
  raw->channels = png_get_channels(png, info);
  raw->bit_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  raw->pixels.resize(rowbytes * raw->height);
  rows = static_cast<png_bytep*>(std::malloc(sizeof(png_bytep) * raw->height));
  for (unsigned y = 0; y < raw->height; ++y) rows[y] = raw->pixels.data() + y * rowbytes;
  png_read_image(png, rows);
  png_read_end(png, nullptr);
  std::free(rows);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

bool png_encode_raw(const unsigned char* pixels, unsigned w, unsigned h, int channels, int bit_depth,
                    std::vector<unsigned char>* out, PngRaw* err) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, err, png_error_fn, png_warning_fn);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, out, png_mem_write, png_mem_flush);
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, w, h, bit_depth, channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t rowbytes = static_cast<std::size_t>(w) * channels * (bit_depth / 8);
  for (unsigned y = 0; y < h; ++y) png_write_row(png, const_cast<png_bytep>(pixels + y * rowbytes));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

}  // namespace

Tensor decode_png(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw ImageError("PNG: bad signature", 0);
  PngRaw raw;
  if (!png_decode_raw(&bytes, &raw)) throw ImageError(std::string("PNG: ") + raw.error, raw.error_pos);
  const int c = raw.channels;
  Tensor img({1, c, static_cast<int>(raw.height), static_cast<int>(raw.width)});
  const double m = raw.bit_depth == 16 ? 65535.0 : 255.0;
  std::size_t i = 0;
  for (unsigned y = 0; y < raw.height; ++y) {
    for (unsigned x = 0; x < raw.width; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        unsigned v;
        if (raw.bit_depth == 16) {
          v = raw.pixels[i] | (raw.pixels[i + 1] << 8);
          i += 2;
        } else {
          v = raw.pixels[i++];
        }
        img.at(0, ch, static_cast<int>(y), static_cast<int>(x)) = v / m;
      }
    }
  }
  return img;
}

std::vector<unsigned char> encode_png(const Tensor& image, int bit_depth) {
  require_image(image);
  const unsigned maxval = maxval_for(bit_depth);
  const Shape& s = image.shape();
  std::vector<unsigned char> pixels;
  pixels.reserve(s.numel() * (bit_depth / 8));
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      for (int c = 0; c < s.c; ++c) {
        const unsigned v = quantize(image.at(0, c, y, x), maxval);
        if (bit_depth == 16) pixels.push_back(static_cast<unsigned char>(v >> 8));  // PNG is big-endian
        pixels.push_back(static_cast<unsigned char>(v & 0xff));
      }
    }
  }
  std::vector<unsigned char> out;
  PngRaw err;
  if (!png_encode_raw(pixels.data(), static_cast<unsigned>(s.w), static_cast<unsigned>(s.h), s.c, bit_depth, &out,
                      &err)) {
    throw std::runtime_error(std::string("PNG encode failed: ") + err.error);
  }
  return out;
}

Tensor read_image(const std::string& path) {
  const auto bytes = read_file(path);
  if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) return decode_png(bytes);
  return decode_pnm(bytes);
}

static bool ends_with(const std::string& s, const std::string& suffix) {
  if (s.size() < suffix.size()) return false;
  return std::equal(suffix.rbegin(), suffix.rend(), s.rbegin(),
                    [](char a, char b) { return std::tolower(static_cast<unsigned char>(a)) == b; });
}

void write_image(const Tensor& image, const std::string& path, int bit_depth) {
  write_file(path, ends_with(path, ".png") ? encode_png(image, bit_depth) : encode_pgm(image, bit_depth));
}

}  // namespace puca::io
