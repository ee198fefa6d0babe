#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "puca/tensor.hpp"

namespace puca::io {

class ImageError : public std::runtime_error {
 public:
  ImageError(const std::string& msg, std::size_t offset);
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Images are (1, c, h, w) tensors with values in [0, 1]; a sample v of a
// maxval-M file maps to v / M. Writing clamps to [0, 1] and rounds half up.
Tensor decode_pnm(const std::vector<unsigned char>& bytes);
std::vector<unsigned char> encode_pgm(const Tensor& image, int bit_depth = 8);  // P5 or P6 for 3 channels

Tensor decode_png(const std::vector<unsigned char>& bytes);
std::vector<unsigned char> encode_png(const Tensor& image, int bit_depth = 8);

// Format chosen by magic bytes when reading and by extension (.png, else PNM) when writing.
Tensor read_image(const std::string& path);
void write_image(const Tensor& image, const std::string& path, int bit_depth = 8);

std::vector<unsigned char> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<unsigned char>& bytes);

// round-half-up quantization to 0..maxval.
unsigned quantize(double v, unsigned maxval);

}  // namespace puca::io
