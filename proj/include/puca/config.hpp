#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace puca {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// How the encoder downsamples. kPixel is the space-to-depth negative control
// that leaks the blind spot.
enum class Downsample { kPatch, kPixel };

std::string to_string(Downsample d);
Downsample downsample_from_string(const std::string& s);

struct PucaConfig {
  int levels = 3;
  int base_channels = 16;
  int dilation = 2;
  int patch = 2;
  int pd_train = 5;
  int pd_test = 2;
  // One entry per encoder/decoder level above the bottleneck (levels - 1).
  std::vector<int> dabs_per_level{2, 2};
  int dabs_bottleneck = 2;
  int in_channels = 1;
  std::uint64_t seed = 0;
  Downsample downsample = Downsample::kPatch;

  // Patch-unshuffle keeps the blind spot only when the patch size is a
  // multiple of the dilation.
  bool j_invariant() const { return downsample == Downsample::kPatch && patch % dilation == 0; }

  int masked_kernel() const { return 2 * dilation - 1; }

  // Channel width at level 1..levels: C * 2^(level-1).
  int channels_at(int level) const { return base_channels << (level - 1); }

  // Spatial dims of the PD-domain input must be a multiple of this.
  int spatial_multiple() const;

  void validate() const;

  bool operator==(const PucaConfig&) const = default;
};

}  // namespace puca
