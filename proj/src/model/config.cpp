#include "puca/config.hpp"

namespace puca {

std::string to_string(Downsample d) { return d == Downsample::kPatch ? "patch" : "pixel"; }

Downsample downsample_from_string(const std::string& s) {
  if (s == "patch") return Downsample::kPatch;
  if (s == "pixel") return Downsample::kPixel;
  throw ConfigError("unknown downsample mode '" + s + "' (expected 'patch' or 'pixel')");
}

int PucaConfig::spatial_multiple() const {
  // Level i (1-based, i < levels) sees dims H / f^(i-1) and needs them
  // divisible by p^2 (patch) or q (pixel).
  int m = 1;
  if (levels < 2) return m;
  if (downsample == Downsample::kPatch) {
    for (int i = 0; i < levels; ++i) m *= patch;
  } else {
    for (int i = 1; i < levels; ++i) m *= patch;
  }
  return m;
}

void PucaConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("invalid model config: " + msg); };
  if (levels < 1) fail("levels must be >= 1");
  if (base_channels < 2 || base_channels % 2 != 0) fail("base_channels must be even and >= 2");
  if (dilation < 2) fail("dilation must be >= 2");
  if (patch < 1) fail("patch must be >= 1");
  if (pd_train < 1 || pd_test < 1) fail("PD strides must be >= 1");
  if (static_cast<int>(dabs_per_level.size()) != levels - 1) {
    fail("dabs_per_level needs levels-1 = " + std::to_string(levels - 1) + " entries, got " +
         std::to_string(dabs_per_level.size()));
  }
  for (int n : dabs_per_level)
    if (n < 0) fail("dabs_per_level entries must be >= 0");
  if (dabs_bottleneck < 0) fail("dabs_bottleneck must be >= 0");
  if (in_channels != 1 && in_channels != 3) fail("in_channels must be 1 or 3");
  if (levels > 1 && downsample == Downsample::kPixel && patch < 2) fail("pixel downsampling needs factor >= 2");
}

}  // namespace puca
