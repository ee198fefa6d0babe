#include <algorithm>

#include "puca/image_io.hpp"
#include "puca/jinv.hpp"

namespace puca::jinv {

Tensor heatmap_image(const DependencyMap& map) {
  Tensor img({1, 1, map.h, map.w});
  const double peak = map.values.empty() ? 0.0 : *std::max_element(map.values.begin(), map.values.end());
  if (!(peak > 0.0)) return img;
  auto out = img.data();
  for (std::size_t k = 0; k < map.values.size(); ++k) out[k] = map.values[k] / peak;
  return img;
}

void render_map(const DependencyMap& map, const std::string& path) { io::write_image(heatmap_image(map), path); }

}  // namespace puca::jinv
