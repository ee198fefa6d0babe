#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "puca/model.hpp"

namespace puca {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Little-endian binary layout:
//   "PUCACKPT" u32 version
//   u64 length, model config as JSON
//   u64 parameter count, then per parameter:
//     u32 name length, name, i32 n c h w, f64 values
// Loading rebuilds the model from the config and requires the stored
// parameter list to match it name for name and shape for shape.
std::vector<unsigned char> serialize_checkpoint(const Model& model);
Model deserialize_checkpoint(const std::vector<unsigned char>& bytes);

void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace puca
