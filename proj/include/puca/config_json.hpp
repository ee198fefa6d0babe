#pragma once

#include <string>

#include "puca/config.hpp"
#include "puca/train.hpp"

namespace puca::io {

struct Paths {
  std::string checkpoint;
  std::string loss_csv;

  bool operator==(const Paths&) const = default;
};

// {"model": {...}, "train": {...}, "paths": {...}}. Every key is optional and
// falls back to the default; unknown keys and wrongly typed values throw
// ConfigError naming the offending key.
struct CliConfig {
  PucaConfig model;
  train::TrainConfig train;
  Paths paths;

  bool operator==(const CliConfig&) const = default;
};

CliConfig parse_cli_config(const std::string& text);
std::string serialize_cli_config(const CliConfig& cfg);
CliConfig load_cli_config(const std::string& path);

PucaConfig parse_model_config(const std::string& text);
std::string serialize_model_config(const PucaConfig& cfg);

}  // namespace puca::io
