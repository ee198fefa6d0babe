#include "puca/config_json.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include "json.hpp"

namespace puca::io {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& msg) { throw ConfigError(where + ": " + msg); }

void require_object(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail(where, "expected an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) fail(where, "unknown key '" + key + "'");
  }
}

template <typename Fn>
void with_key(const json& obj, const std::string& where, const char* key, Fn&& fn) {
  auto it = obj.find(key);
  if (it != obj.end()) fn(*it, where + "." + key);
}

int get_int(const json& v, const std::string& where) {
  if (!v.is_number_integer()) fail(where, "expected an integer");
  const auto x = v.get<long long>();
  if (x < -2147483647LL || x > 2147483647LL) fail(where, "integer out of range");
  return static_cast<int>(x);
}

std::uint64_t get_u64(const json& v, const std::string& where) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
    fail(where, "expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

double get_real(const json& v, const std::string& where) {
  if (!v.is_number()) fail(where, "expected a number");
  return v.get<double>();
}

std::string get_string(const json& v, const std::string& where) {
  if (!v.is_string()) fail(where, "expected a string");
  return v.get<std::string>();
}

PucaConfig model_from(const json& j, const std::string& where) {
  require_object(j, where,
                 {"levels", "base_channels", "dilation", "patch", "pd_train", "pd_test", "dabs_per_level",
                  "dabs_bottleneck", "in_channels", "seed", "downsample"});
  PucaConfig c;
  with_key(j, where, "levels", [&](const json& v, const std::string& w) { c.levels = get_int(v, w); });
  with_key(j, where, "base_channels", [&](const json& v, const std::string& w) { c.base_channels = get_int(v, w); });
  with_key(j, where, "dilation", [&](const json& v, const std::string& w) { c.dilation = get_int(v, w); });
  with_key(j, where, "patch", [&](const json& v, const std::string& w) { c.patch = get_int(v, w); });
  with_key(j, where, "pd_train", [&](const json& v, const std::string& w) { c.pd_train = get_int(v, w); });
  with_key(j, where, "pd_test", [&](const json& v, const std::string& w) { c.pd_test = get_int(v, w); });
  with_key(j, where, "dabs_bottleneck", [&](const json& v, const std::string& w) { c.dabs_bottleneck = get_int(v, w); });
  with_key(j, where, "in_channels", [&](const json& v, const std::string& w) { c.in_channels = get_int(v, w); });
  with_key(j, where, "seed", [&](const json& v, const std::string& w) { c.seed = get_u64(v, w); });
  with_key(j, where, "downsample", [&](const json& v, const std::string& w) {
    c.downsample = downsample_from_string(get_string(v, w));
  });
  const bool explicit_dabs = j.contains("dabs_per_level");
  with_key(j, where, "dabs_per_level", [&](const json& v, const std::string& w) {
    if (!v.is_array()) fail(w, "expected an array of integers");
    c.dabs_per_level.clear();
    for (std::size_t i = 0; i < v.size(); ++i) c.dabs_per_level.push_back(get_int(v[i], w + "[" + std::to_string(i) + "]"));
  });
  // A levels override without an explicit block list keeps two blocks per level.
  if (!explicit_dabs) c.dabs_per_level.assign(static_cast<std::size_t>(std::max(c.levels - 1, 0)), 2);
  c.validate();
  return c;
}

json model_to(const PucaConfig& c) {
  return json{{"levels", c.levels},
              {"base_channels", c.base_channels},
              {"dilation", c.dilation},
              {"patch", c.patch},
              {"pd_train", c.pd_train},
              {"pd_test", c.pd_test},
              {"dabs_per_level", c.dabs_per_level},
              {"dabs_bottleneck", c.dabs_bottleneck},
              {"in_channels", c.in_channels},
              {"seed", c.seed},
              {"downsample", to_string(c.downsample)}};
}

train::TrainConfig train_from(const json& j, const std::string& where) {
  require_object(j, where,
                 {"lr", "betas", "eps", "steps", "batch", "patch_size", "sigma", "noise_kind", "corr_kernel", "seed"});
  train::TrainConfig t;
  with_key(j, where, "lr", [&](const json& v, const std::string& w) { t.lr = get_real(v, w); });
  with_key(j, where, "eps", [&](const json& v, const std::string& w) { t.eps = get_real(v, w); });
  with_key(j, where, "sigma", [&](const json& v, const std::string& w) { t.sigma = get_real(v, w); });
  with_key(j, where, "steps", [&](const json& v, const std::string& w) { t.steps = get_int(v, w); });
  with_key(j, where, "batch", [&](const json& v, const std::string& w) { t.batch = get_int(v, w); });
  with_key(j, where, "patch_size", [&](const json& v, const std::string& w) { t.patch_size = get_int(v, w); });
  with_key(j, where, "seed", [&](const json& v, const std::string& w) { t.seed = get_u64(v, w); });
  with_key(j, where, "betas", [&](const json& v, const std::string& w) {
    if (!v.is_array() || v.size() != 2) fail(w, "expected [beta1, beta2]");
    t.beta1 = get_real(v[0], w + "[0]");
    t.beta2 = get_real(v[1], w + "[1]");
  });
  with_key(j, where, "noise_kind", [&](const json& v, const std::string& w) {
    try {
      t.noise_kind = train::noise_kind_from_string(get_string(v, w));
    } catch (const std::invalid_argument& e) {
      fail(w, e.what());
    }
  });
  with_key(j, where, "corr_kernel", [&](const json& v, const std::string& w) {
    if (!v.is_array()) fail(w, "expected an array of rows");
    t.corr_kernel.clear();
    for (std::size_t r = 0; r < v.size(); ++r) {
      const std::string rw = w + "[" + std::to_string(r) + "]";
      if (!v[r].is_array()) fail(rw, "expected an array of numbers");
      std::vector<double> row;
      for (std::size_t k = 0; k < v[r].size(); ++k) row.push_back(get_real(v[r][k], rw + "[" + std::to_string(k) + "]"));
      t.corr_kernel.push_back(std::move(row));
    }
  });
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return t;
}

json train_to(const train::TrainConfig& t) {
  return json{{"lr", t.lr},
              {"betas", {t.beta1, t.beta2}},
              {"eps", t.eps},
              {"steps", t.steps},
              {"batch", t.batch},
              {"patch_size", t.patch_size},
              {"sigma", t.sigma},
              {"noise_kind", train::to_string(t.noise_kind)},
              {"corr_kernel", t.corr_kernel},
              {"seed", t.seed}};
}

json parse_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

}  // namespace

CliConfig parse_cli_config(const std::string& text) {
  const json j = parse_text(text);
  require_object(j, "config", {"model", "train", "paths"});
  CliConfig c;
  with_key(j, "config", "model", [&](const json& v, const std::string& w) { c.model = model_from(v, w); });
  with_key(j, "config", "train", [&](const json& v, const std::string& w) { c.train = train_from(v, w); });
  with_key(j, "config", "paths", [&](const json& v, const std::string& w) {
    require_object(v, w, {"checkpoint", "loss_csv"});
    with_key(v, w, "checkpoint", [&](const json& s, const std::string& k) { c.paths.checkpoint = get_string(s, k); });
    with_key(v, w, "loss_csv", [&](const json& s, const std::string& k) { c.paths.loss_csv = get_string(s, k); });
  });
  return c;
}

std::string serialize_cli_config(const CliConfig& c) {
  const json j{{"model", model_to(c.model)},
               {"train", train_to(c.train)},
               {"paths", {{"checkpoint", c.paths.checkpoint}, {"loss_csv", c.paths.loss_csv}}}};
  return j.dump(2) + "\n";
}

CliConfig load_cli_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_cli_config(ss.str());
}

PucaConfig parse_model_config(const std::string& text) { return model_from(parse_text(text), "model"); }

std::string serialize_model_config(const PucaConfig& cfg) { return model_to(cfg).dump(); }

}  // namespace puca::io
