#include "puca/checkpoint.hpp"

#include <cstring>

#include "puca/config_json.hpp"
#include "puca/image_io.hpp"

namespace puca {

namespace {

constexpr char kMagic[8] = {'P', 'U', 'C', 'A', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::vector<unsigned char>& out, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.insert(out.end(), b, b + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& b) : b_(b) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void doubles(double* dst, std::size_t n) {
    need(n * sizeof(double));
    std::memcpy(dst, b_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }

  bool done() const { return pos_ == b_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) {
      throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
    }
  }
  const std::vector<unsigned char>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> serialize_checkpoint(const Model& model) {
  std::vector<unsigned char> out(kMagic, kMagic + sizeof kMagic);
  put(out, kVersion);
  const std::string cfg = io::serialize_model_config(model.config);
  put(out, static_cast<std::uint64_t>(cfg.size()));
  out.insert(out.end(), cfg.begin(), cfg.end());
  put(out, static_cast<std::uint64_t>(model.params.size()));
  for (const auto& [name, t] : model.params) {
    put(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    const Shape& s = t.shape();
    for (int d : {s.n, s.c, s.h, s.w}) put(out, static_cast<std::int32_t>(d));
    const auto* p = reinterpret_cast<const unsigned char*>(t.raw());
    out.insert(out.end(), p, p + t.size() * sizeof(double));
  }
  return out;
}

Model deserialize_checkpoint(const std::vector<unsigned char>& bytes) {
  Reader r(bytes);
  if (r.bytes(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) throw CheckpointError("not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto cfg_len = r.get<std::uint64_t>();
  const PucaConfig cfg = io::parse_model_config(r.bytes(cfg_len));
  Model model = build_model(cfg, /*allow_non_invariant=*/true);

  const auto count = r.get<std::uint64_t>();
  if (count != model.params.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(count) + " parameters, config expects " +
                          std::to_string(model.params.size()));
  }
  for (auto& [name, t] : model.params) {
    const auto len = r.get<std::uint32_t>();
    const std::string stored = r.bytes(len);
    if (stored != name) throw CheckpointError("expected parameter '" + name + "', found '" + stored + "'");
    Shape s;
    s.n = r.get<std::int32_t>();
    s.c = r.get<std::int32_t>();
    s.h = r.get<std::int32_t>();
    s.w = r.get<std::int32_t>();
    if (!(s == t.shape())) {
      throw CheckpointError("parameter '" + name + "' has shape " + s.str() + ", expected " + t.shape().str());
    }
    r.doubles(t.raw(), t.size());
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint at byte " + std::to_string(r.pos()));
  return model;
}

void save_checkpoint(const Model& model, const std::string& path) { io::write_file(path, serialize_checkpoint(model)); }

Model load_checkpoint(const std::string& path) { return deserialize_checkpoint(io::read_file(path)); }

}  // namespace puca
