#include "diqa/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

namespace diqa {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'D', 'I', 'Q', 'A'};

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void string(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor(const std::string& name, const Tensor& t) {
    string(name);
    u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) u32(static_cast<std::uint32_t>(d));
    bytes(t.data().data(), t.size() * sizeof(float));
  }
  const std::vector<unsigned char>& buffer() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  Reader(std::vector<unsigned char> data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

  void bytes(void* out, std::size_t n) {
    if (pos_ + n > data_.size()) throw FormatError("checkpoint '" + path_ + "' is truncated");
    std::memcpy(out, data_.data() + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, 8);
    return v;
  }
  std::string string() {
    const std::uint32_t n = u32();
    if (n > data_.size() - pos_) throw FormatError("checkpoint '" + path_ + "' is truncated");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  std::pair<std::string, Tensor> tensor() {
    std::string name = string();
    const std::uint32_t rank = u32();
    if (rank == 0 || rank > 8) throw FormatError("checkpoint tensor '" + name + "' has invalid rank");
    Shape shape(rank);
    std::uint64_t count = 1;
    for (auto& d : shape) {
      d = u32();
      if (d == 0) throw FormatError("checkpoint tensor '" + name + "' has a zero extent");
      count *= static_cast<std::uint64_t>(d);
    }
    if (count * sizeof(float) > data_.size() - pos_) throw FormatError("checkpoint '" + path_ + "' is truncated");
    Tensor t(shape);
    bytes(t.data().data(), t.size() * sizeof(float));
    return {std::move(name), std::move(t)};
  }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  std::vector<unsigned char> data_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::map<std::string, std::string> parse_blob(const std::string& blob) {
  std::map<std::string, std::string> kv;
  std::istringstream in(blob);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed checkpoint configuration line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

double parse_double(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw FormatError("checkpoint configuration lacks '" + key + "'");
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw FormatError("checkpoint configuration value '" + key + "' is malformed");
  }
}

}  // namespace

void check_params_match(const ModelConfig& config, const ParamSet<float>& params) {
  const auto layout = parameter_layout(config);
  for (const auto& [name, shape] : layout) {
    if (!params.contains(name)) throw DimensionError("tensor '" + name + "' required by " + config.name() + " is missing");
    if (params.at(name).shape() != shape) {
      throw DimensionError("tensor '" + name + "' has shape " + shape_str(params.at(name).shape()) + " but " +
                           config.name() + " (" + to_string(config.depth) + ") expects " + shape_str(shape));
    }
  }
  if (params.size() != layout.size()) {
    for (const auto& e : params) {
      bool known = false;
      for (const auto& entry : layout) known = known || entry.first == e.name;
      if (!known) throw DimensionError("tensor '" + e.name + "' is not part of " + config.name());
    }
  }
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  std::map<std::string, std::string> kv = checkpoint.config.to_key_values();
  kv["meta.seed"] = std::to_string(checkpoint.meta.seed);
  kv["meta.epoch"] = std::to_string(checkpoint.meta.epoch);
  kv["meta.best_val_loss"] = format_double(checkpoint.meta.best_val_loss);
  if (checkpoint.adam) {
    kv["adam.learning_rate"] = format_double(checkpoint.adam->hyper.learning_rate);
    kv["adam.beta1"] = format_double(checkpoint.adam->hyper.beta1);
    kv["adam.beta2"] = format_double(checkpoint.adam->hyper.beta2);
    kv["adam.epsilon"] = format_double(checkpoint.adam->hyper.epsilon);
  }
  std::string blob;
  for (const auto& [k, v] : kv) blob += k + "=" + v + "\n";
  w.string(blob);
  w.u32(static_cast<std::uint32_t>(checkpoint.params.size()));
  for (const auto& e : checkpoint.params) w.tensor(e.name, e.tensor);
  w.u8(checkpoint.adam ? 1 : 0);
  if (checkpoint.adam) {
    const auto& a = *checkpoint.adam;
    w.u64(static_cast<std::uint64_t>(a.step));
    w.u32(static_cast<std::uint32_t>(a.first_moment.size() + a.second_moment.size()));
    for (const auto& e : a.first_moment) w.tensor("adam.m." + e.name, e.tensor);
    for (const auto& e : a.second_moment) w.tensor("adam.v." + e.name, e.tensor);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(w.buffer().data()), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  Reader r(std::vector<unsigned char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()),
           path.string());
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("'" + path.string() + "' is not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint '" + path.string() + "' has version " + std::to_string(version) + ", expected " +
                      std::to_string(kCheckpointVersion));
  }
  const auto kv = parse_blob(r.string());
  Checkpoint ck;
  ck.config = ModelConfig::from_key_values(kv);
  try {
    ck.meta.seed = std::stoull(kv.at("meta.seed"));
  } catch (const std::exception&) {
    throw FormatError("checkpoint configuration has no valid 'meta.seed'");
  }
  ck.meta.epoch = static_cast<int>(parse_double(kv, "meta.epoch"));
  ck.meta.best_val_loss = parse_double(kv, "meta.best_val_loss");
  const std::uint32_t n_params = r.u32();
  for (std::uint32_t i = 0; i < n_params; ++i) {
    auto [name, tensor] = r.tensor();
    if (ck.params.contains(name)) throw FormatError("checkpoint repeats tensor '" + name + "'");
    ck.params.add(name, tensor.shape()) = std::move(tensor);
  }
  if (r.u8() != 0) {
    AdamHyper hyper;
    hyper.learning_rate = parse_double(kv, "adam.learning_rate");
    hyper.beta1 = parse_double(kv, "adam.beta1");
    hyper.beta2 = parse_double(kv, "adam.beta2");
    hyper.epsilon = parse_double(kv, "adam.epsilon");
    AdamState<float> adam;
    adam.hyper = hyper;
    adam.step = static_cast<std::int64_t>(r.u64());
    const std::uint32_t n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
      auto [name, tensor] = r.tensor();
      if (name.starts_with("adam.m.")) {
        adam.first_moment.add(name.substr(7), tensor.shape()) = std::move(tensor);
      } else if (name.starts_with("adam.v.")) {
        adam.second_moment.add(name.substr(7), tensor.shape()) = std::move(tensor);
      } else {
        throw FormatError("unexpected optimizer tensor '" + name + "'");
      }
    }
    ck.adam = std::move(adam);
  }
  if (!r.at_end()) throw FormatError("checkpoint '" + path.string() + "' has trailing bytes");
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  check_params_match(expected, ck.params);
  if (!(ck.config == expected)) {
    throw ConfigError("checkpoint holds a " + ck.config.name() + " (" + to_string(ck.config.depth) +
                      ") model, expected " + expected.name() + " (" + to_string(expected.depth) + ")");
  }
  return ck;
}

}  // namespace diqa
