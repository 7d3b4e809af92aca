#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "uwf/autograd.hpp"
#include "uwf/errors.hpp"
#include "uwf/ops.hpp"
#include "uwf/tensor.hpp"

namespace uwf {

using Rng = std::mt19937_64;

// Ordered collection of named trainable tensors. Names are hierarchical
// ("high.enc1.down.weight") and unique.
template <typename T>
class ParameterSet {
 public:
  ag::Var<T> add(const std::string& name, Tensor<T> init) {
    if (name.find_first_of(" \t\n") != std::string::npos) throw ConfigError("parameter name has whitespace: " + name);
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    index_[name] = items_.size();
    items_.emplace_back(name, ag::Var<T>(std::move(init), true));
    return items_.back().second;
  }

  const std::vector<std::pair<std::string, ag::Var<T>>>& items() const { return items_; }
  std::vector<std::pair<std::string, ag::Var<T>>>& items() { return items_; }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  ag::Var<T> get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return items_[it->second].second;
  }

  void zero_grad() {
    for (auto& [_, v] : items_) v.zero_grad();
  }

  void set_trainable(bool on) {
    for (auto& [_, v] : items_) v.raw()->requires_grad = on;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, v] : items_) n += v.value().size();
    return n;
  }

  bool all_finite() const {
    for (const auto& [_, v] : items_)
      if (!v.value().all_finite()) return false;
    return true;
  }

  // Copies values (not identities) from another set with identical names.
  void assign(const ParameterSet& other) {
    for (auto& [name, v] : items_) v.mutable_value() = other.get(name).value();
  }

 private:
  std::vector<std::pair<std::string, ag::Var<T>>> items_;
  std::map<std::string, std::size_t> index_;
};

enum class Init { he, zero };

template <typename T>
struct Conv2d {
  ag::Var<T> weight;
  ag::Var<T> bias;
  ag::ConvGeometry geo;

  static Conv2d create(ParameterSet<T>& ps, const std::string& name, int cin, int cout, int k, Rng& rng,
                       Init init = Init::he, int stride = 1) {
    Tensor<T> w(cout, cin, k * k);
    if (init == Init::he) {
      std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / (cin * k * k)));
      for (auto& v : w.vec()) v = static_cast<T>(nd(rng));
    }
    Conv2d c;
    c.weight = ps.add(name + ".weight", std::move(w));
    c.bias = ps.add(name + ".bias", Tensor<T>(cout, 1, 1));
    c.geo = {k, stride, (k - 1) / 2};
    return c;
  }

  ag::Var<T> operator()(const ag::Var<T>& x) const { return ag::conv2d(x, weight, bias, geo); }
  int in_channels() const { return weight.shape().h; }
  int out_channels() const { return weight.shape().c; }
};

// Checkpoint archive:
//   <magic>\n
//   config <nbytes>\n<config text>
//   params <count>\n
//   per parameter: "<name> <f32|f64> <c> <h> <w>\n" followed by raw little-endian values
//   end\n
struct Checkpoint {
  std::string magic;
  std::string config_text;
  struct Entry {
    std::string dtype;
    Shape shape;
    std::vector<char> bytes;
  };
  std::map<std::string, Entry> params;
};

template <typename T>
constexpr const char* dtype_name() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? "f32" : "f64";
}

template <typename T>
void write_checkpoint(const std::filesystem::path& path, const std::string& magic, const std::string& config_text,
                      const ParameterSet<T>& ps) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint: " + path.string());
  os << magic << "\n" << "config " << config_text.size() << "\n" << config_text;
  os << "params " << ps.items().size() << "\n";
  for (const auto& [name, v] : ps.items()) {
    const Shape s = v.shape();
    os << name << " " << dtype_name<T>() << " " << s.c << " " << s.h << " " << s.w << "\n";
    os.write(reinterpret_cast<const char*>(v.value().data()), static_cast<std::streamsize>(v.value().size() * sizeof(T)));
  }
  os << "end\n";
  if (!os) throw IoError("failed writing checkpoint: " + path.string());
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path, const std::string& expected_magic) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read checkpoint: " + path.string());
  Checkpoint ck;
  std::getline(is, ck.magic);
  if (ck.magic != expected_magic)
    throw FormatError("checkpoint " + path.string() + " has magic '" + ck.magic + "', expected '" + expected_magic + "'");
  std::string tag;
  std::size_t nbytes = 0;
  is >> tag >> nbytes;
  if (tag != "config") throw FormatError("checkpoint: missing config block");
  is.get();
  ck.config_text.resize(nbytes);
  is.read(ck.config_text.data(), static_cast<std::streamsize>(nbytes));
  std::size_t count = 0;
  is >> tag >> count;
  if (tag != "params") throw FormatError("checkpoint: missing params block");
  is.get();
  for (std::size_t i = 0; i < count; ++i) {
    std::string line;
    std::getline(is, line);
    std::istringstream ls(line);
    std::string name;
    Checkpoint::Entry e;
    if (!(ls >> name >> e.dtype >> e.shape.c >> e.shape.h >> e.shape.w))
      throw FormatError("checkpoint: malformed parameter header '" + line + "'");
    const std::size_t width = e.dtype == "f32" ? 4 : e.dtype == "f64" ? 8 : 0;
    if (!width) throw FormatError("checkpoint: unknown dtype " + e.dtype);
    e.bytes.resize(e.shape.size() * width);
    is.read(e.bytes.data(), static_cast<std::streamsize>(e.bytes.size()));
    if (!is) throw FormatError("checkpoint: truncated data for " + name);
    ck.params.emplace(std::move(name), std::move(e));
  }
  std::getline(is, tag);
  if (tag != "end") throw FormatError("checkpoint: missing end marker");
  return ck;
}

template <typename T>
void load_parameters(const Checkpoint& ck, ParameterSet<T>& ps) {
  if (ck.params.size() != ps.items().size())
    throw FormatError("checkpoint has " + std::to_string(ck.params.size()) + " parameters, model expects " +
                      std::to_string(ps.items().size()));
  for (auto& [name, v] : ps.items()) {
    auto it = ck.params.find(name);
    if (it == ck.params.end()) throw FormatError("checkpoint is missing parameter " + name);
    const auto& e = it->second;
    if (!(e.shape == v.shape())) throw FormatError("checkpoint shape mismatch for " + name);
    Tensor<T>& dst = v.mutable_value();
    if (e.dtype == "f32") {
      std::vector<float> buf(e.shape.size());
      std::memcpy(buf.data(), e.bytes.data(), e.bytes.size());
      for (std::size_t i = 0; i < buf.size(); ++i) dst[i] = static_cast<T>(buf[i]);
    } else {
      std::vector<double> buf(e.shape.size());
      std::memcpy(buf.data(), e.bytes.data(), e.bytes.size());
      for (std::size_t i = 0; i < buf.size(); ++i) dst[i] = static_cast<T>(buf[i]);
    }
  }
}

}  // namespace uwf
