#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <iterator>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "carplan/numerics/layers.hpp"

namespace carplan::nn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Named arrays plus a free-form metadata string (the model config).
///
/// Binary layout, all integers and doubles little-endian:
///   "CPLNCKPT" | u32 version | u32 meta_len | meta bytes | u32 count |
///   count × ( u32 name_len | name | u32 rank | rank × u64 extent | f64 data... )
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  std::string metadata;
  std::vector<std::pair<std::string, Tensor>> arrays;

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : arrays)
      if (n == name) return &t;
    return nullptr;
  }
};

namespace detail {

template <typename T>
void put_le(std::string& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.append(buf, sizeof(T));
}

class ByteReader {
 public:
  explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    char buf[sizeof(T)];
    std::memcpy(buf, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
  }

  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
  std::string out = "CPLNCKPT";
  detail::put_le<std::uint32_t>(out, Checkpoint::kVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ck.metadata.size()));
  out += ck.metadata;
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ck.arrays.size()));
  for (const auto& [name, t] : ck.arrays) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) detail::put_le<std::uint64_t>(out, d);
    for (double v : t.raw()) detail::put_le<double>(out, v);
  }
  return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 8 || bytes.compare(0, 8, "CPLNCKPT") != 0) throw CheckpointError("not a checkpoint (bad magic)");
  const std::string body = bytes.substr(8);
  detail::ByteReader r(body);
  const auto version = r.get<std::uint32_t>();
  if (version != Checkpoint::kVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.metadata = r.get_bytes(r.get<std::uint32_t>());
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.get_bytes(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw CheckpointError("implausible rank for " + name);
    Shape shape;
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
      n *= shape.back();
    }
    if (n * sizeof(double) > r.remaining()) throw CheckpointError("checkpoint truncated in " + name);
    std::vector<double> data(n);
    for (auto& v : data) v = r.get<double>();
    ck.arrays.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return ck;
}

inline Checkpoint snapshot(const ParameterStore& store, std::string metadata) {
  Checkpoint ck;
  ck.metadata = std::move(metadata);
  for (const auto* p : store.all()) ck.arrays.emplace_back(p->name, p->value);
  return ck;
}

/// Copies arrays into matching parameters. Parameters absent from the
/// checkpoint are an error unless `may_be_missing(name)` says otherwise.
inline void restore(ParameterStore& store, const Checkpoint& ck,
                    const std::function<bool(const std::string&)>& may_be_missing = {}) {
  for (auto* p : store.all()) {
    const Tensor* t = ck.find(p->name);
    if (!t) {
      if (may_be_missing && may_be_missing(p->name)) continue;
      throw CheckpointError("checkpoint lacks parameter " + p->name);
    }
    if (t->shape() != p->value.shape())
      throw CheckpointError("shape mismatch for " + p->name + ": " + shape_str(t->shape()) + " vs " +
                            shape_str(p->value.shape()));
    p->value = *t;
  }
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open " + path + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

}  // namespace carplan::nn
