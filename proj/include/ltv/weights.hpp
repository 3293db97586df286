#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ltv/errors.hpp"
#include "ltv/model.hpp"

namespace ltv {

/// One named tensor as stored on disk.
struct StoredTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

/// Ordered collection of named tensors; order is the model registry order.
struct WeightStore {
  std::vector<StoredTensor> tensors;

  const StoredTensor* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
};

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class ByteReader {
 public:
  ByteReader(const std::string& buf, const std::string& path) : buf_(buf), path_(path) {}

  std::size_t offset() const { return pos_; }

  const char* take(std::size_t n, const char* what) {
    if (pos_ + n > buf_.size())
      throw FormatError(path_ + ": truncated " + what + " at offset " + std::to_string(pos_));
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::uint16_t u16(const char* what) {
    const unsigned char* p = reinterpret_cast<const unsigned char*>(take(2, what));
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
  }

  std::uint32_t u32(const char* what) {
    const unsigned char* p = reinterpret_cast<const unsigned char*>(take(4, what));
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }

  bool done() const { return pos_ == buf_.size(); }

 private:
  const std::string& buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// LTVW container: magic "LTVW", u32 version = 1, u32 tensor count; per
/// tensor u16 name length, name bytes, u8 dtype (0 = f32), u8 rank,
/// rank x u32 dims, then the raw little-endian f32 payload.
inline void write_weights(const WeightStore& store, const std::string& path) {
  std::string out;
  out += "LTVW";
  detail::put_u32(out, 1);
  detail::put_u32(out, static_cast<std::uint32_t>(store.tensors.size()));
  for (const auto& t : store.tensors) {
    if (t.name.size() > 0xffff) throw FormatError("write_weights: tensor name too long");
    std::uint64_t count = 1;
    for (auto d : t.dims) count *= d;
    if (count != t.data.size())
      throw FormatError("write_weights: dims of " + t.name + " do not match payload size");
    detail::put_u16(out, static_cast<std::uint16_t>(t.name.size()));
    out += t.name;
    out.push_back(0);  // dtype f32
    out.push_back(static_cast<char>(t.dims.size()));
    for (auto d : t.dims) detail::put_u32(out, d);
    static_assert(sizeof(float) == 4);
    const std::size_t bytes = t.data.size() * 4;
    const std::size_t base = out.size();
    out.resize(base + bytes);
    std::memcpy(out.data() + base, t.data.data(), bytes);
  }

  // Write to a sibling temp file and rename so readers never observe a
  // partially written store.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("write_weights: cannot open " + tmp);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write_weights: short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("write_weights: rename to " + path + " failed: " + ec.message());
}

inline WeightStore read_weights(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("read_weights: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  detail::ByteReader r(buf, path);

  if (std::memcmp(r.take(4, "magic"), "LTVW", 4) != 0)
    throw FormatError(path + ": bad magic at offset 0");
  const std::uint32_t version = r.u32("version");
  if (version != 1)
    throw FormatError(path + ": unsupported version " + std::to_string(version) + " at offset 4");
  const std::uint32_t count = r.u32("tensor count");

  WeightStore store;
  store.tensors.reserve(count);
  for (std::uint32_t ti = 0; ti < count; ++ti) {
    StoredTensor t;
    const std::uint16_t name_len = r.u16("name length");
    const char* name = r.take(name_len, "name");
    t.name.assign(name, name_len);
    const std::size_t dtype_off = r.offset();
    const unsigned char dtype = static_cast<unsigned char>(*r.take(1, "dtype"));
    if (dtype != 0)
      throw FormatError(path + ": unknown dtype " + std::to_string(dtype) + " at offset " +
                        std::to_string(dtype_off));
    const unsigned char rank = static_cast<unsigned char>(*r.take(1, "rank"));
    std::uint64_t elem_count = 1;
    for (unsigned i = 0; i < rank; ++i) {
      t.dims.push_back(r.u32("dim"));
      elem_count *= t.dims.back();
    }
    if (elem_count > (1ull << 31))
      throw FormatError(path + ": unreasonable tensor size for " + t.name);
    const char* payload = r.take(static_cast<std::size_t>(elem_count * 4), "payload");
    t.data.resize(static_cast<std::size_t>(elem_count));
    std::memcpy(t.data.data(), payload, static_cast<std::size_t>(elem_count * 4));
    store.tensors.push_back(std::move(t));
  }
  if (!r.done())
    throw FormatError(path + ": trailing bytes at offset " + std::to_string(r.offset()));
  return store;
}

/// Snapshots every parameter and buffer of the model in registry order.
template <typename T>
WeightStore snapshot_weights(Model<T>& model) {
  WeightStore store;
  for (auto& p : model.params()) {
    StoredTensor t;
    t.name = p.name;
    t.dims = p.dims;
    t.data.resize(static_cast<std::size_t>(p.size));
    for (std::int64_t i = 0; i < p.size; ++i) t.data[i] = static_cast<float>(p.data[i]);
    store.tensors.push_back(std::move(t));
  }
  return store;
}

/// Loads a snapshot into a built model; every registry entry must be present
/// with matching shape. The first offending tensor is named in the error.
template <typename T>
void load_weights(Model<T>& model, const WeightStore& store) {
  auto params = model.params();
  if (store.tensors.size() != params.size())
    throw FormatError("load_weights: store has " + std::to_string(store.tensors.size()) +
                      " tensors, model expects " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const StoredTensor* t = store.find(p.name);
    if (!t) throw FormatError("load_weights: missing tensor " + p.name);
    if (t->dims != p.dims)
      throw FormatError("load_weights: shape mismatch for " + p.name);
    for (std::int64_t j = 0; j < p.size; ++j) p.data[j] = static_cast<T>(t->data[j]);
  }
}

template <typename T>
void save_model(Model<T>& model, const std::string& path) {
  write_weights(snapshot_weights(model), path);
}

template <typename T>
void load_model(Model<T>& model, const std::string& path) {
  load_weights(model, read_weights(path));
}

/// FNV-1a over the file bytes, as a 16-digit hex string; used to tie run
/// records to the exact weight file they were produced with.
inline std::string file_hash_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("file_hash_hex: cannot open " + path);
  std::uint64_t h = 1469598103934665603ull;
  char buf[4096];
  while (in.read(buf, sizeof buf), in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[static_cast<std::size_t>(i)]);
      h *= 1099511628211ull;
    }
  }
  std::string hex(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) hex[static_cast<std::size_t>(i)] = "0123456789abcdef"[h & 0xf];
  return hex;
}

}  // namespace ltv
