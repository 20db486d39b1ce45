#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "urecon/errors.hpp"
#include "urecon/tensor.hpp"

// Self-describing binary container shared by checkpoints and dataset files:
// magic, format version, a key=value config text block, then named tensor
// records (name, rank, dims, little-endian 8-byte floats). Loading and
// re-saving a file reproduces it byte for byte.

namespace urecon {

struct TensorFile {
  std::string config_text;
  std::vector<std::pair<std::string, Tensor>> tensors;

  bool has(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return true;
    return false;
  }
  const Tensor& at(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return t;
    throw IoError("tensor record not found: " + name);
  }
  void add(std::string name, Tensor t) {
    tensors.emplace_back(std::move(name), std::move(t));
  }
};

namespace tfile_detail {

constexpr char kMagic[4] = {'U', 'R', 'T', 'C'};
constexpr std::uint32_t kVersion = 1;

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& os, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(os, v);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& is) {
  const std::uint64_t v = get_u64(is);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

}  // namespace tfile_detail

inline void save_tensor_file(const TensorFile& f, const std::string& path) {
  namespace d = tfile_detail;
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write(d::kMagic, 4);
  d::put_u32(os, d::kVersion);
  d::put_u64(os, f.config_text.size());
  os.write(f.config_text.data(),
           static_cast<std::streamsize>(f.config_text.size()));
  d::put_u64(os, f.tensors.size());
  for (const auto& [name, t] : f.tensors) {
    d::put_u64(os, name.size());
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    d::put_u32(os, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t dim : t.shape) d::put_u64(os, dim);
    for (double v : t.data) d::put_f64(os, v);
  }
  if (!os) throw IoError("write failed: " + path);
}

inline TensorFile load_tensor_file(const std::string& path) {
  namespace d = tfile_detail;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, d::kMagic, 4) != 0)
    throw IoError("not a tensor container: " + path);
  const std::uint32_t version = d::get_u32(is);
  if (version != d::kVersion)
    throw IoError("unsupported container version in " + path);
  TensorFile f;
  const std::uint64_t clen = d::get_u64(is);
  f.config_text.resize(clen);
  is.read(f.config_text.data(), static_cast<std::streamsize>(clen));
  const std::uint64_t n = d::get_u64(is);
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint64_t nlen = d::get_u64(is);
    std::string name(nlen, '\0');
    is.read(name.data(), static_cast<std::streamsize>(nlen));
    const std::uint32_t rank = d::get_u32(is);
    std::vector<std::size_t> shape(rank);
    for (auto& dim : shape) dim = d::get_u64(is);
    Tensor t(shape);
    for (double& v : t.data) v = d::get_f64(is);
    if (!is) throw IoError("truncated tensor container: " + path);
    f.add(std::move(name), std::move(t));
  }
  return f;
}

}  // namespace urecon
