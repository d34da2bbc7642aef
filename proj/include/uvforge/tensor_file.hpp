#pragma once

#include <cstring>
#include <fstream>

#include "uvforge/core.hpp"

// UVTF binary tensor container: magic "UVTF", version u16, rank u16,
// rank x u32 dims, then little-endian float32 payload, row-major.
namespace uvforge::tensor_file {

constexpr uint16_t kVersion = 1;

struct Tensor {
  std::vector<uint32_t> dims;
  std::vector<float> data;

  size_t element_count() const {
    size_t n = 1;
    for (uint32_t d : dims) n *= d;
    return n;
  }
};

namespace detail {

inline void put_u16(std::ostream& os, uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

inline void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f32(std::ostream& os, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

inline uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

inline uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline float get_f32(std::istream& is) {
  const uint32_t bits = get_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace detail

inline void write(const std::string& path, const Tensor& tensor) {
  require(tensor.data.size() == tensor.element_count(), "tensor_file::write: payload/dims mismatch");
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "tensor_file::write: cannot open " + path);
  os.write("UVTF", 4);
  detail::put_u16(os, kVersion);
  detail::put_u16(os, static_cast<uint16_t>(tensor.dims.size()));
  for (uint32_t d : tensor.dims) detail::put_u32(os, d);
  for (float v : tensor.data) detail::put_f32(os, v);
  require(os.good(), "tensor_file::write: write failed for " + path);
}

inline Tensor read(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "tensor_file::read: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  require(is.good() && std::memcmp(magic, "UVTF", 4) == 0, "tensor_file::read: bad magic in " + path);
  const uint16_t version = detail::get_u16(is);
  require(version == kVersion, "tensor_file::read: unsupported version in " + path);
  const uint16_t rank = detail::get_u16(is);
  Tensor t;
  t.dims.resize(rank);
  for (int i = 0; i < rank; ++i) t.dims[i] = detail::get_u32(is);
  t.data.resize(t.element_count());
  for (size_t i = 0; i < t.data.size(); ++i) t.data[i] = detail::get_f32(is);
  require(is.good(), "tensor_file::read: truncated payload in " + path);
  return t;
}

// Eigen adaptors. Matrices are stored row-major in the file.

inline void write_vector(const std::string& path, const VectorXd& v) {
  Tensor t;
  t.dims = {static_cast<uint32_t>(v.size())};
  t.data.resize(v.size());
  for (long i = 0; i < v.size(); ++i) t.data[i] = static_cast<float>(v[i]);
  write(path, t);
}

inline VectorXd read_vector(const std::string& path) {
  const Tensor t = read(path);
  require(t.dims.size() == 1, "tensor_file::read_vector: expected rank 1 in " + path);
  VectorXd v(t.dims[0]);
  for (size_t i = 0; i < t.data.size(); ++i) v[static_cast<long>(i)] = t.data[i];
  return v;
}

inline void write_matrix(const std::string& path, const MatrixXd& m) {
  Tensor t;
  t.dims = {static_cast<uint32_t>(m.rows()), static_cast<uint32_t>(m.cols())};
  t.data.resize(static_cast<size_t>(m.size()));
  size_t k = 0;
  for (long r = 0; r < m.rows(); ++r)
    for (long c = 0; c < m.cols(); ++c) t.data[k++] = static_cast<float>(m(r, c));
  write(path, t);
}

inline MatrixXd read_matrix(const std::string& path) {
  const Tensor t = read(path);
  require(t.dims.size() == 2, "tensor_file::read_matrix: expected rank 2 in " + path);
  MatrixXd m(t.dims[0], t.dims[1]);
  size_t k = 0;
  for (long r = 0; r < m.rows(); ++r)
    for (long c = 0; c < m.cols(); ++c) m(r, c) = t.data[k++];
  return m;
}

}  // namespace uvforge::tensor_file
