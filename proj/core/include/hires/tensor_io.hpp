#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hires/tensor.hpp"

namespace hires {

// TNSR1 container: magic "TNSR", version byte = 1, dtype byte
// (0 = float32, 1 = float64), rank byte, reserved byte = 0, then
// rank x uint32 little-endian extents, then the row-major payload
// in little-endian scalars.

namespace detail {

template <typename T>
constexpr uint8_t tnsr_dtype() {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8, "float32/float64 only");
  return sizeof(T) == 4 ? 0 : 1;
}

inline void put_u32_le(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

template <typename S>
void put_scalar_le(std::string& out, S v) {
  unsigned char bytes[sizeof(S)];
  std::memcpy(bytes, &v, sizeof(S));
  if constexpr (std::endian::native == std::endian::big) {
    for (size_t i = 0; i < sizeof(S) / 2; ++i)
      std::swap(bytes[i], bytes[sizeof(S) - 1 - i]);
  }
  out.append(reinterpret_cast<const char*>(bytes), sizeof(S));
}

template <typename S>
S get_scalar_le(const unsigned char* p) {
  unsigned char bytes[sizeof(S)];
  std::memcpy(bytes, p, sizeof(S));
  if constexpr (std::endian::native == std::endian::big) {
    for (size_t i = 0; i < sizeof(S) / 2; ++i)
      std::swap(bytes[i], bytes[sizeof(S) - 1 - i]);
  }
  S v;
  std::memcpy(&v, bytes, sizeof(S));
  return v;
}

}  // namespace detail

template <typename T>
std::string tensor_to_tnsr(const Tensor<T>& t) {
  if (!t.defined()) throw std::invalid_argument("cannot serialize an undefined tensor");
  if (t.rank() > 255) throw std::invalid_argument("tensor rank exceeds format limit");
  std::string out;
  out.reserve(8 + 4 * static_cast<size_t>(t.rank()) +
              sizeof(T) * static_cast<size_t>(t.numel()));
  out += "TNSR";
  out.push_back(1);
  out.push_back(static_cast<char>(detail::tnsr_dtype<T>()));
  out.push_back(static_cast<char>(t.rank()));
  out.push_back(0);
  for (int64_t d : t.shape()) {
    if (d > UINT32_MAX) throw std::invalid_argument("extent exceeds uint32");
    detail::put_u32_le(out, static_cast<uint32_t>(d));
  }
  for (int64_t i = 0; i < t.numel(); ++i) detail::put_scalar_le(out, t[i]);
  return out;
}

// Reads either dtype and converts the payload to T.
template <typename T>
Tensor<T> tensor_from_tnsr(const std::string& bytes) {
  if (bytes.size() < 8 || bytes.compare(0, 4, "TNSR") != 0)
    throw std::runtime_error("not a TNSR stream");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (p[4] != 1) throw std::runtime_error("unsupported TNSR version");
  const uint8_t dtype = p[5];
  if (dtype > 1) throw std::runtime_error("unsupported TNSR dtype");
  const uint8_t rank = p[6];
  if (p[7] != 0) throw std::runtime_error("corrupt TNSR header");
  size_t off = 8;
  if (bytes.size() < off + 4ull * rank) throw std::runtime_error("truncated TNSR header");
  std::vector<int64_t> shape(rank);
  for (int i = 0; i < rank; ++i) {
    shape[i] = detail::get_scalar_le<uint32_t>(p + off);
    off += 4;
  }
  const int64_t n = shape_numel(shape);
  const size_t scalar = dtype == 0 ? 4 : 8;
  if (bytes.size() != off + scalar * static_cast<size_t>(n))
    throw std::runtime_error("TNSR payload size mismatch");
  Tensor<T> t(shape);
  for (int64_t i = 0; i < n; ++i) {
    if (dtype == 0)
      t[i] = static_cast<T>(detail::get_scalar_le<float>(p + off + 4 * static_cast<size_t>(i)));
    else
      t[i] = static_cast<T>(detail::get_scalar_le<double>(p + off + 8 * static_cast<size_t>(i)));
  }
  return t;
}

template <typename T>
void write_tnsr_file(const std::string& path, const Tensor<T>& t) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  const std::string bytes = tensor_to_tnsr(t);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

template <typename T>
Tensor<T> read_tnsr_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return tensor_from_tnsr<T>(bytes);
}

}  // namespace hires
