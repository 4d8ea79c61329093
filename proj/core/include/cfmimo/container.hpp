// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cfmimo/autodiff/tensor.hpp"

namespace cfmimo {

// Binary weight container shared by the GNN and CNN models.
//
//   "CFMW"                    4 bytes magic
//   u32 version               currently 1
//   u32 kind                  1 = GNN, 2 = CNN
//   i64 I, N, M, K
//   u32 L                     graph layers (0 for CNN)
//   u32 count, i64 widths[count]
//   u64 seed
//   f64 input_scale           feature scale applied to channel estimates
//   u32 tensor count, then per tensor:
//     u32 name length, name bytes, u32 rank, u64 dims[rank], f64 data[...]
//   u64 FNV-1a hash of every preceding byte
//
// Integers and doubles are little-endian; tensor data is row-major.
enum class ModelKind : std::uint32_t { GNN = 1, CNN = 2 };

inline constexpr std::uint32_t kContainerVersion = 1;

struct WeightHeader {
  ModelKind kind = ModelKind::GNN;
  std::int64_t I = 0, N = 0, M = 0, K = 0;
  std::uint32_t layers = 0;
  std::vector<std::int64_t> widths;
  std::uint64_t seed = 0;
  double input_scale = 1.0;

  bool operator==(const WeightHeader&) const = default;
};

struct WeightFile {
  WeightHeader header;
  std::vector<std::pair<std::string, ad::Tensor>> tensors;
};

std::uint64_t fnv1a64(std::string_view bytes);

std::string encode_weights(const WeightFile& file);
// Throws FormatError on bad magic/version, truncation or checksum mismatch.
WeightFile decode_weights(std::string_view bytes);

void write_file(const std::string& path, std::string_view bytes);
std::string read_file(const std::string& path);

class ByteWriter {
 public:
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void i64(std::int64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void bytes(std::string_view s) { buf_.append(s); }
  void str(std::string_view s);
  void raw(const void* p, std::size_t n);

  // Appends the FNV-1a hash of everything written so far.
  void seal() { u64(fnv1a64(buf_)); }
  const std::string& buffer() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  // Verifies the trailing checksum before any field is read.
  explicit ByteReader(std::string_view sealed_bytes);

  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64();
  double f64();
  std::string bytes(std::size_t n);
  std::string str();
  void expect_end() const;

 private:
  void take(void* out, std::size_t n);
  std::string_view body_;
  std::size_t pos_ = 0;
};

}  // namespace cfmimo
