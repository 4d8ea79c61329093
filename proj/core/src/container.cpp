// SPDX-License-Identifier: Apache-2.0
#include "cfmimo/container.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "cfmimo/errors.hpp"

namespace cfmimo {

namespace {

constexpr char kWeightMagic[4] = {'C', 'F', 'M', 'W'};
constexpr std::uint32_t kMaxRank = 8;

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void ByteWriter::raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }

void ByteWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s);
}

ByteReader::ByteReader(std::string_view sealed_bytes) {
  if (sealed_bytes.size() < sizeof(std::uint64_t)) throw FormatError("container truncated");
  body_ = sealed_bytes.substr(0, sealed_bytes.size() - sizeof(std::uint64_t));
  std::uint64_t stored = 0;
  std::memcpy(&stored, sealed_bytes.data() + body_.size(), sizeof stored);
  if (stored != fnv1a64(body_)) throw FormatError("container checksum mismatch (corrupt or truncated)");
}

void ByteReader::take(void* out, std::size_t n) {
  if (n > body_.size() - pos_) throw FormatError("container truncated");
  std::memcpy(out, body_.data() + pos_, n);
  pos_ += n;
}

std::uint32_t ByteReader::u32() {
  std::uint32_t v = 0;
  take(&v, sizeof v);
  return v;
}

std::uint64_t ByteReader::u64() {
  std::uint64_t v = 0;
  take(&v, sizeof v);
  return v;
}

std::int64_t ByteReader::i64() {
  std::int64_t v = 0;
  take(&v, sizeof v);
  return v;
}

double ByteReader::f64() {
  double v = 0;
  take(&v, sizeof v);
  return v;
}

std::string ByteReader::bytes(std::size_t n) {
  if (n > body_.size() - pos_) throw FormatError("container truncated");
  std::string s(body_.substr(pos_, n));
  pos_ += n;
  return s;
}

std::string ByteReader::str() { return bytes(u32()); }

void ByteReader::expect_end() const {
  if (pos_ != body_.size()) throw FormatError("trailing bytes in container");
}

std::string encode_weights(const WeightFile& file) {
  ByteWriter w;
  w.raw(kWeightMagic, sizeof kWeightMagic);
  w.u32(kContainerVersion);
  w.u32(static_cast<std::uint32_t>(file.header.kind));
  w.i64(file.header.I);
  w.i64(file.header.N);
  w.i64(file.header.M);
  w.i64(file.header.K);
  w.u32(file.header.layers);
  w.u32(static_cast<std::uint32_t>(file.header.widths.size()));
  for (auto width : file.header.widths) w.i64(width);
  w.u64(file.header.seed);
  w.f64(file.header.input_scale);
  w.u32(static_cast<std::uint32_t>(file.tensors.size()));
  for (const auto& [name, tensor] : file.tensors) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(tensor.rank()));
    for (auto d : tensor.shape) w.u64(d);
    w.raw(tensor.data.data(), tensor.data.size() * sizeof(double));
  }
  w.seal();
  return w.buffer();
}

WeightFile decode_weights(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.bytes(4) != std::string_view(kWeightMagic, 4)) throw FormatError("not a weight container (bad magic)");
  if (const auto version = r.u32(); version != kContainerVersion) {
    throw FormatError("unsupported weight container version " + std::to_string(version));
  }
  WeightFile file;
  const auto kind = r.u32();
  if (kind != static_cast<std::uint32_t>(ModelKind::GNN) && kind != static_cast<std::uint32_t>(ModelKind::CNN)) {
    throw FormatError("unknown model kind " + std::to_string(kind));
  }
  file.header.kind = static_cast<ModelKind>(kind);
  file.header.I = r.i64();
  file.header.N = r.i64();
  file.header.M = r.i64();
  file.header.K = r.i64();
  file.header.layers = r.u32();
  const auto nwidths = r.u32();
  for (std::uint32_t i = 0; i < nwidths; ++i) file.header.widths.push_back(r.i64());
  file.header.seed = r.u64();
  file.header.input_scale = r.f64();
  const auto count = r.u32();
  for (std::uint32_t t = 0; t < count; ++t) {
    std::string name = r.str();
    const auto rank = r.u32();
    if (rank > kMaxRank) throw FormatError("tensor rank too large in '" + name + "'");
    ad::Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    ad::Tensor tensor(shape);
    for (auto& v : tensor.data) v = r.f64();
    file.tensors.emplace_back(std::move(name), std::move(tensor));
  }
  r.expect_end();
  return file;
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("write to '" + path + "' failed");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace cfmimo
