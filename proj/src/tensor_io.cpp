#include "gdr/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <fstream>
#include <istream>
#include <ostream>

namespace gdr::io {

static_assert(std::endian::native == std::endian::little, "payloads are written in host order");

namespace {

constexpr std::array<char, 4> kTensorMagic{'G', 'D', 'R', 'T'};
constexpr std::array<char, 4> kCheckpointMagic{'G', 'D', 'R', 'C'};
constexpr uint64_t kMaxName = 1u << 16;

void put_u8(std::ostream& out, uint8_t v) { out.put(static_cast<char>(v)); }

void put_u64(std::ostream& out, uint64_t v) {
  std::array<char, 8> buf{};
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf.data(), 8);
}

void need(std::istream& in, const char* what) {
  if (!in) throw FormatError(std::string("truncated stream while reading ") + what);
}

uint8_t get_u8(std::istream& in, const char* what) {
  const int c = in.get();
  need(in, what);
  return static_cast<uint8_t>(c);
}

uint64_t get_u64(std::istream& in, const char* what) {
  std::array<unsigned char, 8> buf{};
  in.read(reinterpret_cast<char*>(buf.data()), 8);
  need(in, what);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

void expect_magic(std::istream& in, const std::array<char, 4>& magic) {
  std::array<char, 4> got{};
  in.read(got.data(), 4);
  need(in, "magic");
  if (got != magic) throw FormatError("bad magic: expected " + std::string(magic.data(), 4));
}

}  // namespace

size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::Float32: return 4;
    case DType::Float64: return 8;
    case DType::UInt8: return 1;
    case DType::Int32: return 4;
    case DType::Int64: return 8;
  }
  throw FormatError("unknown dtype code " + std::to_string(static_cast<int>(dtype)));
}

int64_t RawTensor::numel() const {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw std::invalid_argument("negative dimension");
    n *= d;
  }
  return n;
}

void write_tensor(std::ostream& out, const RawTensor& t) {
  if (t.shape.size() > 255) throw std::invalid_argument("write_tensor: rank exceeds 255");
  if (static_cast<uint64_t>(t.numel()) * dtype_size(t.dtype) != t.bytes.size()) {
    throw std::invalid_argument("write_tensor: payload size does not match shape");
  }
  out.write(kTensorMagic.data(), 4);
  put_u8(out, kTensorVersion);
  put_u8(out, static_cast<uint8_t>(t.dtype));
  put_u8(out, static_cast<uint8_t>(t.shape.size()));
  for (int64_t d : t.shape) put_u64(out, static_cast<uint64_t>(d));
  out.write(reinterpret_cast<const char*>(t.bytes.data()), static_cast<std::streamsize>(t.bytes.size()));
  if (!out) throw std::runtime_error("write_tensor: stream error");
}

RawTensor read_tensor(std::istream& in) {
  expect_magic(in, kTensorMagic);
  const uint8_t version = get_u8(in, "version");
  if (version != kTensorVersion) throw FormatError("unsupported GDRT version " + std::to_string(version));
  RawTensor t;
  t.dtype = static_cast<DType>(get_u8(in, "dtype"));
  const size_t elem = dtype_size(t.dtype);
  const uint8_t rank = get_u8(in, "rank");
  uint64_t numel = 1;
  for (uint8_t i = 0; i < rank; ++i) {
    const uint64_t d = get_u64(in, "shape");
    if (d > (uint64_t{1} << 40)) throw FormatError("implausible dimension");
    t.shape.push_back(static_cast<int64_t>(d));
    numel *= d;
    if (numel > (uint64_t{1} << 40)) throw FormatError("implausible tensor size");
  }
  t.bytes.resize(numel * elem);
  in.read(reinterpret_cast<char*>(t.bytes.data()), static_cast<std::streamsize>(t.bytes.size()));
  need(in, "payload");
  return t;
}

void write_tensor_file(const std::filesystem::path& path, const std::vector<RawTensor>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  for (const auto& r : records) write_tensor(out, r);
}

std::vector<RawTensor> read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  std::vector<RawTensor> records;
  while (in.peek() != std::char_traits<char>::eof()) records.push_back(read_tensor(in));
  return records;
}

const RawTensor& Checkpoint::at(const std::string& name) const {
  for (const auto& [n, t] : entries)
    if (n == name) return t;
  throw std::out_of_range("checkpoint has no entry '" + name + "'");
}

bool Checkpoint::contains(const std::string& name) const {
  return std::any_of(entries.begin(), entries.end(), [&](const auto& e) { return e.first == name; });
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
    out.write(kCheckpointMagic.data(), 4);
    put_u8(out, kCheckpointVersion);
    put_u64(out, ckpt.step);
    put_u64(out, ckpt.config.size());
    out.write(ckpt.config.data(), static_cast<std::streamsize>(ckpt.config.size()));
    put_u64(out, ckpt.entries.size());
    for (const auto& [name, t] : ckpt.entries) {
      put_u64(out, name.size());
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_tensor(out, t);
    }
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  expect_magic(in, kCheckpointMagic);
  const uint8_t version = get_u8(in, "version");
  if (version != kCheckpointVersion) throw FormatError("unsupported GDRC version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.step = get_u64(in, "step");
  const uint64_t config_len = get_u64(in, "config length");
  if (config_len > (uint64_t{1} << 30)) throw FormatError("implausible config length");
  ckpt.config.resize(config_len);
  in.read(ckpt.config.data(), static_cast<std::streamsize>(config_len));
  need(in, "config");
  const uint64_t count = get_u64(in, "entry count");
  for (uint64_t i = 0; i < count; ++i) {
    const uint64_t len = get_u64(in, "name length");
    if (len > kMaxName) throw FormatError("implausible entry name length");
    std::string name(len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(len));
    need(in, "entry name");
    ckpt.entries.emplace_back(std::move(name), read_tensor(in));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after checkpoint");
  return ckpt;
}

}  // namespace gdr::io
