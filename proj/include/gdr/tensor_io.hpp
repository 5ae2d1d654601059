#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace gdr::io {

/// Portable tensor record:
///   "GDRT" | version u8 | dtype u8 | rank u8 | rank x dim u64 LE | row-major LE payload
enum class DType : uint8_t { Float32 = 0, Float64 = 1, UInt8 = 2, Int32 = 3, Int64 = 4 };

inline constexpr uint8_t kTensorVersion = 1;
inline constexpr uint8_t kCheckpointVersion = 1;

size_t dtype_size(DType dtype);

struct RawTensor {
  DType dtype = DType::Float32;
  std::vector<int64_t> shape;
  std::vector<uint8_t> bytes;

  int64_t numel() const;
  bool operator==(const RawTensor&) const = default;

  template <typename T>
  static RawTensor from(DType dtype, std::vector<int64_t> shape, const std::vector<T>& values);
  template <typename T>
  std::vector<T> values() const;
};

void write_tensor(std::ostream& out, const RawTensor& t);
RawTensor read_tensor(std::istream& in);

/// A sample file is a sequence of GDRT records.
void write_tensor_file(const std::filesystem::path& path, const std::vector<RawTensor>& records);
std::vector<RawTensor> read_tensor_file(const std::filesystem::path& path);

/// Checkpoint container:
///   "GDRC" | version u8 | step u64 | config length u64 | config bytes |
///   entry count u64 | per entry: name length u64 | name | GDRT record
struct Checkpoint {
  uint64_t step = 0;
  std::string config;  // JSON snapshot
  std::vector<std::pair<std::string, RawTensor>> entries;

  const RawTensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  bool operator==(const Checkpoint&) const = default;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Thrown on malformed containers.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- template definitions ----

template <typename T>
RawTensor RawTensor::from(DType dtype, std::vector<int64_t> shape, const std::vector<T>& values) {
  RawTensor t;
  t.dtype = dtype;
  t.shape = std::move(shape);
  if (sizeof(T) != dtype_size(dtype) || static_cast<int64_t>(values.size()) != t.numel()) {
    throw std::invalid_argument("RawTensor::from: dtype or element count mismatch");
  }
  t.bytes.resize(values.size() * sizeof(T));
  if (!values.empty()) std::memcpy(t.bytes.data(), values.data(), t.bytes.size());
  return t;
}

template <typename T>
std::vector<T> RawTensor::values() const {
  if (sizeof(T) != dtype_size(dtype)) throw std::invalid_argument("RawTensor::values: dtype size mismatch");
  std::vector<T> out(bytes.size() / sizeof(T));
  if (!out.empty()) std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

}  // namespace gdr::io
