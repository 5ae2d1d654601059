#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "gdr/module_io.hpp"
#include "gdr/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace gdr::io;

namespace {

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("gdr_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(TensorIo, HeaderLayoutIsExact) {
  const auto t = RawTensor::from<int32_t>(DType::Int32, {2, 1}, {1, -2});
  std::ostringstream out;
  write_tensor(out, t);
  const std::string b = out.str();
  const std::string expected = std::string("GDRT") + '\x01' + '\x03' + '\x02' +
                               std::string("\x02\0\0\0\0\0\0\0", 8) + std::string("\x01\0\0\0\0\0\0\0", 8) +
                               std::string("\x01\0\0\0\xfe\xff\xff\xff", 8);
  EXPECT_EQ(b, expected);
}

TEST(TensorIo, RoundTripEveryDtype) {
  std::stringstream s;
  const std::vector<RawTensor> in = {
      RawTensor::from<float>(DType::Float32, {2, 3}, {1.f, -0.f, 3.5f, 1e-30f, -7.f, 0.1f}),
      RawTensor::from<double>(DType::Float64, {1}, {3.141592653589793}),
      RawTensor::from<uint8_t>(DType::UInt8, {4}, {0, 1, 254, 255}),
      RawTensor::from<int64_t>(DType::Int64, {}, {-5}),
      RawTensor::from<int32_t>(DType::Int32, {0, 3}, {}),
  };
  for (const auto& t : in) write_tensor(s, t);
  for (const auto& t : in) EXPECT_EQ(read_tensor(s), t);
}

TEST(TensorIo, RejectsCorruptInput) {
  std::stringstream bad_magic("GDRX\x01\x00\x00");
  EXPECT_THROW(read_tensor(bad_magic), FormatError);
  std::stringstream truncated;
  write_tensor(truncated, RawTensor::from<float>(DType::Float32, {4}, {1, 2, 3, 4}));
  std::string bytes = truncated.str();
  std::stringstream cut(bytes.substr(0, bytes.size() - 2));
  EXPECT_THROW(read_tensor(cut), FormatError);
  std::string wrong_version = bytes;
  wrong_version[4] = 9;
  std::stringstream v(wrong_version);
  EXPECT_THROW(read_tensor(v), FormatError);
  std::string wrong_dtype = bytes;
  wrong_dtype[5] = 42;
  std::stringstream d(wrong_dtype);
  EXPECT_THROW(read_tensor(d), FormatError);
}

TEST(TensorIo, FromRejectsMismatch) {
  EXPECT_THROW(RawTensor::from<float>(DType::Float32, {3}, {1.f, 2.f}), std::invalid_argument);
  EXPECT_THROW(RawTensor::from<float>(DType::Float64, {2}, {1.f, 2.f}), std::invalid_argument);
}

TEST(TensorIo, MultiRecordFile) {
  const auto dir = temp_dir("records");
  const std::vector<RawTensor> recs = {RawTensor::from<uint8_t>(DType::UInt8, {2, 2, 3}, std::vector<uint8_t>(12, 7)),
                                       RawTensor::from<int32_t>(DType::Int32, {2, 2}, {0, 1, 1, 2})};
  write_tensor_file(dir / "a.gdrt", recs);
  EXPECT_EQ(read_tensor_file(dir / "a.gdrt"), recs);
  fs::remove_all(dir);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  const auto dir = temp_dir("ckpt");
  std::mt19937_64 rng(3);
  std::normal_distribution<float> normal;
  std::vector<float> w(1000);
  for (auto& x : w) x = normal(rng);
  Checkpoint c;
  c.step = 123456789012345ULL;
  c.config = R"({"quantizer.groups":2,"name":"x"})";
  c.entries.emplace_back("encoder.weight", RawTensor::from(DType::Float32, {10, 100}, w));
  c.entries.emplace_back("step_hist", RawTensor::from<int64_t>(DType::Int64, {3}, {1, 2, 3}));
  save_checkpoint(dir / "a.gdrc", c);
  const Checkpoint back = load_checkpoint(dir / "a.gdrc");
  EXPECT_EQ(back, c);
  save_checkpoint(dir / "b.gdrc", back);
  EXPECT_EQ(slurp(dir / "a.gdrc"), slurp(dir / "b.gdrc"));
  EXPECT_EQ(slurp(dir / "a.gdrc").substr(0, 5), std::string("GDRC\x01"));
  EXPECT_THROW(back.at("missing"), std::out_of_range);
  fs::remove_all(dir);
}

TEST(Checkpoint, TrailingBytesRejected) {
  const auto dir = temp_dir("ckpt_trailing");
  save_checkpoint(dir / "a.gdrc", Checkpoint{});
  std::ofstream(dir / "a.gdrc", std::ios::app | std::ios::binary) << "x";
  EXPECT_THROW(load_checkpoint(dir / "a.gdrc"), FormatError);
  fs::remove_all(dir);
}

TEST(Checkpoint, ModuleRoundTrip) {
  torch::manual_seed(0);
  torch::nn::Linear a(4, 3), b(4, 3);
  Checkpoint c;
  append_module(c, *a, "lin.");
  ASSERT_TRUE(c.contains("lin.weight"));
  load_module(c, *b, "lin.");
  EXPECT_TRUE(torch::equal(a->weight, b->weight));
  EXPECT_TRUE(torch::equal(a->bias, b->bias));
  torch::nn::Linear wrong(5, 3);
  EXPECT_THROW(load_module(c, *wrong, "lin."), FormatError);
  EXPECT_THROW(load_module(c, *b, "other."), std::out_of_range);
}
