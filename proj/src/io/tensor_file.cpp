#include "mmbeam/io/tensor_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <unistd.h>

#include "mmbeam/common.hpp"

namespace mmbeam::io {

namespace {

constexpr char kMagic[4] = {'M', 'M', 'B', 'T'};

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(std::string_view in, std::size_t& off) {
  if (off + sizeof(U) > in.size()) throw DataError("truncated binary data");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(in[off + i])) << (8 * i);
  off += sizeof(U);
  return v;
}

template <typename T>
std::string encode_impl(const ad::Tensor<T>& t, DType code) {
  std::string out(kMagic, 4);
  put_u8(out, kTensorVersion);
  put_u8(out, static_cast<std::uint8_t>(code));
  if (t.rank() > 255) throw ArgumentError("tensor rank exceeds 255");
  put_u8(out, static_cast<std::uint8_t>(t.rank()));
  for (int d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  out.reserve(out.size() + t.size() * sizeof(T));
  for (T v : t.vec()) put_le<Bits>(out, std::bit_cast<Bits>(v));
  return out;
}

template <typename T>
ad::Tensor<T> decode_payload(std::string_view in, std::size_t& off, const ad::Shape& shape) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  const std::size_t n = ad::numel(shape);
  if (off + n * sizeof(T) > in.size()) throw DataError("tensor payload truncated");
  std::vector<T> data(n);
  for (auto& v : data) v = std::bit_cast<T>(get_le<Bits>(in, off));
  return ad::Tensor<T>(shape, std::move(data));
}

}  // namespace

void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }
void put_u16(std::string& out, std::uint16_t v) { put_le(out, v); }
void put_u32(std::string& out, std::uint32_t v) { put_le(out, v); }
void put_u64(std::string& out, std::uint64_t v) { put_le(out, v); }
std::uint8_t get_u8(std::string_view in, std::size_t& off) { return get_le<std::uint8_t>(in, off); }
std::uint16_t get_u16(std::string_view in, std::size_t& off) { return get_le<std::uint16_t>(in, off); }
std::uint32_t get_u32(std::string_view in, std::size_t& off) { return get_le<std::uint32_t>(in, off); }
std::uint64_t get_u64(std::string_view in, std::size_t& off) { return get_le<std::uint64_t>(in, off); }

std::string encode_tensor(const ad::Tensor<float>& t) { return encode_impl(t, DType::F32); }
std::string encode_tensor(const ad::Tensor<double>& t) { return encode_impl(t, DType::F64); }

AnyTensor decode_tensor(std::string_view in, std::size_t& off) {
  if (off + 4 > in.size() || std::memcmp(in.data() + off, kMagic, 4) != 0) throw DataError("bad tensor magic");
  off += 4;
  const auto version = get_u8(in, off);
  if (version != kTensorVersion) throw DataError("unsupported tensor version " + std::to_string(version));
  const auto code = get_u8(in, off);
  const auto rank = get_u8(in, off);
  ad::Shape shape;
  for (int i = 0; i < rank; ++i) {
    const std::uint32_t d = get_u32(in, off);
    if (d > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) throw DataError("tensor dimension too large");
    shape.push_back(static_cast<int>(d));
  }
  AnyTensor t;
  if (code == static_cast<std::uint8_t>(DType::F32)) {
    t.dtype = DType::F32;
    t.f32 = decode_payload<float>(in, off, shape);
  } else if (code == static_cast<std::uint8_t>(DType::F64)) {
    t.dtype = DType::F64;
    t.f64 = decode_payload<double>(in, off, shape);
  } else {
    throw DataError("unknown tensor dtype code " + std::to_string(code));
  }
  return t;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp" + std::to_string(::getpid());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_tensor(const std::filesystem::path& path, const ad::Tensor<float>& t) { write_file_atomic(path, encode_tensor(t)); }
void write_tensor(const std::filesystem::path& path, const ad::Tensor<double>& t) { write_file_atomic(path, encode_tensor(t)); }

AnyTensor read_tensor(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  std::size_t off = 0;
  try {
    AnyTensor t = decode_tensor(bytes, off);
    if (off != bytes.size()) throw DataError("trailing bytes");
    return t;
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

ad::Tensor<float> read_tensor_f32(const std::filesystem::path& path) {
  AnyTensor t = read_tensor(path);
  if (t.dtype != DType::F32) throw DataError(path.string() + ": expected a 32-bit float tensor");
  return std::move(t.f32);
}

ad::Tensor<double> read_tensor_f64(const std::filesystem::path& path) {
  AnyTensor t = read_tensor(path);
  if (t.dtype != DType::F64) throw DataError(path.string() + ": expected a 64-bit float tensor");
  return std::move(t.f64);
}

}  // namespace mmbeam::io
