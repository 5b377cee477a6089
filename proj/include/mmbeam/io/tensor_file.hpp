#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "mmbeam/ad/tensor.hpp"

// Binary tensor container: "MMBT", version u8, dtype u8 (f32 = 1, f64 = 2),
// rank u8, rank x u32 dims, then the row-major payload. Little-endian.

namespace mmbeam::io {

enum class DType : std::uint8_t { F32 = 1, F64 = 2 };

inline constexpr std::uint8_t kTensorVersion = 1;

struct AnyTensor {
  DType dtype = DType::F32;
  ad::Tensor<float> f32;
  ad::Tensor<double> f64;
};

std::string encode_tensor(const ad::Tensor<float>& t);
std::string encode_tensor(const ad::Tensor<double>& t);
/// Decodes one tensor starting at `offset` and advances it. Throws DataError
/// on malformed or truncated input.
AnyTensor decode_tensor(std::string_view bytes, std::size_t& offset);

void write_tensor(const std::filesystem::path& path, const ad::Tensor<float>& t);
void write_tensor(const std::filesystem::path& path, const ad::Tensor<double>& t);
AnyTensor read_tensor(const std::filesystem::path& path);
/// Throws DataError when the stored dtype differs.
ad::Tensor<float> read_tensor_f32(const std::filesystem::path& path);
ad::Tensor<double> read_tensor_f64(const std::filesystem::path& path);

/// Writes to a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
/// Throws DataError when the file cannot be read.
std::string read_file(const std::filesystem::path& path);

/// Little-endian scalar helpers shared by the container formats.
void put_u8(std::string& out, std::uint8_t v);
void put_u16(std::string& out, std::uint16_t v);
void put_u32(std::string& out, std::uint32_t v);
void put_u64(std::string& out, std::uint64_t v);
std::uint8_t get_u8(std::string_view in, std::size_t& off);
std::uint16_t get_u16(std::string_view in, std::size_t& off);
std::uint32_t get_u32(std::string_view in, std::size_t& off);
std::uint64_t get_u64(std::string_view in, std::size_t& off);

}  // namespace mmbeam::io
