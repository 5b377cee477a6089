#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "mmbeam/ad/tensor.hpp"

// Checkpoint container: "MMBC", version u8, u32 metadata length, metadata
// text, u32 entry count, then per entry a u16 name length, the name
// ("raw/<param>" or "ema/<param>") and an encoded tensor.

namespace mmbeam::io {

struct Checkpoint {
  std::uint64_t step = 0;
  int epoch = 0;
  std::string config_text;  // resolved run configuration
  std::map<std::string, ad::Tensor<float>> raw;
  std::map<std::string, ad::Tensor<float>> ema;  // empty when EMA is off

  /// Metadata block: step, epoch, EMA flag and config hash lines, a
  /// separator line, then the config text.
  std::string metadata() const;
};

/// FNV-1a 64-bit hash, hex encoded.
std::string config_hash(const std::string& text);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
/// Throws DataError when missing, malformed, or the config hash disagrees.
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace mmbeam::io
