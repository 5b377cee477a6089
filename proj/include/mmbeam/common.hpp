#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mmbeam {

inline constexpr int kNumBeams = 64;
inline constexpr int kNumInstances = 5;
inline constexpr int kNumGpsInstances = 2;

// Error taxonomy. The CLI maps these onto exit codes.
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DegenerateGeometryError : ArgumentError {
  using ArgumentError::ArgumentError;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, std::string_view what) {
  if (!cond) throw ArgumentError(std::string(what));
}

// Seed derivation: every random stream is seeded from the root seed, a
// purpose tag and an index, mixed through splitmix64.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t tag, std::uint64_t index = 0);

namespace seed_tag {
inline constexpr std::uint64_t kSynthSample = 0x53594e54;  // "SYNT"
inline constexpr std::uint64_t kSceneStatic = 0x5343454e;
inline constexpr std::uint64_t kSplit = 0x53504c54;
inline constexpr std::uint64_t kShuffle = 0x53485546;
inline constexpr std::uint64_t kInit = 0x494e4954;
inline constexpr std::uint64_t kAugment = 0x41554720;
inline constexpr std::uint64_t kDropout = 0x44524f50;
inline constexpr std::uint64_t kPrepAugment = 0x50524550;
}  // namespace seed_tag

using Rng = std::mt19937_64;

// Log verbosity comes from MMBEAM_LOG (0 = quiet, 1 = info, 2 = debug).
int log_level();
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

}  // namespace mmbeam
