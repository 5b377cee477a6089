#include "mmbeam/common.hpp"

#include <cstdlib>
#include <iostream>

namespace mmbeam {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t tag, std::uint64_t index) {
  return splitmix64(splitmix64(root ^ splitmix64(tag)) ^ index);
}

int log_level() {
  static const int level = [] {
    const char* env = std::getenv("MMBEAM_LOG");
    return env ? std::atoi(env) : 1;
  }();
  return level;
}

void log_info(const std::string& msg) {
  if (log_level() >= 1) std::cerr << "[mmbeam] " << msg << '\n';
}

void log_debug(const std::string& msg) {
  if (log_level() >= 2) std::cerr << "[mmbeam:debug] " << msg << '\n';
}

}  // namespace mmbeam
