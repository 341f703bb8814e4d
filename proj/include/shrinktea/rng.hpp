#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

#include "shrinktea/errors.hpp"

namespace shrinktea {

inline std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

using Engine = std::mt19937_64;

// Independent generator for one purpose ("init.teacher", "shuffle.student", ...)
// derived from the master seed, so enabling one consumer never shifts another.
inline Engine substream(std::uint64_t master_seed, std::string_view purpose) {
  const std::uint64_t tag = fnv1a64(purpose);
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
  return Engine(seq);
}

inline std::string engine_state(const Engine& engine) {
  std::ostringstream oss;
  oss << engine;
  return oss.str();
}

inline Engine engine_from_state(const std::string& state) {
  Engine engine;
  std::istringstream iss(state);
  iss >> engine;
  if (iss.fail()) throw IoError("corrupt RNG state");
  return engine;
}

inline double standard_normal(Engine& engine) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(engine);
}

}  // namespace shrinktea
