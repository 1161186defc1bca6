#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace fediot {

// 64-bit FNV-1a. Used for config fingerprints, model hashes and manifest hashes.
class Fnv1a {
 public:
  void update(std::span<const std::uint8_t> bytes) noexcept {
    for (auto b : bytes) {
      state_ ^= b;
      state_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view s) noexcept {
    update({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
  }
  template <typename T>
  void update_pod(const T& value) noexcept {
    update({reinterpret_cast<const std::uint8_t*>(&value), sizeof(T)});
  }
  std::uint64_t digest() const noexcept { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
  Fnv1a h;
  h.update(bytes);
  return h.digest();
}

std::string hex64(std::uint64_t value);

// SplitMix64 finalizer; derives independent stream seeds from (seed, salt).
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) noexcept {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace fediot
