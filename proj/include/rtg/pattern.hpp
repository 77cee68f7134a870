#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "rtg/error.hpp"

namespace rtg {

namespace detail {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Per-bit random key. The hash of a pattern is the XOR of the keys of its set
/// bits, so flipping bit b changes the hash by exactly bit_key(b).
inline constexpr std::uint64_t bit_key(std::size_t bit) noexcept {
  return detail::splitmix64(0xA5A5'0000'0000'0000ULL ^ static_cast<std::uint64_t>(bit));
}

/// Packed bit vector over all hidden units, layer-major.
/// Bit u of layer l (both zero-based) lives at index l * width + u.
class ActivationPattern {
 public:
  ActivationPattern() = default;
  explicit ActivationPattern(std::size_t n_bits)
      : n_bits_(n_bits), words_((n_bits + 63) / 64, 0) {}

  std::size_t size() const noexcept { return n_bits_; }

  bool test(std::size_t bit) const noexcept {
    return (words_[bit >> 6] >> (bit & 63)) & 1ULL;
  }

  void set(std::size_t bit, bool value = true) noexcept {
    const std::uint64_t mask = 1ULL << (bit & 63);
    if (value) {
      if (!(words_[bit >> 6] & mask)) hash_ ^= bit_key(bit);
      words_[bit >> 6] |= mask;
    } else {
      if (words_[bit >> 6] & mask) hash_ ^= bit_key(bit);
      words_[bit >> 6] &= ~mask;
    }
  }

  void flip(std::size_t bit) noexcept {
    words_[bit >> 6] ^= 1ULL << (bit & 63);
    hash_ ^= bit_key(bit);
  }

  std::size_t popcount() const noexcept {
    std::size_t c = 0;
    for (auto w : words_) c += static_cast<std::size_t>(std::popcount(w));
    return c;
  }

  /// Incrementally maintained XOR-of-keys hash.
  std::uint64_t hash() const noexcept { return hash_; }

  const std::vector<std::uint64_t>& words() const noexcept { return words_; }

  /// Hex encoding: digit i holds bits 4i..4i+3 with bit 4i as its least
  /// significant bit. Always ceil(n/4) digits.
  std::string to_hex() const {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out((n_bits_ + 3) / 4, '0');
    for (std::size_t i = 0; i < out.size(); ++i) {
      unsigned nibble = 0;
      for (unsigned b = 0; b < 4; ++b) {
        const std::size_t bit = 4 * i + b;
        if (bit < n_bits_ && test(bit)) nibble |= 1u << b;
      }
      out[i] = kDigits[nibble];
    }
    return out;
  }

  static ActivationPattern from_hex(std::string_view hex, std::size_t n_bits) {
    if (hex.size() != (n_bits + 3) / 4) {
      throw MalformedFile("pattern_hex has " + std::to_string(hex.size()) + " digits, expected " +
                          std::to_string((n_bits + 3) / 4));
    }
    ActivationPattern p(n_bits);
    for (std::size_t i = 0; i < hex.size(); ++i) {
      const char c = hex[i];
      unsigned nibble;
      if (c >= '0' && c <= '9') {
        nibble = static_cast<unsigned>(c - '0');
      } else if (c >= 'a' && c <= 'f') {
        nibble = static_cast<unsigned>(c - 'a' + 10);
      } else if (c >= 'A' && c <= 'F') {
        nibble = static_cast<unsigned>(c - 'A' + 10);
      } else {
        throw MalformedFile(std::string("invalid hex digit '") + c + "' in pattern");
      }
      for (unsigned b = 0; b < 4; ++b) {
        if (!(nibble & (1u << b))) continue;
        const std::size_t bit = 4 * i + b;
        if (bit >= n_bits) throw MalformedFile("pattern_hex sets a bit beyond n_bits");
        p.set(bit);
      }
    }
    return p;
  }

  friend bool operator==(const ActivationPattern& a, const ActivationPattern& b) noexcept {
    return a.n_bits_ == b.n_bits_ && a.words_ == b.words_;
  }

 private:
  std::size_t n_bits_ = 0;
  std::vector<std::uint64_t> words_;
  std::uint64_t hash_ = 0;
};

inline std::size_t hamming_distance(const ActivationPattern& a, const ActivationPattern& b) {
  require(a.size() == b.size(), "hamming_distance: pattern lengths differ");
  std::size_t d = 0;
  const auto& wa = a.words();
  const auto& wb = b.words();
  for (std::size_t i = 0; i < wa.size(); ++i) d += static_cast<std::size_t>(std::popcount(wa[i] ^ wb[i]));
  return d;
}

struct PatternHash {
  std::size_t operator()(const ActivationPattern& p) const noexcept {
    return static_cast<std::size_t>(detail::splitmix64(p.hash()));
  }
};

}  // namespace rtg
