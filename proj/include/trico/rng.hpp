#pragma once

#include <cstdint>
#include <initializer_list>

namespace trico {

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derives a child seed from a base seed and a path of integer coordinates
/// (step, row, pass, ...). Equal paths give equal seeds regardless of the order
/// in which other streams were consumed.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t s = mix64(base);
    for (std::uint64_t p : path) s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
    return s;
}

/// Counter-based random stream: value n is a pure function of (key, n).
class RngStream {
public:
    constexpr explicit RngStream(std::uint64_t key) noexcept : key_(key) {}

    constexpr std::uint64_t next_u64() noexcept { return mix64(key_ ^ mix64(counter_++)); }

    /// Uniform in [0, 1) with 53 random bits.
    constexpr double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    constexpr std::uint64_t key() const noexcept { return key_; }
    constexpr std::uint64_t counter() const noexcept { return counter_; }

    constexpr RngStream child(std::initializer_list<std::uint64_t> path) const noexcept {
        return RngStream(derive_seed(key_, path));
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace trico
