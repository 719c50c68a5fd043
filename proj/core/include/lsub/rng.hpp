#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace lsub {

using Rng = std::mt19937_64;

/// Derives an independent 64-bit seed for a named sub-stream of `root`.
/// Used so that data order, coordinate sampling, pair sampling, label noise
/// etc. never share an engine even though they come from one root seed.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream);
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index);

inline Rng make_rng(std::uint64_t root, std::string_view stream) {
    return Rng(derive_seed(root, stream));
}

namespace streams {
inline constexpr std::string_view init = "init";
inline constexpr std::string_view data_order = "data_order";
inline constexpr std::string_view coord = "coord";
inline constexpr std::string_view pair = "pair";
inline constexpr std::string_view label_noise = "label_noise";
inline constexpr std::string_view data = "data";
inline constexpr std::string_view eval = "eval";
} // namespace streams

} // namespace lsub
