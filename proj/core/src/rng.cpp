#include "lsub/rng.hpp"

namespace lsub {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace

std::uint64_t derive_seed(std::uint64_t root, std::string_view stream) {
    // FNV-1a over the stream name, then mixed with the root.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : stream) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return splitmix64(splitmix64(root) ^ h);
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
    return splitmix64(splitmix64(root) + 0x632be59bd9b4e019ULL * (index + 1));
}

} // namespace lsub
