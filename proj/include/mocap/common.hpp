#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace mocap {

// Error taxonomy shared by all modules. The CLI maps these onto exit codes:
// ConfigError -> 2, DataError -> 3, everything numeric/runtime -> 4.
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};
struct TrainingError : std::runtime_error {
    explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};
struct BehindCameraError : std::runtime_error {
    explicit BehindCameraError(const std::string& msg) : std::runtime_error(msg) {}
};
struct InsufficientViewsError : std::runtime_error {
    explicit InsufficientViewsError(const std::string& msg) : std::runtime_error(msg) {}
};
struct DegenerateGeometryError : std::runtime_error {
    explicit DegenerateGeometryError(const std::string& msg) : std::runtime_error(msg) {}
};
struct UndefinedMetricError : std::runtime_error {
    explicit UndefinedMetricError(const std::string& msg) : std::runtime_error(msg) {}
};
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Round half to even, the IEEE default. std::round would give 113 for 112.5.
inline long long round_half_even(double x) {
    return static_cast<long long>(std::nearbyint(x));
}

// splitmix64, used to derive independent stream seeds from one master seed.
inline uint64_t mix_seed(uint64_t seed, uint64_t salt) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::mt19937_64 make_rng(uint64_t seed, uint64_t salt = 0) {
    return std::mt19937_64(mix_seed(seed, salt));
}

// FNV-1a 64, stable across runs; used to stamp output files with a config hash.
inline uint64_t fnv1a64(const std::string& bytes) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace mocap
