#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace vcat {

/// All randomness in the toolkit funnels through Rng instances derived from
/// one root seed. Derivation is stateless: derive(seed, "aug", step, k)
/// always yields the same stream, which is what makes checkpoint resume and
/// per-surrogate parallelism reproducible.
class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    double uniform() { return unit_(gen_); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * unit_(gen_); }
    double normal() { return normal_(gen_); }
    /// Uniform integer in [0, n).
    uint64_t uniform_int(uint64_t n) {
        std::uniform_int_distribution<uint64_t> d(0, n - 1);
        return d(gen_);
    }

    std::mt19937_64& engine() { return gen_; }

  private:
    std::mt19937_64 gen_;
    std::uniform_real_distribution<double> unit_{0.0, 1.0};
    std::normal_distribution<double> normal_{0.0, 1.0};
};

// splitmix64; used only for seed derivation.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t root, std::string_view tag) {
    uint64_t h = root;
    for (char ch : tag) h = mix64(h ^ static_cast<uint64_t>(static_cast<unsigned char>(ch)));
    return h;
}

inline uint64_t derive_seed(uint64_t root, std::string_view tag, uint64_t a) {
    return mix64(derive_seed(root, tag) ^ mix64(a));
}

inline uint64_t derive_seed(uint64_t root, std::string_view tag, uint64_t a, uint64_t b) {
    return mix64(derive_seed(root, tag, a) ^ mix64(b + 0x51ed270b0a3f29ULL));
}

}  // namespace vcat
