#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace sdagrin {

// Seeded random stream with a fully specified algorithm so other implementations can
// reproduce it draw for draw:
//   engine   std::mt19937_64 seeded with splitmix64(seed) (engine output is fixed by the standard)
//   uniform  (u64 >> 11) * 2^-53, in [0, 1)
//   normal   Box-Muller on two uniforms u1, u2: sqrt(-2 ln(1 - u1)) * cos(2 pi u2),
//            the paired sin() draw is cached and returned next
//   index    floor(uniform * n)
// std:: distributions are not used because their output is implementation-defined.
class Rng {
   public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    // Independent stream derived from (seed, stream id).
    static Rng stream(std::uint64_t seed, std::uint64_t stream_id) {
        return Rng(splitmix64(seed ^ splitmix64(stream_id + 0x632be59bd9b4e019ULL)));
    }

    std::uint64_t next_u64() { return engine_(); }

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log1p(-u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    bool bernoulli(double p) { return uniform() < p; }

    std::size_t index(std::size_t n) {
        auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
        return i < n ? i : n - 1;
    }

    // Fisher-Yates, walking from the back.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    static std::uint64_t splitmix64(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

   private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace sdagrin
