#pragma once

#include <cstdint>

namespace valr {

// SplitMix64 finalizer. The whole project draws randomness through this one
// generator so that every artifact (weights, corpora, random projections) is
// reproducible bit-for-bit across runs and platforms: only integer ops and
// IEEE-exact float arithmetic are involved.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Counter-based stream: draw i of stream `seed` is splitmix64(seed ^ golden*i).
// Stateless access for the frozen random-projection encoder; the stateful Rng
// below walks the same stream.
inline uint64_t counter_u64(uint64_t seed, uint64_t counter) {
    return splitmix64(seed + counter * 0x9e3779b97f4a7c15ull);
}

inline double counter_u01(uint64_t seed, uint64_t counter) {
    // top 53 bits -> [0,1); exact scaling by 2^-53
    return double(counter_u64(seed, counter) >> 11) * 0x1.0p-53;
}

// Approximate standard normal via an Irwin-Hall 12-sum. Uses only addition of
// exactly-representable uniforms, so results are identical on every IEEE-754
// platform (unlike Box-Muller, which depends on libm's log/cos rounding).
inline double counter_gauss(uint64_t seed, uint64_t counter) {
    double s = 0.0;
    for (uint64_t k = 0; k < 12; ++k) s += counter_u01(seed, counter * 12 + k);
    return s - 6.0;
}

class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed) {}

    uint64_t next_u64() { return counter_u64(seed_, ctr_++); }
    double u01() { return counter_u01(seed_, ctr_++); }
    double gauss() { return counter_gauss(seed_, ctr_++); }

    // uniform in [lo, hi], unbiased via 64x64 multiply-shift
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t span = uint64_t(hi - lo) + 1;
        uint64_t r = next_u64();
        return lo + int64_t((unsigned __int128)(r) * span >> 64);
    }

    // Documented stream-splitting rule: child seed = splitmix64(parent_seed
    // xor splitmix64(stream_id + 1)). Children are independent of the parent's
    // draw position.
    Rng split(uint64_t stream_id) const {
        return Rng(splitmix64(seed_ ^ splitmix64(stream_id + 1)));
    }

    uint64_t seed() const { return seed_; }

private:
    uint64_t seed_;
    uint64_t ctr_ = 0;
};

}  // namespace valr
