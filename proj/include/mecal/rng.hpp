#ifndef MECAL_RNG_HPP
#define MECAL_RNG_HPP

#include <cstdint>
#include <string_view>

namespace mecal {

/**
 * Deterministic, splittable random stream.
 *
 * The algorithm is fixed so that runs reproduce across compilers and
 * standard libraries (std::normal_distribution is implementation-defined):
 *
 *  - a stream key is `splitmix64(seed ^ fnv1a64(label))`;
 *  - `split(i)` derives the child key `splitmix64(key ^ splitmix64(i + 1))`;
 *  - the generator is xoshiro256** with its state filled by four successive
 *    splitmix64 outputs starting from the key;
 *  - `uniform()` is `(next() >> 11) * 2^-53`, in [0, 1);
 *  - `normal()` is the Box-Muller transform on `1 - uniform()` and
 *    `uniform()`, returning the cosine branch first and caching the sine
 *    branch for the next call.
 */
class Rng {
public:
    explicit Rng(std::uint64_t key);

    /// Stream identified by a run seed and a label such as "train" or "bootstrap".
    static Rng stream(std::uint64_t seed, std::string_view label);

    /// Independent child stream, e.g. one per replication.
    Rng split(std::uint64_t index) const;

    std::uint64_t key() const { return key_; }

    std::uint64_t next_u64();
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Uniform integer in [0, bound). `bound` must be positive.
    std::uint64_t below(std::uint64_t bound);

private:
    std::uint64_t key_;
    std::uint64_t state_[4];
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes);

/// Convenience wrapper matching the stream-per-label interface.
inline Rng seeded_rng(std::uint64_t seed, std::string_view label) { return Rng::stream(seed, label); }

} // namespace mecal

#endif
