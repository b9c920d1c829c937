#pragma once

#include <cstdint>
#include <vector>

namespace ncarve {

/// Deterministic random stream. All randomness in the project flows through
/// this class so that identical seeds give byte-identical results across
/// runs and platforms (the gaussian draw is implemented here instead of
/// relying on std::normal_distribution, whose output is unspecified).
class Rng {
public:
    explicit Rng(uint64_t seed);

    uint64_t next_u64();

    /// Uniform in [0, 1).
    double uniform();
    /// Uniform in [lo, hi).
    double uniform(double lo, double hi);
    /// Uniform integer in [0, n).
    uint64_t uniform_index(uint64_t n);
    /// Standard normal via Box-Muller (second value cached).
    double normal();

    void fill_normal(std::vector<double>& out);

    /// Derive an independent child stream (stable function of seed + tag).
    Rng fork(uint64_t tag) const;

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_[4];
    uint64_t seed_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace ncarve
