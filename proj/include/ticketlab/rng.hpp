#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace ticketlab {

// Deterministic random stream. All sampling goes through this class so that
// runs are reproducible from declared seeds alone; std:: distributions are
// avoided because their algorithms differ between standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed);

    uint64_t next_u64();

    // uniform in [0, 1)
    double uniform();
    double uniform(double lo, double hi);

    // standard normal via Box-Muller
    double normal();
    double normal(double mean, double stddev);

    // uniform integer in [0, n)
    size_t index(size_t n);

    bool bernoulli(double p);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (size_t i = v.size() - 1; i > 0; --i) {
            size_t j = index(i + 1);
            std::swap(v[i], v[j]);
        }
    }

    // k distinct indices drawn uniformly from [0, n), ascending order
    std::vector<size_t> sample_without_replacement(size_t n, size_t k);

    // Child stream keyed by a tag; independent of draws made on the parent.
    Rng split(std::string_view tag) const;
    Rng split(uint64_t tag) const;

private:
    uint64_t state_;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

// Stable 64-bit FNV-1a, used for config hashes and seed derivation.
uint64_t fnv1a64(std::string_view data);
uint64_t hash_combine(uint64_t a, uint64_t b);

} // namespace ticketlab
