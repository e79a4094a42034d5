#include "ticketlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ticketlab {

namespace {

// splitmix64: full-period 2^64 generator, also used to stretch seeds
uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace

Rng::Rng(uint64_t seed) : state_(seed) {
    // decorrelate trivially related seeds (0, 1, 2, ...)
    state_ = splitmix64(state_);
}

uint64_t Rng::next_u64() {
    return splitmix64(state_);
}

double Rng::uniform() {
    // 53 high bits -> double in [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_normal_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_normal_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

double Rng::normal(double mean, double stddev) {
    return mean + stddev * normal();
}

size_t Rng::index(size_t n) {
    if (n == 0) throw std::invalid_argument("Rng::index: n must be positive");
    // rejection sampling for an unbiased draw
    uint64_t bound = n;
    uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t r = next_u64();
    while (r >= limit) r = next_u64();
    return static_cast<size_t>(r % bound);
}

bool Rng::bernoulli(double p) {
    return uniform() < p;
}

std::vector<size_t> Rng::sample_without_replacement(size_t n, size_t k) {
    if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
    // Floyd's algorithm; result sorted for determinism of downstream loops
    std::vector<size_t> picked;
    picked.reserve(k);
    for (size_t j = n - k; j < n; ++j) {
        size_t t = index(j + 1);
        bool seen = false;
        for (size_t q : picked) {
            if (q == t) { seen = true; break; }
        }
        picked.push_back(seen ? j : t);
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

Rng Rng::split(std::string_view tag) const {
    return Rng(hash_combine(state_, fnv1a64(tag)));
}

Rng Rng::split(uint64_t tag) const {
    return Rng(hash_combine(state_, tag));
}

uint64_t fnv1a64(std::string_view data) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t hash_combine(uint64_t a, uint64_t b) {
    uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    return x ^ (x >> 31);
}

} // namespace ticketlab
