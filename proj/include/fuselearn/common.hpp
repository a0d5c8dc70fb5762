#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace fuselearn {

// Error categories; the CLI maps each onto a distinct exit code.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct PrereqError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// splitmix64 finalizer; used to derive independent seeds from a master seed.
uint64_t mix64(uint64_t x);
uint64_t mix_seed(uint64_t master, uint64_t stream);

// Deterministic RNG. mt19937_64 output is pinned by the standard, and all
// transforms (uniform, normal, ...) are hand-rolled here so streams are
// bit-identical across platforms and standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

    uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n), n > 0. Rejection-sampled, unbiased.
    uint64_t uniform_int(uint64_t n);

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal via Box-Muller (second value cached).
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Independent child stream; does not consume state from this stream.
    Rng fork(uint64_t stream) const { return Rng(mix_seed(seed_, stream)); }

    uint64_t seed() const { return seed_; }

    template <typename V>
    void shuffle(std::vector<V>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

/// Parse "YYYY-MM-DDTHH:MM:SS" (UTC, no zone suffix) to unix seconds.
int64_t parse_iso8601(const std::string& s);
std::string format_iso8601(int64_t unix_seconds);

std::vector<std::string> split(const std::string& line, char sep);
std::string trim(const std::string& s);
std::string lower(const std::string& s);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
bool file_exists(const std::string& path);

}  // namespace fuselearn
