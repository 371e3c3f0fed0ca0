#ifndef EVLAB_COMMON_HPP
#define EVLAB_COMMON_HPP

#include <cstdint>
#include <cstdio>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace evlab {

// Boolean feature rows are stored as 0/1 bytes.
using BoolRow = std::vector<std::uint8_t>;

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration values (bounds, ratios, ...). CLI maps these to exit 1.
struct config_error : error {
    using error::error;
};

// Malformed input files. Messages carry the offending line/column where known.
struct parse_error : error {
    using error::error;
};

std::uint64_t splitmix64(std::uint64_t x);

// All sub-seeds are derived from one master seed through fixed stream ids so
// that reruns are bit-identical and independent stages never share a stream.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

// Fixed stream ids for derive_seed. Keep stable: they are part of the
// reproducibility contract documented in the README.
namespace seed_stream {
inline constexpr std::uint64_t dataset = 1;
inline constexpr std::uint64_t split = 2;
inline constexpr std::uint64_t background = 3;
inline constexpr std::uint64_t attack = 4;
inline constexpr std::uint64_t sage = 5;
inline constexpr std::uint64_t eval = 6;
inline constexpr std::uint64_t model_base = 100;  // model i uses model_base + i
}  // namespace seed_stream

// Deterministic RNG. std::mt19937_64 is fully specified by the standard and
// the distributions below are hand-rolled, so every platform produces the
// same stream for the same seed.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    // Uniform integer in [0, n). Rejection-free Lemire reduction is overkill
    // here; modulo bias is < 2^-53 for any n we use.
    std::size_t uniform_index(std::size_t n) {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n));
    }

    double normal();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    std::vector<std::size_t> permutation(std::size_t n);

  private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// FNV-1a 64-bit. Used for content digests in manifests and sidecars.
class Fnv1a {
  public:
    void update(std::string_view bytes);
    void update_u64(std::uint64_t v);
    void update_double(double v);
    std::uint64_t value() const { return state_; }
    std::string hex() const;

  private:
    std::uint64_t state_ = 1469598103934665603ULL;
};

std::uint64_t fnv1a(std::string_view bytes);

// Round-trip-exact decimal representation of a double (17 significant digits).
std::string format_double(double v);
double parse_double(const std::string& s);

// Thread cap from EVLAB_THREADS; 0 (default) means serial.
int env_threads();

// Runs fn(i) for i in [0, n). With threads <= 1 the loop is serial. Work items
// must be independent; the split is by contiguous blocks so results are
// identical to the serial order as long as each item writes only its own slot.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

double sigmoid(double x);

double mean(std::span<const double> xs);

}  // namespace evlab

#endif
