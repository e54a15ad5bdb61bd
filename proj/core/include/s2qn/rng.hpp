#ifndef S2QN_RNG_HPP
#define S2QN_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace s2qn::rng {

// Everything here is bit-reproducible across standard libraries.
// std::mt19937_64's output sequence is pinned by the C++ standard, but the
// std distributions and std::sample are not, so bounded ints, doubles and
// gaussians are derived by hand.

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d9d049bb133111ULL;
  return z ^ (z >> 31);
}

// Collapses (run seed, iteration, purpose tag[, extra]) into one stream seed.
// The per-iteration sampling contract requires the draw to be a pure function
// of these inputs and nothing else.
inline std::uint64_t derive_seed(std::uint64_t run_seed, std::uint64_t k,
                                 std::uint64_t purpose, std::uint64_t extra = 0) {
  std::uint64_t s = run_seed;
  std::uint64_t h = splitmix64(s);
  s ^= k * 0xd1342543de82ef95ULL + 1;
  h ^= splitmix64(s);
  s ^= purpose * 0x2545f4914f6cdd1dULL + 3;
  h ^= splitmix64(s);
  s ^= extra * 0x9e3779b97f4a7c15ULL + 7;
  h ^= splitmix64(s);
  return h;
}

// Stream purposes. Fixed values: they are part of the replay contract.
enum class Purpose : std::uint64_t {
  gradient_batch = 1,
  hessian_batch = 2,
  sketch = 3,
  data_synth = 4,
  init = 5,
};

class Stream {
public:
  explicit Stream(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, bound) by rejection; bound >= 1.
  std::uint64_t next_below(std::uint64_t bound) {
    // Largest multiple of bound that fits keeps the draw unbiased.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % bound;
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Box-Muller; one value per call, the pair partner is cached.
  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = next_double();
    } while (u1 <= 0.0);
    u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // k distinct values from [0, n), partial Fisher-Yates over an index pool.
  std::vector<std::int64_t> sample_without_replacement(std::int64_t n, std::int64_t k) {
    std::vector<std::int64_t> pool(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
    if (k > n) k = n;
    for (std::int64_t i = 0; i < k; ++i) {
      const std::int64_t j =
          i + static_cast<std::int64_t>(next_below(static_cast<std::uint64_t>(n - i)));
      std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    }
    pool.resize(static_cast<std::size_t>(k));
    return pool;
  }

private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace s2qn::rng

#endif  // S2QN_RNG_HPP
