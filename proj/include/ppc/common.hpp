#pragma once
// common.hpp — scalar aliases, error type, deterministic RNG, small utilities.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ppc {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using Matd = Mat<double>;
using Vecd = Vec<double>;

// All recoverable failures carry a short machine-checkable code
// ("placement-infeasible", "shape-mismatch", ...) plus a human message.
struct Error : std::runtime_error {
    std::string code;
    Error(std::string c, const std::string& msg)
        : std::runtime_error(c + ": " + msg), code(std::move(c)) {}
};

[[noreturn]] inline void fail(const std::string& code, const std::string& msg) {
    throw Error(code, msg);
}

inline void require(bool cond, const std::string& code, const std::string& msg) {
    if (!cond) fail(code, msg);
}

// Deterministic RNG. splitmix64 chain: simple, fast, bit-stable across
// platforms (std:: distributions are not, so draws are hand-rolled here).
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1): 53 mantissa bits
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive range; unbiased enough for desk-scale use (rejection-free)
    int uniform_int(int lo, int hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

    // Box-Muller with cached second value
    double gaussian() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    // Independent child stream; does not advance this generator.
    Rng fork(uint64_t stream) const {
        uint64_t z = state_ ^ (0x9e3779b97f4a7c15ULL * (stream + 0x243f6a8885a308d3ULL));
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return Rng(z ^ (z >> 31));
    }

  private:
    uint64_t state_;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

// Fisher-Yates with our deterministic RNG
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (size_t i = v.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace ppc
