#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace daal {

/// Dense double-precision vector. All public operations keep values finite.
using Vec = std::vector<double>;

// Error taxonomy. Commands map these onto process exit codes.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct DegenerateVectorError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct DomainError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

/// Row-major dense matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }

    Vec row_vec(std::size_t i) const { return Vec(row(i), row(i) + cols); }
    void set_row(std::size_t i, const Vec& v) {
        for (std::size_t j = 0; j < cols; ++j) data[i * cols + j] = v[j];
    }

    bool empty() const { return data.empty(); }
    bool same_shape(const Matrix& other) const {
        return rows == other.rows && cols == other.cols;
    }
};

/// Deterministic PRNG: xoshiro256** 1.0, seeded through splitmix64.
/// The stream is a pure function of the seed, identical on every platform.
/// Gaussians come from Box-Muller (cosine branch, two uniforms per draw).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {
        std::uint64_t x = seed;
        for (auto& word : state_) word = splitmix64(x);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform in [0, 1), 53-bit resolution.
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

    /// Standard normal draw: z = sqrt(-2 ln u1) * cos(2 pi u2), u1 in (0, 1].
    double next_gaussian() {
        const double u1 = 1.0 - next_double();
        const double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    /// Uniform integer in [0, n). n must be positive.
    std::size_t next_index(std::size_t n) {
        return std::size_t(next_double() * double(n)) % n;
    }

    /// Independent generator derived from the original seed and a stream id.
    /// Calling twice with the same id yields the same stream.
    Rng substream(std::uint64_t stream) const {
        std::uint64_t x = seed_ + 0x9E3779B97F4A7C15ull * (stream + 1);
        return Rng(splitmix64(x));
    }

    std::uint64_t seed() const { return seed_; }

private:
    static constexpr double kPi = 3.14159265358979323846;

    static std::uint64_t rotl(std::uint64_t v, int k) {
        return (v << k) | (v >> (64 - k));
    }

    static std::uint64_t splitmix64(std::uint64_t& x) {
        std::uint64_t z = (x += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::array<std::uint64_t, 4> state_;
};

inline double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size())
        throw DimensionError("dot: length mismatch (" + std::to_string(a.size()) +
                             " vs " + std::to_string(b.size()) + ")");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double l2_norm(const Vec& a) {
    double acc = 0.0;
    for (double v : a) acc += v * v;
    return std::sqrt(acc);
}

inline Vec normalize(const Vec& a) {
    const double n = l2_norm(a);
    if (n <= 1e-12)
        throw DegenerateVectorError("normalize: vector norm " + std::to_string(n) +
                                    " below tolerance");
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] / n;
    return out;
}

inline Vec sample_standard_normal(Rng& rng, std::size_t n) {
    if (n == 0) throw DomainError("sample_standard_normal: n must be positive");
    Vec out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = rng.next_gaussian();
    return out;
}

// Raw-pointer kernels shared by the batch-level loss code.
inline double squared_distance(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double diff = a[i] - b[i];
        acc += diff * diff;
    }
    return acc;
}

inline double euclidean_distance(const double* a, const double* b, std::size_t n) {
    return std::sqrt(squared_distance(a, b, n));
}

}  // namespace daal
