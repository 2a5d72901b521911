#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace jex {

// All model math runs in `real`. Double is the default so gradient checks can
// use tight tolerances; the 32-bit build trades that for speed.
#ifdef JEX_SINGLE_PRECISION
using real = float;
#else
using real = double;
#endif

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape or rank of an operand does not satisfy the kernel contract.
struct DimensionError : Error {
    using Error::Error;
};

// A documented precondition was violated by the caller.
struct ContractError : Error {
    using Error::Error;
};

// An attention mask row with no visible column reached the softmax.
struct DegenerateMaskError : Error {
    using Error::Error;
};

struct VocabError : Error {
    using Error::Error;
};

struct LengthError : Error {
    using Error::Error;
};

struct AnnotationError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

// Unreadable or truncated checkpoint bytes.
struct CheckpointCorruptError : Error {
    using Error::Error;
};

// Checkpoint written by an incompatible format version.
struct CheckpointVersionError : Error {
    using Error::Error;
};

struct DivergenceError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// Deterministic random source. All randomness in the project flows through
// this class so that a fixed seed reproduces runs bit-for-bit; the standard
// distributions are avoided because their output is not pinned across
// library implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {
        // warm up so that small seeds decorrelate quickly
        for (int i = 0; i < 8; ++i) next();
    }

    uint64_t next() {
        // xorshift* generator
        uint64_t x = state_;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state_ = x;
        return x * 0x2545f4914f6cdd1dull;
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive bounds
    int64_t uniform_int(int64_t lo, int64_t hi) {
        if (hi < lo) throw ContractError("uniform_int: empty range");
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(next() % span);
    }

    double normal(double mean = 0.0, double stddev = 1.0) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + stddev * spare_;
        }
        // Box-Muller
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return mean + stddev * r * std::cos(theta);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        // Fisher-Yates
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

inline std::string version_string() { return "jex 0.1.0"; }

}  // namespace jex
