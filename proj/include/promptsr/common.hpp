#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace promptsr {

// ---------------------------------------------------------------------------
// Errors. Every thrown message is a single line suitable for CLI diagnostics.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error("shape error: " + msg) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};
struct ContractError : Error {
    explicit ContractError(const std::string& msg) : Error("contract error: " + msg) {}
};
struct DataError : Error {
    explicit DataError(const std::string& msg) : Error("data error: " + msg) {}
};
struct FormatError : Error {
    explicit FormatError(const std::string& msg) : Error("format error: " + msg) {}
};

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

// ---------------------------------------------------------------------------
// Deterministic RNG. std::mt19937 gives a portable bit stream; the value
// transforms below are written out so results do not depend on libstdc++'s
// distribution implementations.
// ---------------------------------------------------------------------------

class Rng {
public:
    explicit Rng(uint64_t seed = 0) : eng_(static_cast<uint32_t>(seed ^ (seed >> 32))) {}

    static Rng for_worker(uint64_t global_seed, uint64_t worker_id) {
        return Rng(global_seed * 0x9e3779b97f4a7c15ull + worker_id + 1);
    }

    // uniform in [0, 1)
    double uniform() { return canonical(); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * canonical(); }
    // uniform integer in [0, n)
    int64_t below(int64_t n) { return static_cast<int64_t>(canonical() * n) % n; }

    double normal() {
        // Box-Muller, one value per call
        double u1 = canonical(), u2 = canonical();
        while (u1 <= 1e-12) u1 = canonical();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }
    // normal clipped to +-2 std, the usual transformer table init
    double trunc_normal(double stdev) {
        for (int i = 0; i < 64; ++i) {
            double v = normal();
            if (std::fabs(v) <= 2.0) return v * stdev;
        }
        return 0.0;
    }

    std::mt19937& engine() { return eng_; }

private:
    double canonical() {
        // 53-bit mantissa from two draws
        uint64_t a = eng_() >> 5, b = eng_() >> 6;
        return (a * 67108864.0 + b) * (1.0 / 9007199254740992.0);
    }
    std::mt19937 eng_;
};

// ---------------------------------------------------------------------------
// Thread pool knob. Kernels partition disjoint output rows, so results are
// bit-identical for any thread count.
// ---------------------------------------------------------------------------

int num_threads();
void set_num_threads(int n);

template <typename F>
void parallel_for(int64_t n, F&& body) {
    int nt = num_threads();
    if (nt <= 1 || n < 2 * nt) {
        for (int64_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(nt);
    std::atomic<int64_t> next{0};
    const int64_t chunk = (n + nt * 4 - 1) / (nt * 4);
    for (int t = 0; t < nt; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                int64_t lo = next.fetch_add(chunk);
                if (lo >= n) break;
                int64_t hi = std::min(n, lo + chunk);
                for (int64_t i = lo; i < hi; ++i) body(i);
            }
        });
    }
    for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------
// Multiply-accumulate tally for the instrumented-execution oracle. Counts
// forward-pass scalar product terms in matmul/linear/conv kernels only.
// ---------------------------------------------------------------------------

class MacCounter {
public:
    static void enable(bool on);
    static bool enabled();
    static void reset();
    static uint64_t value();
    static void add(uint64_t n);
};

// Finiteness checks after each op; on by default in debug builds,
// switchable at runtime for tests.
bool debug_checks_enabled();
void set_debug_checks(bool on);

template <typename S>
void check_finite(const S* p, int64_t n, const char* op) {
    if (!debug_checks_enabled()) return;
    for (int64_t i = 0; i < n; ++i) {
        if (!std::isfinite(static_cast<double>(p[i])))
            throw Error(std::string("non-finite value produced by ") + op);
    }
}

}  // namespace promptsr
