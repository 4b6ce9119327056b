#pragma once

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace cotkit {

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

//
// dense row-major float32 matrix
//

struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<float> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(size_t(r) * size_t(c), 0.0f) {}

    float * row(int r) { return v.data() + size_t(r) * cols; }
    const float * row(int r) const { return v.data() + size_t(r) * cols; }
    float & at(int r, int c) { return v[size_t(r) * cols + c]; }
    float at(int r, int c) const { return v[size_t(r) * cols + c]; }
    size_t size() const { return v.size(); }

    bool same_shape(const Mat & o) const { return rows == o.rows && cols == o.cols; }
};

// out = a * b. Each output element accumulates over k in ascending order,
// which is the accumulation order every reduction in this library uses.
inline void matmul(const Mat & a, const Mat & b, Mat & out) {
    if (a.cols != b.rows) {
        throw error("matmul: inner dimensions differ");
    }
    out = Mat(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const float * arow = a.row(i);
        float *       orow = out.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const float   aik  = arow[k];
            const float * brow = b.row(k);
            for (int j = 0; j < b.cols; ++j) {
                orow[j] += aik * brow[j];
            }
        }
    }
}

// x (length n) times w (n x m), accumulated into out (length m), k ascending.
inline void vecmat(const float * x, const Mat & w, float * out) {
    for (int j = 0; j < w.cols; ++j) {
        out[j] = 0.0f;
    }
    for (int k = 0; k < w.rows; ++k) {
        const float   xk   = x[k];
        const float * wrow = w.row(k);
        for (int j = 0; j < w.cols; ++j) {
            out[j] += xk * wrow[j];
        }
    }
}

inline float dot(const float * a, const float * b, int n) {
    float acc = 0.0f;
    for (int i = 0; i < n; ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

inline double dot_f64(const float * a, const float * b, int n) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        acc += double(a[i]) * double(b[i]);
    }
    return acc;
}

inline float norm2(const float * a, int n) {
    float acc = 0.0f;
    for (int i = 0; i < n; ++i) {
        acc += a[i] * a[i];
    }
    return std::sqrt(acc);
}

inline bool all_finite(const float * a, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        if (!std::isfinite(a[i])) {
            return false;
        }
    }
    return true;
}

//
// FNV-1a 64-bit, used for model/plan/directions fingerprints
//

struct Fnv1a {
    uint64_t h = 1469598103934665603ull;

    void update(const void * data, size_t n) {
        const auto * p = static_cast<const unsigned char *>(data);
        for (size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    }
    void update(const std::string & s) { update(s.data(), s.size()); }
    void update_f32(const float * data, size_t n) { update(data, n * sizeof(float)); }

    std::string hex() const {
        static const char * digits = "0123456789abcdef";
        std::string s(16, '0');
        uint64_t    x = h;
        for (int i = 15; i >= 0; --i) {
            s[i] = digits[x & 0xf];
            x >>= 4;
        }
        return s;
    }
};

inline std::string fnv1a_hex(const std::string & s) {
    Fnv1a f;
    f.update(s);
    return f.hex();
}

//
// seeded RNG with pinned-down distributions (std:: distribution objects are
// implementation-defined, which would break byte-stable fixtures)
//

struct Rng {
    std::mt19937_64 gen;
    bool   has_spare = false;
    double spare     = 0.0;

    explicit Rng(uint64_t seed) : gen(seed) {}

    double uniform01() {
        return double(gen() >> 11) * 0x1.0p-53;
    }
    // Box-Muller
    double normal() {
        if (has_spare) {
            has_spare = false;
            return spare;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 1e-300) {
            u1 = uniform01();
        }
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare     = r * std::sin(a);
        has_spare = true;
        return r * std::cos(a);
    }
    double normal(double mu, double sigma) { return mu + sigma * normal(); }

    // inclusive range
    int uniform_int(int lo, int hi) {
        const uint64_t span = uint64_t(hi - lo) + 1;
        return lo + int(gen() % span);
    }
};

//
// index-addressed parallel loop; output slots are preallocated by the caller
// so the result is identical for any worker count
//

template <typename Fn>
void parallel_for(int jobs, int n, Fn && fn) {
    if (jobs <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<int>        next{0};
    std::exception_ptr      first_error = nullptr;
    std::mutex              err_mutex;
    const int               workers = std::min(jobs, n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int i; (i = next.fetch_add(1)) < n;) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!first_error) {
                        first_error = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto & t : pool) {
        t.join();
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }
}

// shortest round-trip decimal text for CSV cells
inline std::string fmt_float(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

inline std::string fmt_float(float x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

} // namespace cotkit
