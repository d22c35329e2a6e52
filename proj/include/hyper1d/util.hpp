#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace hyper1d {

/// Base error type for everything the library throws.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

inline constexpr double two_pi = 6.283185307179586476925286766559;

// ---------------------------------------------------------------------------
// Gauss-Legendre quadrature on [-1,1]; composite helpers below.
// ---------------------------------------------------------------------------

template <int N>
struct GaussLegendre;

template <>
struct GaussLegendre<4> {
    static constexpr std::array<double, 4> nodes = {
        -0.8611363115940526, -0.3399810435848563,
         0.3399810435848563,  0.8611363115940526};
    static constexpr std::array<double, 4> weights = {
         0.3478548451374538,  0.6521451548625461,
         0.6521451548625461,  0.3478548451374538};
};

template <>
struct GaussLegendre<8> {
    static constexpr std::array<double, 8> nodes = {
        -0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
        -0.1834346424956498,  0.1834346424956498,  0.5255324099163290,
         0.7966664774136267,  0.9602898564975363};
    static constexpr std::array<double, 8> weights = {
         0.1012285362903763,  0.2223810344533745,  0.3137066458778873,
         0.3626837833783620,  0.3626837833783620,  0.3137066458778873,
         0.2223810344533745,  0.1012285362903763};
};

/// Integrate g over [a,b] with an N-point rule (a may exceed b; the sign
/// convention of the oriented integral is kept).
template <int N, class F>
double gl_integrate(F&& g, double a, double b) {
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double acc = 0.0;
    for (int q = 0; q < N; ++q)
        acc += GaussLegendre<N>::weights[q] * g(mid + half * GaussLegendre<N>::nodes[q]);
    return acc * half;
}

/// Split [a,b] (oriented) at the interior points of `cuts` that fall strictly
/// inside; returns the ordered segment endpoints a = s0, s1, ..., sk = b.
inline std::vector<double> split_segment(double a, double b, const std::vector<double>& cuts) {
    std::vector<double> pts{a};
    const double lo = std::min(a, b), hi = std::max(a, b);
    std::vector<double> inner;
    for (double c : cuts)
        if (c > lo + 1e-14 && c < hi - 1e-14) inner.push_back(c);
    std::sort(inner.begin(), inner.end());
    if (a > b) std::reverse(inner.begin(), inner.end());
    for (double c : inner) pts.push_back(c);
    pts.push_back(b);
    return pts;
}

/// Same split, returned as consecutive [lo, hi) subsegments.
inline std::vector<std::pair<double, double>> split_pairs(double a, double b,
                                                          const std::vector<double>& cuts) {
    const auto pts = split_segment(a, b, cuts);
    std::vector<std::pair<double, double>> out;
    for (size_t i = 0; i + 1 < pts.size(); ++i) out.emplace_back(pts[i], pts[i + 1]);
    return out;
}

/// Composite N-point Gauss-Legendre over [a,b], split at `cuts`, with at
/// least `panels` panels distributed over the segments.
template <int N, class F>
double composite_gl(F&& g, double a, double b, const std::vector<double>& cuts, int panels) {
    if (a == b) return 0.0;
    const auto seg = split_segment(a, b, cuts);
    const double total = std::abs(b - a);
    double acc = 0.0;
    for (size_t i = 0; i + 1 < seg.size(); ++i) {
        const double sa = seg[i], sb = seg[i + 1];
        const int np = std::max(1, (int)std::ceil(panels * std::abs(sb - sa) / total));
        const double h = (sb - sa) / np;
        for (int p = 0; p < np; ++p)
            acc += gl_integrate<N>(g, sa + p * h, sa + (p + 1) * h);
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Parallel loop over [0,n); worker count capped by set_max_threads().
// ---------------------------------------------------------------------------

inline int& max_threads_ref() {
    static int v = (int)std::thread::hardware_concurrency();
    return v;
}
inline void set_max_threads(int k) { max_threads_ref() = std::max(1, k); }

template <class F>
void parallel_for(long n, F&& body) {
    const int workers = std::clamp<long>(max_threads_ref(), 1, std::max<long>(1, n));
    if (workers == 1 || n < 64) {
        for (long i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr err;
    std::mutex err_mu;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (long i = w; i < n; i += workers) body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!err) err = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

/// Deterministic 64-bit FNV-1a, used for scenario hashes.
inline std::string fnv1a_hex(const std::string& bytes) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
    return buf;
}

}  // namespace hyper1d
