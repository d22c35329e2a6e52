#pragma once

#include <functional>
#include <vector>

#include "hyper1d/util.hpp"

namespace hyper1d {

enum class InterpOrder { Bilinear, Bicubic };

/// An n-component field sampled on a uniform tensor (x,t) grid over
/// [0,1] x [t0,t1]. On a periodic grid the t-axis covers one period without
/// the duplicate endpoint and interpolation wraps around.
class GridFunction {
  public:
    GridFunction() = default;

    GridFunction(int n, int nx, int nt, double t0, double t1, bool periodic = false,
                 InterpOrder interp = InterpOrder::Bilinear)
        : n_(n), nx_(nx), nt_(nt), t0_(t0), t1_(t1), periodic_(periodic), interp_(interp),
          values_(std::vector<double>((size_t)n * nx * nt, 0.0)) {
        if (nx < 2 || nt < 2) throw Error("grid needs >= 2 points per axis");
        hx_ = 1.0 / (nx - 1);
        ht_ = periodic ? (t1 - t0) / nt : (t1 - t0) / (nt - 1);
    }

    static GridFunction periodic_grid(int n, int nx, int nt,
                                      InterpOrder interp = InterpOrder::Bilinear) {
        return GridFunction(n, nx, nt, 0.0, two_pi, true, interp);
    }

    int components() const { return n_; }
    int nx() const { return nx_; }
    int nt() const { return nt_; }
    double t0() const { return t0_; }
    double t1() const { return t1_; }
    double hx() const { return hx_; }
    double ht() const { return ht_; }
    bool periodic() const { return periodic_; }
    InterpOrder interp() const { return interp_; }
    void set_interp(InterpOrder o) { interp_ = o; }

    double x_at(int ix) const { return ix * hx_; }
    double t_at(int it) const { return t0_ + it * ht_; }

    double& at(int c, int ix, int it) { return values_[idx(c, ix, it)]; }
    double at(int c, int ix, int it) const { return values_[idx(c, ix, it)]; }

    void fill(const std::function<double(int, double, double)>& g) {
        parallel_for(nt_, [&](long it) {
            for (int c = 0; c < n_; ++c)
                for (int ix = 0; ix < nx_; ++ix)
                    at(c, ix, (int)it) = g(c, x_at(ix), t_at((int)it));
        });
    }

    /// Interpolated off-grid evaluation; exact on grid nodes.
    double value(int c, double x, double t) const {
        double fx = (std::clamp(x, 0.0, 1.0)) / hx_;
        int ix = std::clamp((int)std::floor(fx), 0, nx_ - 2);
        double ux = fx - ix;
        double ft;
        int it;
        if (periodic_) {
            double tau = std::fmod(t - t0_, t1_ - t0_);
            if (tau < 0) tau += t1_ - t0_;
            ft = tau / ht_;
            it = (int)std::floor(ft);
            if (it >= nt_) it = nt_ - 1;
        } else {
            const double slack = 1e-9 * (1.0 + std::abs(t1_ - t0_));
            if (t < t0_ - slack || t > t1_ + slack)
                throw Error("time " + std::to_string(t) + " outside grid window [" +
                            std::to_string(t0_) + "," + std::to_string(t1_) + "]");
            ft = (std::clamp(t, t0_, t1_) - t0_) / ht_;
            it = std::clamp((int)std::floor(ft), 0, nt_ - 2);
        }
        double ut = ft - it;
        if (interp_ == InterpOrder::Bilinear) {
            const double v00 = node(c, ix, it), v10 = node(c, ix + 1, it);
            const double v01 = node(c, ix, it + 1), v11 = node(c, ix + 1, it + 1);
            return (1 - ux) * (1 - ut) * v00 + ux * (1 - ut) * v10 + (1 - ux) * ut * v01 +
                   ux * ut * v11;
        }
        // Bicubic: separable 4-point Lagrange stencils, shifted one-sided near
        // non-periodic edges so the order is uniform over the whole grid.
        if (nx_ < 4 || (!periodic_ && nt_ < 4)) {
            const double v00 = node(c, ix, it), v10 = node(c, ix + 1, it);
            const double v01 = node(c, ix, it + 1), v11 = node(c, ix + 1, it + 1);
            return (1 - ux) * (1 - ut) * v00 + ux * (1 - ut) * v10 + (1 - ux) * ut * v01 +
                   ux * ut * v11;
        }
        const int xb = std::clamp(ix - 1, 0, nx_ - 4);
        const double sx = fx - xb;
        int tb;
        double st;
        if (periodic_) {
            tb = it - 1;
            st = ft - tb;
        } else {
            tb = std::clamp(it - 1, 0, nt_ - 4);
            st = ft - tb;
        }
        double rows[4];
        for (int r = 0; r < 4; ++r) {
            double p[4];
            for (int q = 0; q < 4; ++q) p[q] = node(c, xb + q, wrap_t(tb + r));
            rows[r] = lagrange4(p, sx);
        }
        return lagrange4(rows, st);
    }

    double sup_norm() const {
        double m = 0.0;
        for (double v : values_) m = std::max(m, std::abs(v));
        return m;
    }

    double sup_diff(const GridFunction& other) const {
        double m = 0.0;
        for (size_t i = 0; i < values_.size(); ++i)
            m = std::max(m, std::abs(values_[i] - other.values_[i]));
        return m;
    }

    GridFunction& axpy(double alpha, const GridFunction& other) {
        for (size_t i = 0; i < values_.size(); ++i) values_[i] += alpha * other.values_[i];
        return *this;
    }

    GridFunction& scale(double alpha) {
        for (double& v : values_) v *= alpha;
        return *this;
    }

    std::vector<double>& raw() { return values_; }
    const std::vector<double>& raw() const { return values_; }

  private:
    size_t idx(int c, int ix, int it) const {
        return ((size_t)c * nt_ + it) * nx_ + ix;
    }
    int wrap_t(int it) const {
        if (periodic_) return ((it % nt_) + nt_) % nt_;
        return std::clamp(it, 0, nt_ - 1);
    }
    double node(int c, int ix, int it) const { return values_[idx(c, ix, wrap_t(it))]; }

    // Cubic interpolation through 4 values at local positions 0,1,2,3.
    static double lagrange4(const double p[4], double s) {
        const double s1 = s - 1, s2 = s - 2, s3 = s - 3;
        return -p[0] * s1 * s2 * s3 / 6.0 + p[1] * s * s2 * s3 / 2.0 -
               p[2] * s * s1 * s3 / 2.0 + p[3] * s * s1 * s2 / 6.0;
    }

    int n_ = 0, nx_ = 0, nt_ = 0;
    double t0_ = 0.0, t1_ = 0.0, hx_ = 0.0, ht_ = 0.0;
    bool periodic_ = false;
    InterpOrder interp_ = InterpOrder::Bilinear;
    std::vector<double> values_;
};

}  // namespace hyper1d
