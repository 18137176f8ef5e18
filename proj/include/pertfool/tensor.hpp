#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "pertfool/errors.hpp"

namespace pertfool {

/// Dense n-dimensional array of 64-bit reals, row-major.
/// Images use (H, W, C) order: index(h, w, c) = (h*W + w)*C + c.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> shape_, double fill = 0.0)
        : shape(std::move(shape_)), data(numel_of(shape), fill) {}
    Tensor(std::vector<std::size_t> shape_, std::vector<double> data_)
        : shape(std::move(shape_)), data(std::move(data_)) {
        if (data.size() != numel_of(shape))
            throw InputError("tensor data length does not match shape");
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return s.empty() ? 0 : n;
    }

    std::size_t numel() const { return data.size(); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    // (H, W, C) accessors; only valid for rank-3 tensors.
    double& at(std::size_t h, std::size_t w, std::size_t c) {
        return data[(h * shape[1] + w) * shape[2] + c];
    }
    double at(std::size_t h, std::size_t w, std::size_t c) const {
        return data[(h * shape[1] + w) * shape[2] + c];
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double linf_norm() const {
        double m = 0.0;
        for (double v : data) m = std::max(m, std::abs(v));
        return m;
    }

    double l2_norm() const {
        double s = 0.0;
        for (double v : data) s += v * v;
        return std::sqrt(s);
    }

    Tensor& operator+=(const Tensor& o) {
        for (std::size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
        return *this;
    }
    Tensor& operator-=(const Tensor& o) {
        for (std::size_t i = 0; i < data.size(); ++i) data[i] -= o.data[i];
        return *this;
    }
    Tensor& operator*=(double s) {
        for (double& v : data) v *= s;
        return *this;
    }

    friend Tensor operator-(const Tensor& t) {
        Tensor r = t;
        for (double& v : r.data) v = -v;
        return r;
    }
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) throw InputError(std::string(what) + ": shape mismatch");
}

/// Elementwise clamp, returns a copy.
inline Tensor clamp(const Tensor& t, double lo, double hi) {
    Tensor r = t;
    for (double& v : r.data) v = v < lo ? lo : (v > hi ? hi : v);
    return r;
}

}  // namespace pertfool
