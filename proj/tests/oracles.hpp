#pragma once

// Independent reference implementations used only by the tests. Everything
// here is written as plainly as possible, in double precision.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "aop/tensor.hpp"

namespace oracle {

inline aop::Tensor random_tensor(aop::Shape shape, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f) {
    std::uniform_real_distribution<float> u(lo, hi);
    aop::Tensor t(std::move(shape));
    for (auto& v : t.data()) v = u(rng);
    return t;
}

inline aop::Tensor random_mask(std::size_t h, std::size_t w, std::mt19937_64& rng, double p = 0.4) {
    std::bernoulli_distribution b(p);
    aop::Tensor m({h, w});
    for (auto& v : m.data()) v = b(rng) ? 1.0f : 0.0f;
    return m;
}

// Six nested loops, zero padding, cross-correlation.
inline std::vector<double> conv2d(const aop::Tensor& in, const aop::Tensor& w, const aop::Tensor& b, int stride,
                                  int pad, std::size_t& oh, std::size_t& ow) {
    const int C = static_cast<int>(in.dim(0)), H = static_cast<int>(in.dim(1)), W = static_cast<int>(in.dim(2));
    const int O = static_cast<int>(w.dim(0)), K = static_cast<int>(w.dim(2)), L = static_cast<int>(w.dim(3));
    oh = static_cast<std::size_t>((H + 2 * pad - K) / stride + 1);
    ow = static_cast<std::size_t>((W + 2 * pad - L) / stride + 1);
    std::vector<double> out(O * oh * ow, 0.0);
    for (int o = 0; o < O; ++o)
        for (int y = 0; y < static_cast<int>(oh); ++y)
            for (int x = 0; x < static_cast<int>(ow); ++x) {
                double acc = b[o];
                for (int c = 0; c < C; ++c)
                    for (int i = 0; i < K; ++i)
                        for (int j = 0; j < L; ++j) {
                            const int yy = y * stride + i - pad, xx = x * stride + j - pad;
                            if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                            acc += static_cast<double>(in(c, yy, xx)) * w(o, c, i, j);
                        }
                out[(o * oh + y) * ow + x] = acc;
            }
    return out;
}

// Per-pixel cosine similarity against the masked mean feature, loops only.
inline std::vector<double> elimination_map(const aop::Tensor& f, const aop::Tensor& mask_small) {
    const std::size_t h = f.dim(0), w = f.dim(1), c = f.dim(2);
    std::vector<double> g(c, 0.0);
    std::size_t n = 0;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            if (mask_small(y, x) > 0.5f) {
                ++n;
                for (std::size_t k = 0; k < c; ++k) g[k] += f(y, x, k);
            }
    double gn = 0.0;
    for (auto& v : g) {
        v /= static_cast<double>(n);
        gn += v * v;
    }
    gn = std::max(std::sqrt(gn), 1e-8);
    std::vector<double> out(h * w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double dot = 0.0, pn = 0.0;
            for (std::size_t k = 0; k < c; ++k) {
                dot += f(y, x, k) * g[k];
                pn += static_cast<double>(f(y, x, k)) * f(y, x, k);
            }
            out[y * w + x] = dot / (std::max(std::sqrt(pn), 1e-8) * gn);
        }
    return out;
}

// Bilinear sample of an [h,w] map upsampled to [H,W] at output pixel (y, x),
// half-pixel centers, written straight from the formula.
inline double bilinear(const aop::Tensor& m, std::size_t H, std::size_t W, std::size_t y, std::size_t x) {
    const double h = static_cast<double>(m.dim(0)), w = static_cast<double>(m.dim(1));
    double sy = (y + 0.5) * h / H - 0.5, sx = (x + 0.5) * w / W - 0.5;
    sy = std::clamp(sy, 0.0, h - 1);
    sx = std::clamp(sx, 0.0, w - 1);
    const auto y0 = static_cast<std::size_t>(std::floor(sy)), x0 = static_cast<std::size_t>(std::floor(sx));
    const std::size_t y1 = std::min<std::size_t>(y0 + 1, m.dim(0) - 1), x1 = std::min<std::size_t>(x0 + 1, m.dim(1) - 1);
    const double ty = sy - y0, tx = sx - x0;
    return (1 - ty) * ((1 - tx) * m(y0, x0) + tx * m(y0, x1)) + ty * ((1 - tx) * m(y1, x0) + tx * m(y1, x1));
}

} // namespace oracle
