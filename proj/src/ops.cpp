#include "aop/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "aop/errors.hpp"

namespace aop {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

struct ConvGeometry {
    std::size_t c_in, h, w, c_out, kh, kw, out_h, out_w;
    int stride, padding;

    bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && padding == 0; }
    std::size_t patch() const { return c_in * kh * kw; }
    std::size_t out_pixels() const { return out_h * out_w; }
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& weights, int stride, int padding) {
    if (input.ndim() != 3) throw DimensionError("conv2d input must be [C,H,W], got " + shape_str(input.shape()));
    if (weights.ndim() != 4) {
        throw DimensionError("conv2d weights must be [C_out,C_in,kH,kW], got " + shape_str(weights.shape()));
    }
    if (weights.dim(1) != input.dim(0)) {
        throw DimensionError("conv2d channel mismatch: input " + shape_str(input.shape()) + " vs weights " +
                             shape_str(weights.shape()));
    }
    if (stride < 1 || padding < 0) throw DimensionError("conv2d needs stride >= 1 and padding >= 0");
    ConvGeometry g{};
    g.c_in = input.dim(0);
    g.h = input.dim(1);
    g.w = input.dim(2);
    g.c_out = weights.dim(0);
    g.kh = weights.dim(2);
    g.kw = weights.dim(3);
    g.stride = stride;
    g.padding = padding;
    if (g.kh == 0 || g.kw == 0) throw DimensionError("conv2d kernel must be at least 1x1");
    const std::size_t ph = g.h + 2 * static_cast<std::size_t>(padding);
    const std::size_t pw = g.w + 2 * static_cast<std::size_t>(padding);
    if (ph < g.kh || pw < g.kw) throw DimensionError("conv2d kernel larger than padded input");
    g.out_h = (ph - g.kh) / static_cast<std::size_t>(stride) + 1;
    g.out_w = (pw - g.kw) / static_cast<std::size_t>(stride) + 1;
    return g;
}

// Unfold input patches into a [C_in*kH*kW, H'*W'] matrix.
Tensor im2col(const Tensor& input, const ConvGeometry& g) {
    Tensor col({g.patch(), g.out_pixels()});
    float* dst = col.ptr();
    const float* src = input.ptr();
    const auto h = static_cast<std::ptrdiff_t>(g.h);
    const auto w = static_cast<std::ptrdiff_t>(g.w);
    for (std::size_t c = 0; c < g.c_in; ++c) {
        for (std::size_t ki = 0; ki < g.kh; ++ki) {
            for (std::size_t kj = 0; kj < g.kw; ++kj) {
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * g.stride - g.padding +
                                              static_cast<std::ptrdiff_t>(ki);
                    if (iy < 0 || iy >= h) {
                        std::fill(dst, dst + g.out_w, 0.0f);
                        dst += g.out_w;
                        continue;
                    }
                    const float* row = src + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * g.stride - g.padding +
                                                  static_cast<std::ptrdiff_t>(kj);
                        *dst++ = (ix < 0 || ix >= w) ? 0.0f : row[ix];
                    }
                }
            }
        }
    }
    return col;
}

// Scatter-add a column matrix back onto a [C_in,H,W] tensor.
Tensor col2im(const Tensor& col, const ConvGeometry& g) {
    Tensor out({g.c_in, g.h, g.w});
    const float* src = col.ptr();
    float* dst = out.ptr();
    const auto h = static_cast<std::ptrdiff_t>(g.h);
    const auto w = static_cast<std::ptrdiff_t>(g.w);
    for (std::size_t c = 0; c < g.c_in; ++c) {
        for (std::size_t ki = 0; ki < g.kh; ++ki) {
            for (std::size_t kj = 0; kj < g.kw; ++kj) {
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * g.stride - g.padding +
                                              static_cast<std::ptrdiff_t>(ki);
                    if (iy < 0 || iy >= h) {
                        src += g.out_w;
                        continue;
                    }
                    float* row = dst + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox, ++src) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * g.stride - g.padding +
                                                  static_cast<std::ptrdiff_t>(kj);
                        if (ix >= 0 && ix < w) row[ix] += *src;
                    }
                }
            }
        }
    }
    return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(what) + ": shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

} // namespace

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, int stride, int padding) {
    const ConvGeometry g = conv_geometry(input, weights, stride, padding);
    if (bias.ndim() != 1 || bias.dim(0) != g.c_out) {
        throw DimensionError("conv2d bias must be [" + std::to_string(g.c_out) + "], got " + shape_str(bias.shape()));
    }
    Tensor out({g.c_out, g.out_h, g.out_w});
    MatMap o(out.ptr(), static_cast<Eigen::Index>(g.c_out), static_cast<Eigen::Index>(g.out_pixels()));
    ConstMatMap wm(weights.ptr(), static_cast<Eigen::Index>(g.c_out), static_cast<Eigen::Index>(g.patch()));
    Eigen::Map<const Eigen::VectorXf> b(bias.ptr(), static_cast<Eigen::Index>(g.c_out));
    if (g.pointwise()) {
        ConstMatMap x(input.ptr(), static_cast<Eigen::Index>(g.c_in), static_cast<Eigen::Index>(g.out_pixels()));
        o.noalias() = wm * x;
    } else {
        const Tensor col = im2col(input, g);
        ConstMatMap x(col.ptr(), static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(g.out_pixels()));
        o.noalias() = wm * x;
    }
    o.colwise() += b;
    return out;
}

ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weights, int stride,
                          int padding, bool need_input_grad) {
    const ConvGeometry g = conv_geometry(input, weights, stride, padding);
    const Shape expected{g.c_out, g.out_h, g.out_w};
    if (grad_out.shape() != expected) {
        throw DimensionError("conv2d_backward grad_out " + shape_str(grad_out.shape()) + " does not match output " +
                             shape_str(expected));
    }
    const auto c_out = static_cast<Eigen::Index>(g.c_out);
    const auto patch = static_cast<Eigen::Index>(g.patch());
    const auto pixels = static_cast<Eigen::Index>(g.out_pixels());
    ConstMatMap go(grad_out.ptr(), c_out, pixels);
    ConstMatMap wm(weights.ptr(), c_out, patch);

    ConvGrads grads;
    grads.bias = Tensor({g.c_out});
    Eigen::Map<Eigen::VectorXf>(grads.bias.ptr(), c_out) = go.rowwise().sum();

    grads.weights = Tensor(weights.shape());
    MatMap gw(grads.weights.ptr(), c_out, patch);
    if (g.pointwise()) {
        ConstMatMap x(input.ptr(), patch, pixels);
        gw.noalias() = go * x.transpose();
        if (need_input_grad) {
            grads.input = Tensor(input.shape());
            MatMap gi(grads.input.ptr(), patch, pixels);
            gi.noalias() = wm.transpose() * go;
        }
        return grads;
    }
    {
        const Tensor col = im2col(input, g);
        ConstMatMap x(col.ptr(), patch, pixels);
        gw.noalias() = go * x.transpose();
    }
    if (need_input_grad) {
        Tensor dcol({g.patch(), g.out_pixels()});
        MatMap dc(dcol.ptr(), patch, pixels);
        dc.noalias() = wm.transpose() * go;
        grads.input = col2im(dcol, g);
    }
    return grads;
}

Tensor relu(const Tensor& t) {
    Tensor out(t.shape());
    auto src = t.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > 0.0f ? src[i] : 0.0f;
    return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& input) {
    require_same_shape(grad_out, input, "relu_backward");
    Tensor out(input.shape());
    auto g = grad_out.data();
    auto x = input.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) dst[i] = x[i] > 0.0f ? g[i] : 0.0f;
    return out;
}

Tensor sigmoid(const Tensor& t) {
    Tensor out(t.shape());
    auto src = t.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
        const float x = src[i];
        if (x >= 0.0f) {
            dst[i] = 1.0f / (1.0f + std::exp(-x));
        } else {
            const float e = std::exp(x);
            dst[i] = e / (1.0f + e);
        }
    }
    return out;
}

Tensor sigmoid_backward(const Tensor& grad_out, const Tensor& output) {
    require_same_shape(grad_out, output, "sigmoid_backward");
    Tensor out(output.shape());
    auto g = grad_out.data();
    auto s = output.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < s.size(); ++i) dst[i] = g[i] * s[i] * (1.0f - s[i]);
    return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 3 || b.ndim() != 3 || a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2)) {
        throw DimensionError("concat_channels: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    Tensor out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
    std::copy(a.data().begin(), a.data().end(), out.data().begin());
    std::copy(b.data().begin(), b.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(a.size()));
    return out;
}

std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
    if (n == 1) return 0;
    const std::ptrdiff_t period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - 1 - i;
}

std::vector<float> gaussian_kernel1d(double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int k = -radius; k <= radius; ++k) {
        const double v = std::exp(-(k * k) / (2.0 * sigma * sigma));
        taps[static_cast<std::size_t>(k + radius)] = v;
        sum += v;
    }
    std::vector<float> out(taps.size());
    for (std::size_t i = 0; i < taps.size(); ++i) out[i] = static_cast<float>(taps[i] / sum);
    return out;
}

Tensor gaussian_filter(const Tensor& map, double sigma, Border border) {
    if (map.ndim() != 2) throw DimensionError("gaussian_filter expects [H,W], got " + shape_str(map.shape()));
    if (!(sigma >= 0.0)) throw DimensionError("gaussian_filter sigma must be >= 0");
    if (sigma == 0.0) return map;
    const std::vector<float> k = gaussian_kernel1d(sigma);
    const auto radius = static_cast<std::ptrdiff_t>(k.size() / 2);
    const auto h = static_cast<std::ptrdiff_t>(map.dim(0));
    const auto w = static_cast<std::ptrdiff_t>(map.dim(1));

    Tensor tmp(map.shape());
    for (std::ptrdiff_t y = 0; y < h; ++y) {
        const float* row = map.ptr() + y * w;
        float* out = tmp.ptr() + y * w;
        for (std::ptrdiff_t x = 0; x < w; ++x) {
            float acc = 0.0f;
            for (std::ptrdiff_t d = -radius; d <= radius; ++d) {
                const std::ptrdiff_t xx = x + d;
                if (border == Border::zero && (xx < 0 || xx >= w)) continue;
                acc += k[static_cast<std::size_t>(d + radius)] * row[reflect_index(xx, w)];
            }
            out[x] = acc;
        }
    }
    Tensor out(map.shape());
    for (std::ptrdiff_t y = 0; y < h; ++y) {
        float* dst = out.ptr() + y * w;
        for (std::ptrdiff_t d = -radius; d <= radius; ++d) {
            const float kv = k[static_cast<std::size_t>(d + radius)];
            if (border == Border::zero && (y + d < 0 || y + d >= h)) continue;
            const float* src = tmp.ptr() + reflect_index(y + d, h) * w;
            for (std::ptrdiff_t x = 0; x < w; ++x) dst[x] += kv * src[x];
        }
    }
    return out;
}

namespace {
struct Lerp {
    std::size_t i0, i1;
    float frac;
};

Lerp source_coord(std::size_t dst, std::size_t in_n, std::size_t out_n) {
    const double scale = static_cast<double>(in_n) / static_cast<double>(out_n);
    double src = (static_cast<double>(dst) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in_n - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(src));
    const std::size_t i1 = std::min(i0 + 1, in_n - 1);
    return {i0, i1, static_cast<float>(src - static_cast<double>(i0))};
}
} // namespace

Tensor bilinear_resize(const Tensor& t, std::size_t out_h, std::size_t out_w) {
    if (t.ndim() != 3) throw DimensionError("bilinear_resize expects [C,H,W], got " + shape_str(t.shape()));
    if (out_h == 0 || out_w == 0) throw DimensionError("bilinear_resize target must be >= 1");
    const std::size_t c = t.dim(0), h = t.dim(1), w = t.dim(2);
    if (out_h == h && out_w == w) return t;
    std::vector<Lerp> ys(out_h), xs(out_w);
    for (std::size_t y = 0; y < out_h; ++y) ys[y] = source_coord(y, h, out_h);
    for (std::size_t x = 0; x < out_w; ++x) xs[x] = source_coord(x, w, out_w);
    Tensor out({c, out_h, out_w});
    for (std::size_t ch = 0; ch < c; ++ch) {
        const float* src = t.ptr() + ch * h * w;
        float* dst = out.ptr() + ch * out_h * out_w;
        for (std::size_t y = 0; y < out_h; ++y) {
            const Lerp& ly = ys[y];
            const float* r0 = src + ly.i0 * w;
            const float* r1 = src + ly.i1 * w;
            for (std::size_t x = 0; x < out_w; ++x) {
                const Lerp& lx = xs[x];
                const float top = r0[lx.i0] + (r0[lx.i1] - r0[lx.i0]) * lx.frac;
                const float bot = r1[lx.i0] + (r1[lx.i1] - r1[lx.i0]) * lx.frac;
                dst[y * out_w + x] = top + (bot - top) * ly.frac;
            }
        }
    }
    return out;
}

float bilinear_sample_resized(const Tensor& map, std::size_t out_h, std::size_t out_w, std::size_t y,
                              std::size_t x) {
    if (map.ndim() != 2) throw DimensionError("bilinear_sample_resized expects [H,W]");
    if (y >= out_h || x >= out_w) throw DimensionError("bilinear_sample_resized: pixel out of range");
    const std::size_t h = map.dim(0), w = map.dim(1);
    if (out_h == h && out_w == w) return map(y, x);
    const Lerp ly = source_coord(y, h, out_h);
    const Lerp lx = source_coord(x, w, out_w);
    const float* r0 = map.ptr() + ly.i0 * w;
    const float* r1 = map.ptr() + ly.i1 * w;
    const float top = r0[lx.i0] + (r0[lx.i1] - r0[lx.i0]) * lx.frac;
    const float bot = r1[lx.i0] + (r1[lx.i1] - r1[lx.i0]) * lx.frac;
    return top + (bot - top) * ly.frac;
}

Tensor masked_avg_pool(const Tensor& features, const Tensor& mask) {
    if (features.ndim() != 3 || mask.ndim() != 2 || mask.dim(0) != features.dim(0) ||
        mask.dim(1) != features.dim(1)) {
        throw DimensionError("masked_avg_pool: features " + shape_str(features.shape()) + " vs mask " +
                             shape_str(mask.shape()));
    }
    const std::size_t pixels = mask.size(), c = features.dim(2);
    std::vector<double> acc(c, 0.0);
    std::size_t count = 0;
    for (std::size_t p = 0; p < pixels; ++p) {
        if (mask[p] <= 0.5f) continue;
        ++count;
        const float* f = features.ptr() + p * c;
        for (std::size_t k = 0; k < c; ++k) acc[k] += f[k];
    }
    if (count == 0) throw EmptyMaskError("masked_avg_pool: mask selects no pixels");
    Tensor out({c});
    for (std::size_t k = 0; k < c; ++k) out[k] = static_cast<float>(acc[k] / static_cast<double>(count));
    return out;
}

Tensor l2_normalize_pixels(const Tensor& features) {
    if (features.ndim() != 3) throw DimensionError("l2_normalize_pixels expects [h,w,c]");
    Tensor out(features.shape());
    const std::size_t c = features.dim(2);
    const std::size_t pixels = features.dim(0) * features.dim(1);
    for (std::size_t p = 0; p < pixels; ++p) {
        const float* f = features.ptr() + p * c;
        float* o = out.ptr() + p * c;
        double sq = 0.0;
        for (std::size_t k = 0; k < c; ++k) sq += static_cast<double>(f[k]) * f[k];
        const float inv = 1.0f / std::max(static_cast<float>(std::sqrt(sq)), kNormEpsilon);
        for (std::size_t k = 0; k < c; ++k) o[k] = f[k] * inv;
    }
    return out;
}

Tensor l2_normalize_vec(const Tensor& v) {
    if (v.ndim() != 1) throw DimensionError("l2_normalize_vec expects [c]");
    double sq = 0.0;
    for (float x : v.data()) sq += static_cast<double>(x) * x;
    const float inv = 1.0f / std::max(static_cast<float>(std::sqrt(sq)), kNormEpsilon);
    Tensor out(v.shape());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * inv;
    return out;
}

Tensor chw_to_hwc(const Tensor& t) {
    if (t.ndim() != 3) throw DimensionError("chw_to_hwc expects [C,H,W]");
    const std::size_t c = t.dim(0), h = t.dim(1), w = t.dim(2);
    Tensor out({h, w, c});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < h * w; ++p) out[p * c + ch] = t[ch * h * w + p];
    return out;
}

Tensor hwc_to_chw(const Tensor& t) {
    if (t.ndim() != 3) throw DimensionError("hwc_to_chw expects [H,W,C]");
    const std::size_t h = t.dim(0), w = t.dim(1), c = t.dim(2);
    Tensor out({c, h, w});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < h * w; ++p) out[ch * h * w + p] = t[p * c + ch];
    return out;
}

Tensor dihedral(const Tensor& t, unsigned code) {
    if (code >= 8) throw ConfigError("dihedral code must be < 8, got " + std::to_string(code));
    const std::size_t nd = t.ndim();
    if (nd < 2 || t.dim(nd - 1) != t.dim(nd - 2)) {
        throw DimensionError("dihedral expects square trailing axes, got " + shape_str(t.shape()));
    }
    const std::size_t n = t.dim(nd - 1);
    if (n == 0) return t;
    const std::size_t planes = t.size() / (n * n);
    Tensor out(t.shape());
    for (std::size_t p = 0; p < planes; ++p) {
        const float* src = t.ptr() + p * n * n;
        float* dst = out.ptr() + p * n * n;
        for (std::size_t y = 0; y < n; ++y) {
            for (std::size_t x = 0; x < n; ++x) {
                std::size_t sy = y, sx = x;
                if (code & 4u) std::swap(sy, sx);
                if (code & 2u) sy = n - 1 - sy;
                if (code & 1u) sx = n - 1 - sx;
                dst[y * n + x] = src[sy * n + sx];
            }
        }
    }
    return out;
}

} // namespace aop
