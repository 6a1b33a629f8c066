#pragma once

#include <cstddef>

#include "aop/tensor.hpp"

namespace aop {

// Numeric kernels. Everything here is a pure function of its arguments.
// Layouts: images/feature stacks are [C,H,W]; "pixel" feature maps used by the
// elimination math are [h,w,c].

/// Cross-correlation with zero padding. input [C_in,H,W], weights
/// [C_out,C_in,kH,kW], bias [C_out] -> [C_out,H',W'] with
/// H' = (H + 2*padding - kH) / stride + 1.
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, int stride,
              int padding);

struct ConvGrads {
    Tensor input;  // empty when not requested
    Tensor weights;
    Tensor bias;
};

/// Exact gradients of sum(grad_out * conv2d(input, weights, bias)).
ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weights,
                          int stride, int padding, bool need_input_grad = true);

Tensor relu(const Tensor& t);
/// Passes grad where input > 0; the subgradient at exactly 0 is 0.
Tensor relu_backward(const Tensor& grad_out, const Tensor& input);

Tensor sigmoid(const Tensor& t);
/// Gradient through sigmoid given its forward output s: grad * s * (1 - s).
Tensor sigmoid_backward(const Tensor& grad_out, const Tensor& output);

/// Concatenate [C_a,H,W] and [C_b,H,W] along channels.
Tensor concat_channels(const Tensor& a, const Tensor& b);

enum class Border { reflect, zero };

/// Separable Gaussian blur of a [H,W] map. Kernel radius ceil(3*sigma),
/// normalized to sum 1. Borders are half-sample symmetric (reflect) or, with
/// Border::zero, blank. sigma == 0 returns the input unchanged.
Tensor gaussian_filter(const Tensor& map, double sigma, Border border = Border::reflect);

/// Normalized 1-D Gaussian taps, length 2*ceil(3*sigma)+1.
std::vector<float> gaussian_kernel1d(double sigma);

/// Map an out-of-range index back into [0, n) by half-sample reflection.
std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n);

/// Bilinear resize of [C,H,W] to [C,H2,W2], half-pixel centers
/// (src = (dst + 0.5) * H / H2 - 0.5, clamped).
Tensor bilinear_resize(const Tensor& t, std::size_t out_h, std::size_t out_w);

/// Value of bilinear_resize(map[1,H,W] -> out_h x out_w) at one output pixel,
/// without materializing the resized map.
float bilinear_sample_resized(const Tensor& map, std::size_t out_h, std::size_t out_w,
                              std::size_t y, std::size_t x);

/// Mean of the [h,w,c] feature map over pixels where mask [h,w] > 0.5.
/// Throws EmptyMaskError when the mask selects nothing.
Tensor masked_avg_pool(const Tensor& features, const Tensor& mask);

inline constexpr float kNormEpsilon = 1e-8f;

/// Divide every pixel's c-vector of an [h,w,c] map by max(||v||, 1e-8).
Tensor l2_normalize_pixels(const Tensor& features);
Tensor l2_normalize_vec(const Tensor& v);

/// [C,H,W] -> [H,W,C]
Tensor chw_to_hwc(const Tensor& t);
/// [H,W,C] -> [C,H,W]
Tensor hwc_to_chw(const Tensor& t);

/// One of the 8 symmetries of the square on the trailing [n,n] axes of every
/// plane. out[y][x] = in[y'][x'], where (y', x') is (y, x) swapped if bit 2 is
/// set, then with the row mirrored if bit 1 and the column mirrored if bit 0.
Tensor dihedral(const Tensor& t, unsigned code);

} // namespace aop
