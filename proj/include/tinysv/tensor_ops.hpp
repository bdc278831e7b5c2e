#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tinysv/errors.hpp"
#include "tinysv/matrix.hpp"

namespace tinysv {

// Per-channel temporal convolution kernel: one kernel_size tap row per channel.
struct DepthwiseKernel {
    Matrix weights; // channels x kernel_size

    std::size_t channels() const { return weights.rows(); }
    std::size_t kernel_size() const { return weights.cols(); }
};

// Per-frame channel mixing: out = W * x + b.
struct PointwiseKernel {
    Matrix weights; // out_channels x in_channels
    std::vector<float> bias;

    std::size_t out_channels() const { return weights.rows(); }
    std::size_t in_channels() const { return weights.cols(); }
};

struct BatchNormParams {
    std::vector<float> gamma, beta, running_mean, running_var;
    float eps = 1e-5f;

    std::size_t channels() const { return gamma.size(); }
};

struct PReluParams {
    std::vector<float> slope; // one slope per channel
};

enum class Padding { same_symmetric, causal };

namespace detail {

inline void check_channels(std::size_t got, std::size_t want, const char* what) {
    require(got == want, ErrorCode::shape_error,
            std::string(what) + ": expected " + std::to_string(want) +
                " channels, got " + std::to_string(got));
}

} // namespace detail

// ---- single-frame kernels -------------------------------------------------
// The batch ops below and the streaming engine both run these, in the same
// order, so batch and stream outputs agree to float reordering noise.

inline void pointwise_frame(const PointwiseKernel& k, std::span<const float> in,
                            std::span<float> out) {
    for (std::size_t o = 0; o < k.out_channels(); ++o) {
        float acc = k.bias[o];
        const auto w = k.weights.row(o);
        for (std::size_t i = 0; i < in.size(); ++i) acc += w[i] * in[i];
        out[o] = acc;
    }
}

// Inference-time batch norm as a per-channel affine map.
struct AffineParams {
    std::vector<float> scale, shift;

    static AffineParams from_batch_norm(const BatchNormParams& p) {
        AffineParams a;
        a.scale.resize(p.channels());
        a.shift.resize(p.channels());
        for (std::size_t c = 0; c < p.channels(); ++c) {
            a.scale[c] = p.gamma[c] / std::sqrt(p.running_var[c] + p.eps);
            a.shift[c] = p.beta[c] - p.running_mean[c] * a.scale[c];
        }
        return a;
    }
};

inline void affine_frame(const AffineParams& p, std::span<float> frame) {
    for (std::size_t c = 0; c < frame.size(); ++c)
        frame[c] = frame[c] * p.scale[c] + p.shift[c];
}

inline void prelu_frame(const PReluParams& p, std::span<float> frame) {
    for (std::size_t c = 0; c < frame.size(); ++c)
        if (frame[c] < 0.0f) frame[c] *= p.slope[c];
}

inline void mfm_frame(std::span<const float> in, std::span<float> out) {
    const std::size_t half = in.size() / 2;
    for (std::size_t f = 0; f < half; ++f) out[f] = std::max(in[f], in[f + half]);
}

// ---- batch operations -----------------------------------------------------

// Temporal depthwise convolution with zero padding; output keeps the input
// frame count. same_symmetric centers the kernel, causal looks only backward.
inline Matrix depthwise_conv1d(const Matrix& x, const DepthwiseKernel& k,
                               Padding padding) {
    detail::check_channels(x.cols(), k.channels(), "depthwise_conv1d");
    require(k.kernel_size() % 2 == 1, ErrorCode::validation_error,
            "depthwise kernel size must be odd");
    const std::ptrdiff_t ksize = static_cast<std::ptrdiff_t>(k.kernel_size());
    const std::ptrdiff_t offset =
        padding == Padding::same_symmetric ? (ksize - 1) / 2 : ksize - 1;
    const std::ptrdiff_t frames = static_cast<std::ptrdiff_t>(x.rows());

    Matrix out(x.rows(), x.cols());
    for (std::ptrdiff_t t = 0; t < frames; ++t) {
        for (std::size_t c = 0; c < x.cols(); ++c) {
            float acc = 0.0f;
            const auto w = k.weights.row(c);
            for (std::ptrdiff_t j = 0; j < ksize; ++j) {
                const std::ptrdiff_t src = t + j - offset;
                if (src < 0 || src >= frames) continue;
                acc += w[static_cast<std::size_t>(j)] *
                       x.at(static_cast<std::size_t>(src), c);
            }
            out.at(static_cast<std::size_t>(t), c) = acc;
        }
    }
    return out;
}

inline Matrix pointwise_conv1d(const Matrix& x, const PointwiseKernel& k) {
    detail::check_channels(x.cols(), k.in_channels(), "pointwise_conv1d");
    require(k.bias.size() == k.out_channels(), ErrorCode::shape_error,
            "pointwise_conv1d: bias length mismatch");
    Matrix out(x.rows(), k.out_channels());
    for (std::size_t t = 0; t < x.rows(); ++t) pointwise_frame(k, x.row(t), out.row(t));
    return out;
}

inline Matrix batch_norm_infer(const Matrix& x, const BatchNormParams& p) {
    detail::check_channels(x.cols(), p.channels(), "batch_norm_infer");
    require(p.beta.size() == p.channels() && p.running_mean.size() == p.channels() &&
                p.running_var.size() == p.channels(),
            ErrorCode::shape_error, "batch_norm_infer: parameter length mismatch");
    Matrix out(x.rows(), x.cols());
    for (std::size_t c = 0; c < x.cols(); ++c) {
        const float inv_std = 1.0f / std::sqrt(p.running_var[c] + p.eps);
        for (std::size_t t = 0; t < x.rows(); ++t)
            out.at(t, c) = p.gamma[c] * (x.at(t, c) - p.running_mean[c]) * inv_std +
                           p.beta[c];
    }
    return out;
}

// Folds inference-time batch norm into the preceding pointwise convolution:
// pointwise(x, folded) == batch_norm_infer(pointwise(x, k), p).
inline PointwiseKernel fold_batch_norm(const PointwiseKernel& k,
                                       const BatchNormParams& p) {
    detail::check_channels(k.out_channels(), p.channels(), "fold_batch_norm");
    PointwiseKernel folded = k;
    for (std::size_t o = 0; o < k.out_channels(); ++o) {
        const float scale = p.gamma[o] / std::sqrt(p.running_var[o] + p.eps);
        auto row = folded.weights.row(o);
        for (std::size_t i = 0; i < k.in_channels(); ++i) row[i] *= scale;
        folded.bias[o] = scale * (k.bias[o] - p.running_mean[o]) + p.beta[o];
    }
    return folded;
}

inline Matrix prelu(const Matrix& x, const PReluParams& p) {
    detail::check_channels(x.cols(), p.slope.size(), "prelu");
    Matrix out = x;
    for (std::size_t t = 0; t < out.rows(); ++t) prelu_frame(p, out.row(t));
    return out;
}

// Max feature map: pairwise max across channel halves, 2F -> F channels.
inline Matrix mfm(const Matrix& x) {
    require(x.cols() % 2 == 0, ErrorCode::shape_error,
            "mfm needs an even channel count, got " + std::to_string(x.cols()));
    Matrix out(x.rows(), x.cols() / 2);
    for (std::size_t t = 0; t < x.rows(); ++t) mfm_frame(x.row(t), out.row(t));
    return out;
}

// Temporal max-pool, kernel 2 stride 2; a trailing odd frame is dropped.
inline Matrix max_pool1d(const Matrix& x) {
    Matrix out(x.rows() / 2, x.cols());
    for (std::size_t t = 0; t < out.rows(); ++t)
        for (std::size_t c = 0; c < x.cols(); ++c)
            out.at(t, c) = std::max(x.at(2 * t, c), x.at(2 * t + 1, c));
    return out;
}

struct TimeSpan {
    std::size_t start = 0;
    std::size_t length = 0;
};

// Zeroes the frames covered by the given spans; spans may exceed the matrix
// and are clipped.
inline Matrix time_mask(const Matrix& x, std::span<const TimeSpan> spans) {
    Matrix out = x;
    for (const TimeSpan& s : spans) {
        const std::size_t end = std::min(x.rows(), s.start + s.length);
        for (std::size_t t = std::min(s.start, x.rows()); t < end; ++t)
            std::fill(out.row(t).begin(), out.row(t).end(), 0.0f);
    }
    return out;
}

} // namespace tinysv
