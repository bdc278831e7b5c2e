#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "tinysv/errors.hpp"

namespace tinysv::dsp {

// In-place iterative radix-2 FFT. Size must be a power of two.
inline void fft_inplace(std::vector<std::complex<float>>& a) {
    const std::size_t n = a.size();
    require(n != 0 && (n & (n - 1)) == 0, ErrorCode::validation_error,
            "fft size must be a power of two");

    // bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }

    for (std::size_t len = 2; len <= n; len <<= 1) {
        const float ang = -2.0f * std::numbers::pi_v<float> / static_cast<float>(len);
        const std::complex<float> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<float> w(1.0f, 0.0f);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<float> u = a[i + k];
                const std::complex<float> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

// Power spectrum |X_k|^2 of a real frame zero-padded to nfft.
// Returns nfft/2 + 1 bins.
inline std::vector<float> power_spectrum(std::span<const float> frame, std::size_t nfft) {
    require(frame.size() <= nfft, ErrorCode::validation_error,
            "power_spectrum: frame longer than fft size");
    std::vector<std::complex<float>> buf(nfft, {0.0f, 0.0f});
    for (std::size_t i = 0; i < frame.size(); ++i) buf[i] = {frame[i], 0.0f};
    fft_inplace(buf);
    std::vector<float> power(nfft / 2 + 1);
    for (std::size_t k = 0; k < power.size(); ++k) {
        const float re = buf[k].real();
        const float im = buf[k].imag();
        power[k] = re * re + im * im;
    }
    return power;
}

} // namespace tinysv::dsp
