#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "tinysv/errors.hpp"
#include "tinysv/fft.hpp"
#include "tinysv/matrix.hpp"

namespace tinysv {

// Log-Mel front end configuration. The windowing, FFT size and Mel-scale
// variant are recorded here (and therefore inside the weight container) so a
// model file always names the front end it was trained against.
struct FeatureConfig {
    int sample_rate_hz = 16000;
    int n_mels = 64;
    int window_ms = 20;
    int hop_ms = 10;
    float fmin_hz = 0.0f;
    float fmax_hz = 8000.0f;
    float log_floor = 1e-10f;
    int fft_size = 512;                  // power of two, >= window_samples()
    std::string window_fn = "hamming";   // "hamming" | "hann"
    std::string mel_scale = "htk";       // only "htk" is implemented

    int window_samples() const { return sample_rate_hz * window_ms / 1000; }
    int hop_samples() const { return sample_rate_hz * hop_ms / 1000; }
    double frame_rate_hz() const { return 1000.0 / hop_ms; }
};

inline void validate(const FeatureConfig& cfg) {
    require(cfg.sample_rate_hz == 16000, ErrorCode::validation_error,
            "features.sample_rate_hz must be 16000 (resampling is not performed)");
    require(cfg.n_mels >= 1, ErrorCode::validation_error, "features.n_mels must be >= 1");
    require(cfg.hop_ms > 0 && cfg.window_ms >= cfg.hop_ms, ErrorCode::validation_error,
            "features.window_ms must be >= features.hop_ms > 0");
    require(cfg.fmin_hz >= 0.0f && cfg.fmin_hz < cfg.fmax_hz &&
                cfg.fmax_hz <= static_cast<float>(cfg.sample_rate_hz) / 2.0f,
            ErrorCode::validation_error,
            "features: need 0 <= fmin_hz < fmax_hz <= sample_rate_hz/2");
    require(cfg.log_floor > 0.0f, ErrorCode::validation_error,
            "features.log_floor must be positive");
    require(cfg.fft_size >= cfg.window_samples() &&
                (cfg.fft_size & (cfg.fft_size - 1)) == 0,
            ErrorCode::validation_error,
            "features.fft_size must be a power of two >= the window length");
    require(cfg.window_fn == "hamming" || cfg.window_fn == "hann",
            ErrorCode::validation_error,
            "features.window_fn must be \"hamming\" or \"hann\"");
    require(cfg.mel_scale == "htk", ErrorCode::validation_error,
            "features.mel_scale must be \"htk\"");
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular HTK-style Mel filterbank, n_mels x (fft_size/2 + 1).
inline Matrix mel_filterbank(const FeatureConfig& cfg) {
    const std::size_t bins = static_cast<std::size_t>(cfg.fft_size) / 2 + 1;
    const std::size_t m = static_cast<std::size_t>(cfg.n_mels);
    const double mel_lo = hz_to_mel(cfg.fmin_hz);
    const double mel_hi = hz_to_mel(cfg.fmax_hz);

    std::vector<double> edges_hz(m + 2);
    for (std::size_t i = 0; i < m + 2; ++i)
        edges_hz[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                             static_cast<double>(m + 1));

    Matrix fb(m, bins, 0.0f);
    const double bin_hz = static_cast<double>(cfg.sample_rate_hz) / cfg.fft_size;
    for (std::size_t f = 0; f < m; ++f) {
        const double lo = edges_hz[f], mid = edges_hz[f + 1], hi = edges_hz[f + 2];
        for (std::size_t k = 0; k < bins; ++k) {
            const double freq = bin_hz * static_cast<double>(k);
            double w = 0.0;
            if (freq > lo && freq < mid)
                w = (freq - lo) / (mid - lo);
            else if (freq >= mid && freq < hi)
                w = (hi - freq) / (hi - mid);
            fb.at(f, k) = static_cast<float>(w);
        }
    }
    return fb;
}

namespace detail {

// Precomputed window + filterbank shared by the batch and streaming paths, so
// both compute bit-identical frames.
class MelFrontend {
public:
    explicit MelFrontend(const FeatureConfig& cfg)
        : cfg_(cfg), filterbank_(mel_filterbank(cfg)) {
        validate(cfg);
        const int n = cfg.window_samples();
        window_.resize(n);
        const float arc = 2.0f * std::numbers::pi_v<float> / static_cast<float>(n - 1);
        for (int i = 0; i < n; ++i) {
            window_[i] = cfg.window_fn == "hann"
                             ? 0.5f - 0.5f * std::cos(arc * static_cast<float>(i))
                             : 0.54f - 0.46f * std::cos(arc * static_cast<float>(i));
        }
    }

    const FeatureConfig& config() const { return cfg_; }

    // One log-Mel frame from exactly window_samples() PCM samples.
    void frame_log_mel(std::span<const std::int16_t> pcm, std::span<float> out) const {
        std::vector<float> windowed(window_.size());
        for (std::size_t i = 0; i < window_.size(); ++i)
            windowed[i] = static_cast<float>(pcm[i]) * (1.0f / 32768.0f) * window_[i];
        const std::vector<float> power =
            dsp::power_spectrum(windowed, static_cast<std::size_t>(cfg_.fft_size));
        for (std::size_t f = 0; f < filterbank_.rows(); ++f) {
            float energy = 0.0f;
            const auto weights = filterbank_.row(f);
            for (std::size_t k = 0; k < power.size(); ++k)
                energy += weights[k] * power[k];
            out[f] = std::log(std::max(energy, cfg_.log_floor));
        }
    }

private:
    FeatureConfig cfg_;
    Matrix filterbank_;
    std::vector<float> window_;
};

} // namespace detail

// PCM -> log-Mel frames. T = floor((len - window) / hop) + 1; trailing samples
// that do not fill a window are dropped (the streaming front end does the same).
inline Matrix compute_log_mel(std::span<const std::int16_t> pcm, int sample_rate_hz,
                              const FeatureConfig& cfg) {
    require(sample_rate_hz == cfg.sample_rate_hz, ErrorCode::unsupported_format,
            "sample rate " + std::to_string(sample_rate_hz) + " Hz does not match the " +
                std::to_string(cfg.sample_rate_hz) + " Hz front end");
    const std::size_t window = static_cast<std::size_t>(cfg.window_samples());
    const std::size_t hop = static_cast<std::size_t>(cfg.hop_samples());
    require(pcm.size() >= window, ErrorCode::signal_too_short,
            "need at least " + std::to_string(window) + " samples, got " +
                std::to_string(pcm.size()));

    const detail::MelFrontend fe(cfg);
    const std::size_t frames = (pcm.size() - window) / hop + 1;
    Matrix out(frames, static_cast<std::size_t>(cfg.n_mels));
    for (std::size_t t = 0; t < frames; ++t)
        fe.frame_log_mel(pcm.subspan(t * hop, window), out.row(t));
    return out;
}

enum class MvnMode { utterance, causal, precomputed };

inline const char* mvn_mode_name(MvnMode m) {
    switch (m) {
        case MvnMode::utterance: return "utterance";
        case MvnMode::causal: return "causal";
        case MvnMode::precomputed: return "precomputed";
    }
    return "?";
}

struct MvnStats {
    std::vector<float> mean;
    std::vector<float> var;
};

inline constexpr double kMvnVarianceFloor = 1e-8;

namespace detail {

// Running per-channel mean/variance over frames 0..t. Both the batch causal
// path and the streaming front end use this class so their outputs match
// exactly for any chunking.
class CausalMvn {
public:
    explicit CausalMvn(std::size_t channels)
        : sum_(channels, 0.0), sumsq_(channels, 0.0) {}

    void push_and_normalize(std::span<float> frame) {
        ++count_;
        const double inv_n = 1.0 / static_cast<double>(count_);
        for (std::size_t c = 0; c < frame.size(); ++c) {
            const double x = static_cast<double>(frame[c]);
            sum_[c] += x;
            sumsq_[c] += x * x;
            const double mean = sum_[c] * inv_n;
            double var = sumsq_[c] * inv_n - mean * mean;
            if (var < kMvnVarianceFloor) var = kMvnVarianceFloor;
            frame[c] = static_cast<float>((x - mean) / std::sqrt(var));
        }
    }

private:
    std::vector<double> sum_, sumsq_;
    std::size_t count_ = 0;
};

} // namespace detail

// Mean/variance normalization. Utterance mode uses whole-matrix statistics;
// causal mode normalizes frame t with statistics of frames 0..t.
inline Matrix apply_mvn(const Matrix& feat, MvnMode mode) {
    require(mode != MvnMode::precomputed, ErrorCode::unsupported_mode,
            "precomputed MVN requires explicit statistics");
    Matrix out = feat;
    if (feat.rows() == 0) return out;
    if (mode == MvnMode::causal) {
        detail::CausalMvn mvn(feat.cols());
        for (std::size_t t = 0; t < out.rows(); ++t) mvn.push_and_normalize(out.row(t));
        return out;
    }
    const double inv_n = 1.0 / static_cast<double>(feat.rows());
    for (std::size_t c = 0; c < feat.cols(); ++c) {
        double sum = 0.0, sumsq = 0.0;
        for (std::size_t t = 0; t < feat.rows(); ++t) {
            const double x = static_cast<double>(feat.at(t, c));
            sum += x;
            sumsq += x * x;
        }
        const double mean = sum * inv_n;
        double var = sumsq * inv_n - mean * mean;
        if (var < kMvnVarianceFloor) var = kMvnVarianceFloor;
        const double inv_std = 1.0 / std::sqrt(var);
        for (std::size_t t = 0; t < feat.rows(); ++t)
            out.at(t, c) =
                static_cast<float>((static_cast<double>(feat.at(t, c)) - mean) * inv_std);
    }
    return out;
}

inline Matrix apply_mvn(const Matrix& feat, const MvnStats& stats) {
    require(stats.mean.size() == feat.cols() && stats.var.size() == feat.cols(),
            ErrorCode::shape_error, "precomputed MVN statistics width mismatch");
    Matrix out = feat;
    for (std::size_t c = 0; c < feat.cols(); ++c) {
        const double mean = stats.mean[c];
        double var = stats.var[c];
        if (var < kMvnVarianceFloor) var = kMvnVarianceFloor;
        const double inv_std = 1.0 / std::sqrt(var);
        for (std::size_t t = 0; t < feat.rows(); ++t)
            out.at(t, c) =
                static_cast<float>((static_cast<double>(feat.at(t, c)) - mean) * inv_std);
    }
    return out;
}

// Chunked front end. Emits exactly the frames the batch path would produce on
// the concatenated audio, for any chunking; nothing is lost between pushes.
// Utterance-level MVN needs the whole signal and is rejected here.
class FeatureStream {
public:
    FeatureStream(const FeatureConfig& cfg, MvnMode mode)
        : fe_(cfg), mode_(mode), causal_(static_cast<std::size_t>(cfg.n_mels)) {
        require(mode == MvnMode::causal, ErrorCode::unsupported_mode,
                std::string(mvn_mode_name(mode)) +
                    " MVN is not available in streaming mode (use causal or "
                    "precomputed statistics)");
    }

    FeatureStream(const FeatureConfig& cfg, MvnStats stats)
        : fe_(cfg), mode_(MvnMode::precomputed), stats_(std::move(stats)),
          causal_(static_cast<std::size_t>(cfg.n_mels)) {
        require(stats_.mean.size() == static_cast<std::size_t>(cfg.n_mels) &&
                    stats_.var.size() == static_cast<std::size_t>(cfg.n_mels),
                ErrorCode::shape_error, "precomputed MVN statistics width mismatch");
        inv_std_.resize(stats_.var.size());
        for (std::size_t c = 0; c < inv_std_.size(); ++c) {
            double var = stats_.var[c];
            if (var < kMvnVarianceFloor) var = kMvnVarianceFloor;
            inv_std_[c] = 1.0 / std::sqrt(var);
        }
    }

    // Returns zero or more normalized feature frames.
    Matrix push(std::span<const std::int16_t> chunk) {
        buf_.insert(buf_.end(), chunk.begin(), chunk.end());
        const std::size_t window = static_cast<std::size_t>(fe_.config().window_samples());
        const std::size_t hop = static_cast<std::size_t>(fe_.config().hop_samples());
        Matrix out(0, static_cast<std::size_t>(fe_.config().n_mels));
        std::vector<float> frame(out.cols());
        std::size_t consumed = 0;
        while (buf_.size() - consumed >= window) {
            fe_.frame_log_mel({buf_.data() + consumed, window}, frame);
            if (mode_ == MvnMode::causal) {
                causal_.push_and_normalize(frame);
            } else {
                for (std::size_t c = 0; c < frame.size(); ++c)
                    frame[c] = static_cast<float>(
                        (static_cast<double>(frame[c]) - stats_.mean[c]) * inv_std_[c]);
            }
            out.append_row(frame);
            consumed += hop;
        }
        buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(consumed));
        return out;
    }

private:
    detail::MelFrontend fe_;
    MvnMode mode_;
    MvnStats stats_;
    std::vector<double> inv_std_;
    detail::CausalMvn causal_;
    std::vector<std::int16_t> buf_;
};

} // namespace tinysv
