#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tinysv/errors.hpp"

namespace tinysv {

// Additive-angular-margin (ArcFace) objective with focal modulation. Forward
// values only; gradients are checked numerically, so everything here runs in
// double precision.
struct ArcFaceConfig {
    double scale = 15.0;  // s
    double margin = 0.5;  // m, radians
    std::size_t num_classes = 0;
    double focal_gamma = 2.0;
};

inline void validate(const ArcFaceConfig& cfg) {
    require(cfg.scale > 0.0, ErrorCode::validation_error, "arcface.scale must be > 0");
    require(cfg.margin >= 0.0 && cfg.margin < 3.14159265358979323846,
            ErrorCode::validation_error, "arcface.margin must be in [0, pi)");
    require(cfg.focal_gamma >= 0.0, ErrorCode::validation_error,
            "arcface.focal_gamma must be >= 0");
    require(cfg.num_classes >= 1, ErrorCode::validation_error,
            "arcface.num_classes must be >= 1");
}

// Class anchor matrix; rows are L2-normalized before use.
struct ClassAnchors {
    std::size_t num_classes = 0;
    std::size_t dim = 0;
    std::vector<double> data; // row-major num_classes x dim

    std::span<const double> row(std::size_t i) const {
        return {data.data() + i * dim, dim};
    }
};

inline constexpr double kCosineClamp = 1.0 - 1e-7;

// s * cos(theta_j) for every class, with the margin added to the target
// angle: logit_target = s * cos(theta_target + m).
inline std::vector<double> arcface_logits(std::span<const double> embedding,
                                          const ClassAnchors& anchors,
                                          std::size_t target, const ArcFaceConfig& cfg) {
    require(target < anchors.num_classes, ErrorCode::bad_index,
            "arcface_logits: target class " + std::to_string(target) + " out of range");
    require(embedding.size() == anchors.dim, ErrorCode::shape_error,
            "arcface_logits: embedding dimension mismatch");
    double norm_sq = 0.0;
    for (double v : embedding) norm_sq += v * v;
    require(norm_sq > 0.0, ErrorCode::zero_vector, "arcface_logits: zero embedding");
    const double inv_norm = 1.0 / std::sqrt(norm_sq);

    std::vector<double> logits(anchors.num_classes);
    for (std::size_t j = 0; j < anchors.num_classes; ++j) {
        const auto a = anchors.row(j);
        double dot = 0.0, a_sq = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            dot += a[i] * embedding[i];
            a_sq += a[i] * a[i];
        }
        require(a_sq > 0.0, ErrorCode::zero_vector,
                "arcface_logits: zero anchor row " + std::to_string(j));
        double cos_theta = dot * inv_norm / std::sqrt(a_sq);
        cos_theta = std::clamp(cos_theta, -kCosineClamp, kCosineClamp);
        if (j == target) {
            const double theta = std::acos(cos_theta);
            logits[j] = cfg.scale * std::cos(theta + cfg.margin);
        } else {
            logits[j] = cfg.scale * cos_theta;
        }
    }
    return logits;
}

// Focal cross-entropy: -(1 - p_target)^gamma * ln(p_target), with the softmax
// evaluated through log-sum-exp.
inline double focal_cross_entropy(std::span<const double> logits, std::size_t target,
                                  double gamma) {
    require(target < logits.size(), ErrorCode::bad_index,
            "focal_cross_entropy: target index out of range");
    double max_logit = logits[0];
    for (double l : logits) max_logit = std::max(max_logit, l);
    double sum_exp = 0.0;
    for (double l : logits) sum_exp += std::exp(l - max_logit);
    const double log_p = logits[target] - max_logit - std::log(sum_exp);
    const double p = std::exp(log_p);
    const double modulation = gamma == 0.0 ? 1.0 : std::pow(1.0 - p, gamma);
    return -modulation * log_p;
}

// Central-difference gradient of a scalar function.
template <typename F>
std::vector<double> numeric_gradient(F&& f, std::span<const double> x,
                                     double h = 1e-4) {
    std::vector<double> grad(x.size());
    std::vector<double> probe(x.begin(), x.end());
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        const double up = f(std::span<const double>(probe));
        probe[i] = x[i] - h;
        const double down = f(std::span<const double>(probe));
        probe[i] = x[i];
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

} // namespace tinysv
