#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tinysv/errors.hpp"
#include "tinysv/matrix.hpp"
#include "tinysv/weights.hpp"

namespace tinysv {

// Ghost-augmented VLAD aggregation. K contributing clusters plus G ghost
// clusters that take part in the softmax assignment but contribute nothing to
// the embedding.
struct VladConfig {
    std::size_t clusters = 32;  // K
    std::size_t ghosts = 3;     // G
    std::size_t in_channels = 96;
    std::size_t embed_dim = 96;

    std::size_t total_clusters() const { return clusters + ghosts; } // O = K + G
};

inline void validate(const VladConfig& cfg) {
    require(cfg.clusters >= 1, ErrorCode::validation_error, "vlad.clusters must be >= 1");
    require(cfg.in_channels >= 1, ErrorCode::validation_error,
            "vlad.in_channels must be >= 1");
    require(cfg.embed_dim >= 1, ErrorCode::validation_error,
            "vlad.embed_dim must be >= 1");
}

struct VladParams {
    Matrix assign_weights;              // O x C
    std::vector<float> assign_bias;     // O
    Matrix centroids;                   // K x C (ghosts own no centroid)
    Matrix projection;                  // D x C, shared across clusters
    std::vector<float> projection_bias; // D

    std::size_t total_clusters() const { return assign_weights.rows(); }
    std::size_t clusters() const { return centroids.rows(); }
    std::size_t channels() const { return assign_weights.cols(); }
    std::size_t embed_dim() const { return projection.rows(); }
};

inline std::map<std::string, std::vector<std::size_t>>
vlad_tensor_shapes(const VladConfig& cfg) {
    return {
        {"vlad.assign_weight", {cfg.total_clusters(), cfg.in_channels}},
        {"vlad.assign_bias", {cfg.total_clusters()}},
        {"vlad.centroids", {cfg.clusters, cfg.in_channels}},
        {"vlad.proj_weight", {cfg.embed_dim, cfg.in_channels}},
        {"vlad.proj_bias", {cfg.embed_dim}},
    };
}

inline VladParams load_vlad_params(const VladConfig& cfg, const WeightSet& ws) {
    validate(cfg);
    VladParams p;
    p.assign_weights = tensor_as_matrix(
        ws.get("vlad.assign_weight", {{cfg.total_clusters(), cfg.in_channels}}));
    p.assign_bias = ws.get("vlad.assign_bias", {{cfg.total_clusters()}}).data;
    p.centroids =
        tensor_as_matrix(ws.get("vlad.centroids", {{cfg.clusters, cfg.in_channels}}));
    p.projection =
        tensor_as_matrix(ws.get("vlad.proj_weight", {{cfg.embed_dim, cfg.in_channels}}));
    p.projection_bias = ws.get("vlad.proj_bias", {{cfg.embed_dim}}).data;
    return p;
}

// Softmax cluster assignment per frame; rows sum to 1 across all O clusters,
// ghosts included.
inline Matrix soft_assign(const Matrix& frames, const VladParams& p) {
    require(frames.cols() == p.channels(), ErrorCode::shape_error,
            "soft_assign: expected " + std::to_string(p.channels()) +
                " channels, got " + std::to_string(frames.cols()));
    const std::size_t total = p.total_clusters();
    Matrix out(frames.rows(), total);
    std::vector<float> logits(total);
    for (std::size_t t = 0; t < frames.rows(); ++t) {
        const auto x = frames.row(t);
        float max_logit = -std::numeric_limits<float>::infinity();
        for (std::size_t o = 0; o < total; ++o) {
            float acc = p.assign_bias[o];
            const auto w = p.assign_weights.row(o);
            for (std::size_t c = 0; c < x.size(); ++c) acc += w[c] * x[c];
            logits[o] = acc;
            max_logit = std::max(max_logit, acc);
        }
        float denom = 0.0f;
        for (std::size_t o = 0; o < total; ++o) {
            logits[o] = std::exp(logits[o] - max_logit);
            denom += logits[o];
        }
        for (std::size_t o = 0; o < total; ++o) out.at(t, o) = logits[o] / denom;
    }
    return out;
}

// Streamable part of the aggregation: running weighted feature sums and
// assignment mass per contributing cluster. Additive under concatenation.
class VladAccumulator {
public:
    VladAccumulator(std::size_t clusters, std::size_t channels)
        : sums_(clusters, channels, 0.0f), mass_(clusters, 0.0f) {}

    explicit VladAccumulator(const VladConfig& cfg)
        : VladAccumulator(cfg.clusters, cfg.in_channels) {}

    void accumulate(const Matrix& frames, const Matrix& assignments) {
        require(frames.cols() == sums_.cols(), ErrorCode::shape_error,
                "accumulate: frame channel mismatch");
        require(assignments.rows() == frames.rows(), ErrorCode::shape_error,
                "accumulate: assignment row count mismatch");
        require(assignments.cols() >= sums_.rows(), ErrorCode::shape_error,
                "accumulate: fewer assignment columns than clusters");
        for (std::size_t t = 0; t < frames.rows(); ++t) {
            const auto x = frames.row(t);
            for (std::size_t k = 0; k < sums_.rows(); ++k) { // ghost columns ignored
                const float a = assignments.at(t, k);
                auto sum = sums_.row(k);
                for (std::size_t c = 0; c < x.size(); ++c) sum[c] += a * x[c];
                mass_[k] += a;
            }
        }
        frames_seen_ += frames.rows();
    }

    const Matrix& weighted_feature_sums() const { return sums_; }
    const std::vector<float>& assignment_mass() const { return mass_; }
    std::size_t frames_seen() const { return frames_seen_; }

private:
    Matrix sums_; // K x C
    std::vector<float> mass_;
    std::size_t frames_seen_ = 0;
};

// Residuals against the centroids, intra-normalized per cluster, pushed
// through the shared projection and averaged over the K clusters; the final
// embedding is L2-normalized.
inline std::vector<float> finalize_embedding(const VladAccumulator& acc,
                                             const VladParams& p) {
    require(acc.frames_seen() >= 1, ErrorCode::empty_utterance,
            "cannot finalize an embedding over zero frames");
    const std::size_t K = p.clusters();
    const std::size_t C = p.channels();
    const std::size_t D = p.embed_dim();
    require(acc.weighted_feature_sums().rows() == K &&
                acc.weighted_feature_sums().cols() == C,
            ErrorCode::shape_error, "finalize: accumulator shape mismatch");

    // mean over clusters of the intra-normalized residuals
    std::vector<float> mean_desc(C, 0.0f);
    std::vector<float> residual(C);
    const float inv_k = 1.0f / static_cast<float>(K);
    for (std::size_t k = 0; k < K; ++k) {
        const auto sum = acc.weighted_feature_sums().row(k);
        const auto centroid = p.centroids.row(k);
        const float mass = acc.assignment_mass()[k];
        float norm_sq = 0.0f;
        for (std::size_t c = 0; c < C; ++c) {
            residual[c] = sum[c] - mass * centroid[c];
            norm_sq += residual[c] * residual[c];
        }
        const float norm = std::sqrt(norm_sq);
        if (norm > 0.0f) {
            const float inv = 1.0f / norm;
            for (std::size_t c = 0; c < C; ++c) mean_desc[c] += residual[c] * inv * inv_k;
        } // a zero residual stays zero and contributes nothing
    }

    // shared cluster-wise projection: (1/K) sum_k (P v_k + b) == P mean + b
    std::vector<float> emb(D);
    float norm_sq = 0.0f;
    for (std::size_t d = 0; d < D; ++d) {
        float acc_d = p.projection_bias[d];
        const auto w = p.projection.row(d);
        for (std::size_t c = 0; c < C; ++c) acc_d += w[c] * mean_desc[c];
        emb[d] = acc_d;
        norm_sq += acc_d * acc_d;
    }
    const float norm = std::sqrt(norm_sq);
    if (norm > 0.0f)
        for (float& v : emb) v /= norm;
    return emb;
}

} // namespace tinysv
