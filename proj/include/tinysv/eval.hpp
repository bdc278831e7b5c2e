#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tinysv/errors.hpp"

namespace tinysv {

// Cosine similarity, clamped to [-1, 1]. Accumulates in double.
inline double cosine_score(std::span<const float> a, std::span<const float> b) {
    require(a.size() == b.size(), ErrorCode::shape_error,
            "cosine_score: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    require(na > 0.0 && nb > 0.0, ErrorCode::zero_vector,
            "cosine_score: zero vector");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

struct SpeakerProfile {
    std::vector<float> embedding; // unit L2 norm
    std::size_t utterance_count = 0;
};

// L2-normalized mean of L2-normalized embeddings.
inline SpeakerProfile enroll(std::span<const std::vector<float>> embeddings) {
    require(!embeddings.empty(), ErrorCode::empty_enrollment,
            "enroll: no embeddings given");
    const std::size_t dim = embeddings.front().size();
    std::vector<double> mean(dim, 0.0);
    for (const std::vector<float>& e : embeddings) {
        require(e.size() == dim, ErrorCode::shape_error,
                "enroll: mixed embedding dimensions");
        double norm_sq = 0.0;
        for (float v : e) norm_sq += static_cast<double>(v) * v;
        require(norm_sq > 0.0, ErrorCode::zero_vector, "enroll: zero embedding");
        const double inv = 1.0 / std::sqrt(norm_sq);
        for (std::size_t i = 0; i < dim; ++i) mean[i] += e[i] * inv;
    }
    double norm_sq = 0.0;
    for (double v : mean) norm_sq += v * v;
    require(norm_sq > 0.0, ErrorCode::zero_vector,
            "enroll: embeddings cancel to a zero profile");
    const double inv = 1.0 / std::sqrt(norm_sq);
    SpeakerProfile p;
    p.utterance_count = embeddings.size();
    p.embedding.resize(dim);
    for (std::size_t i = 0; i < dim; ++i)
        p.embedding[i] = static_cast<float>(mean[i] * inv);
    return p;
}

struct Trial {
    bool target = false;
    std::string path_a, path_b;
};

struct TrialSet {
    std::vector<Trial> trials;
};

// One trial per line: "label path_a path_b", label 1 = target, 0 = nontarget.
// Blank lines are skipped; anything else malformed is an error naming the
// 1-based line number.
inline TrialSet parse_trials(const std::string& text) {
    TrialSet set;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t eol = std::min(text.find('\n', pos), text.size());
        std::string line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) {
            if (pos > text.size()) break;
            continue;
        }
        std::vector<std::string> fields;
        std::size_t i = 0;
        while (i < line.size()) {
            while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
            std::size_t start = i;
            while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
            if (i > start) fields.push_back(line.substr(start, i - start));
        }
        require(fields.size() == 3, ErrorCode::malformed_line,
                "line " + std::to_string(line_no) + ": expected 3 fields, got " +
                    std::to_string(fields.size()));
        require(fields[0] == "0" || fields[0] == "1", ErrorCode::malformed_line,
                "line " + std::to_string(line_no) + ": label must be 0 or 1, got \"" +
                    fields[0] + "\"");
        set.trials.push_back({fields[0] == "1", fields[1], fields[2]});
        if (pos > text.size()) break;
    }
    return set;
}

struct ScoreSet {
    std::vector<double> scores;
    std::vector<bool> labels; // true = target

    void add(double score, bool target) {
        scores.push_back(score);
        labels.push_back(target);
    }
    std::size_t size() const { return scores.size(); }
};

struct EerResult {
    double eer = 0.0;
    double threshold = 0.0;
};

// Equal error rate. FAR(t) = fraction of nontarget scores >= t, FRR(t) =
// fraction of target scores < t. Operating points are the sorted unique
// scores plus a sentinel above the maximum; the crossing is found by linear
// interpolation between adjacent points, short-circuiting when FAR == FRR
// exactly at a point.
inline EerResult compute_eer(const ScoreSet& set) {
    std::vector<double> targets, nontargets;
    for (std::size_t i = 0; i < set.size(); ++i) {
        require(std::isfinite(set.scores[i]), ErrorCode::validation_error,
                "compute_eer: non-finite score");
        (set.labels[i] ? targets : nontargets).push_back(set.scores[i]);
    }
    require(!targets.empty() && !nontargets.empty(), ErrorCode::one_class_only,
            "compute_eer: need at least one target and one nontarget score");
    std::sort(targets.begin(), targets.end());
    std::sort(nontargets.begin(), nontargets.end());

    std::vector<double> points;
    points.reserve(set.size() + 1);
    points.insert(points.end(), targets.begin(), targets.end());
    points.insert(points.end(), nontargets.begin(), nontargets.end());
    std::sort(points.begin(), points.end());
    points.erase(std::unique(points.begin(), points.end()), points.end());
    points.push_back(points.back() + 1.0); // FAR 0 / FRR 1 sentinel

    const double nt = static_cast<double>(targets.size());
    const double nn = static_cast<double>(nontargets.size());
    auto far_at = [&](double t) {
        const auto it = std::lower_bound(nontargets.begin(), nontargets.end(), t);
        return static_cast<double>(nontargets.end() - it) / nn; // scores >= t
    };
    auto frr_at = [&](double t) {
        const auto it = std::lower_bound(targets.begin(), targets.end(), t);
        return static_cast<double>(it - targets.begin()) / nt; // scores < t
    };

    double prev_far = far_at(points[0]);
    double prev_frr = frr_at(points[0]);
    if (prev_far == prev_frr) return {prev_far, points[0]};
    for (std::size_t i = 1; i < points.size(); ++i) {
        const double cur_far = far_at(points[i]);
        const double cur_frr = frr_at(points[i]);
        const double d = cur_far - cur_frr;
        if (d == 0.0) return {cur_far, points[i]};
        if (d < 0.0) {
            // crossing between points i-1 and i
            const double d_prev = prev_far - prev_frr;
            const double alpha = d_prev / (d_prev - d);
            const double eer = prev_far + alpha * (cur_far - prev_far);
            const double threshold = points[i - 1] + alpha * (points[i] - points[i - 1]);
            return {eer, threshold};
        }
        prev_far = cur_far;
        prev_frr = cur_frr;
    }
    // FAR - FRR is non-increasing and the sentinel gives -1, so we never get here.
    fail(ErrorCode::validation_error, "compute_eer: no crossing found");
}

} // namespace tinysv
