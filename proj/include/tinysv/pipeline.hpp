#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "tinysv/errors.hpp"
#include "tinysv/features.hpp"
#include "tinysv/model.hpp"
#include "tinysv/sequence_net.hpp"
#include "tinysv/vlad.hpp"
#include "tinysv/wav.hpp"

namespace tinysv {

class StreamSession;

// Full two-stage pipeline bound to one model: PCM -> log-Mel + MVN ->
// sequence network -> VLAD aggregation -> 96-dim unit embedding. Immutable
// and shareable; any number of StreamSessions may run against one Embedder.
class Embedder {
public:
    Embedder(ModelConfig cfg, const WeightSet& ws)
        : cfg_(std::move(cfg)), net_(SequenceNet::build(cfg_.sequence, ws)),
          vlad_(load_vlad_params(cfg_.vlad, ws)) {
        validate(cfg_);
    }

    static Embedder load_file(const std::filesystem::path& path) {
        auto [cfg, ws] = load_model_file(path);
        return Embedder(std::move(cfg), ws);
    }

    const ModelConfig& config() const { return cfg_; }
    const SequenceNet& net() const { return net_; }
    const VladParams& vlad_params() const { return vlad_; }
    std::size_t embedding_dim() const { return cfg_.vlad.embed_dim; }

    // Whole-utterance (batch) path.
    std::vector<float> embed_pcm(std::span<const std::int16_t> pcm,
                                 int sample_rate_hz) const {
        const Matrix feats = apply_mvn(
            compute_log_mel(pcm, sample_rate_hz, cfg_.features), cfg_.mvn);
        const Matrix stage1 = net_.forward(feats);
        VladAccumulator acc(cfg_.vlad);
        acc.accumulate(stage1, soft_assign(stage1, vlad_));
        return finalize_embedding(acc, vlad_);
    }

    std::vector<float> embed_wav(const std::filesystem::path& path) const {
        const WavData wav = read_wav(path);
        return embed_pcm(wav.samples, wav.sample_rate_hz);
    }

private:
    ModelConfig cfg_;
    SequenceNet net_;
    VladParams vlad_;
};

// Chunked execution of the full pipeline. Audio is pushed as it arrives; the
// front end and sequence stage run incrementally, every emitted stage-1 frame
// is folded into the VLAD accumulator, and finish() drains the lookahead
// buffers and produces the embedding. After flushing, the concatenated
// stage-1 emissions equal the batch forward pass.
class StreamSession {
public:
    explicit StreamSession(const Embedder& embedder, bool keep_stage1 = false)
        : embedder_(&embedder),
          features_(embedder.config().features, MvnMode::causal),
          seq_(embedder.net()), acc_(embedder.config().vlad),
          stage1_(0, embedder.net().out_channels()), keep_stage1_(keep_stage1) {
        require(embedder.config().mvn == MvnMode::causal, ErrorCode::unsupported_mode,
                "streaming sessions require a causal-MVN model (this model is "
                "configured for utterance MVN)");
    }

    void push_pcm(std::span<const std::int16_t> chunk) {
        const Matrix frames = features_.push(chunk);
        if (frames.rows() == 0) return;
        consume_stage1(seq_.push(frames));
    }

    // Drain and finalize. The session cannot be pushed to afterwards.
    std::vector<float> finish() {
        consume_stage1(seq_.flush());
        return finalize_embedding(acc_, embedder_->vlad_params());
    }

    // Stage-1 frames emitted so far (only retained when requested).
    const Matrix& stage1_frames() const { return stage1_; }
    std::size_t state_bytes() const { return seq_.state_bytes(); }

private:
    void consume_stage1(const Matrix& frames) {
        if (frames.rows() == 0) return;
        acc_.accumulate(frames, soft_assign(frames, embedder_->vlad_params()));
        if (keep_stage1_) stage1_.append_rows(frames);
    }

    const Embedder* embedder_;
    FeatureStream features_;
    SequenceStream seq_;
    VladAccumulator acc_;
    Matrix stage1_;
    bool keep_stage1_;
};

} // namespace tinysv
