#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tinysv/errors.hpp"
#include "tinysv/matrix.hpp"
#include "tinysv/tensor_ops.hpp"
#include "tinysv/weights.hpp"

namespace tinysv {

// MFM channel bookkeeping inside a block. halving keeps every convolution at
// `filters` outputs and lets MFM halve them; doubling widens the inner
// convolutions to 2*filters so MFM lands back on `filters`.
enum class MfmVariant { halving, doubling };

inline const char* mfm_variant_name(MfmVariant v) {
    return v == MfmVariant::halving ? "halving" : "doubling";
}

struct SequenceNetConfig {
    std::size_t in_channels = 64;
    std::size_t filters = 96;
    std::size_t kernel = 15;
    std::size_t blocks = 5;
    std::size_t repeats = 3;
    std::size_t pool_stride = 2;
    MfmVariant mfm_variant = MfmVariant::halving;
    bool pool_before_stem_prelu = false; // pool placement relative to the stem activation
    bool head_conv = true;               // closing TCS layer after the block stack

    std::size_t tcs_layer_count() const {
        return 1 + blocks * (repeats + 1) + (head_conv ? 1 : 0);
    }
};

inline void validate(const SequenceNetConfig& cfg) {
    require(cfg.in_channels >= 1, ErrorCode::validation_error,
            "sequence.in_channels must be >= 1");
    require(cfg.blocks >= 1, ErrorCode::validation_error, "sequence.blocks must be >= 1");
    require(cfg.repeats >= 1, ErrorCode::validation_error,
            "sequence.repeats must be >= 1");
    require(cfg.kernel % 2 == 1, ErrorCode::validation_error,
            "sequence.kernel must be odd");
    require(cfg.pool_stride == 2, ErrorCode::validation_error,
            "sequence.pool_stride must be 2");
    require(cfg.filters >= 2, ErrorCode::validation_error,
            "sequence.filters must be >= 2");
    if (cfg.mfm_variant == MfmVariant::halving)
        require(cfg.filters % 2 == 0, ErrorCode::validation_error,
                "sequence.filters must be even for the halving MFM variant");
}

struct TcsLayerSpec {
    std::string name; // "stem", "block<b>.conv<r>", "block<b>.close", "head"
    std::size_t in_ch = 0;
    std::size_t out_ch = 0;
    std::size_t kernel = 0;
    bool post_pool = false;
    bool mfm = false; // an MFM activation consumes this layer's output
};

// Layer schedule shared by the builder, the random initializer and the
// budget accounting. One entry per TCS (depthwise + pointwise) layer.
inline std::vector<TcsLayerSpec> tcs_schedule(const SequenceNetConfig& cfg) {
    std::vector<TcsLayerSpec> sched;
    sched.push_back({"stem", cfg.in_channels, cfg.filters, cfg.kernel, false, false});
    const std::size_t inner_out =
        cfg.mfm_variant == MfmVariant::doubling ? 2 * cfg.filters : cfg.filters;
    const std::size_t post_mfm = inner_out / 2;
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        std::size_t cur = cfg.filters;
        for (std::size_t r = 0; r < cfg.repeats; ++r) {
            sched.push_back({"block" + std::to_string(b) + ".conv" + std::to_string(r),
                             cur, inner_out, cfg.kernel, true, true});
            cur = post_mfm;
        }
        sched.push_back({"block" + std::to_string(b) + ".close", cur, cfg.filters,
                         cfg.kernel, true, false});
    }
    if (cfg.head_conv)
        sched.push_back({"head", cfg.filters, cfg.filters, cfg.kernel, true, false});
    return sched;
}

// Scopes that own a PReLU slope vector (all sized `filters`).
inline std::vector<std::string> prelu_scopes(const SequenceNetConfig& cfg) {
    std::vector<std::string> scopes{"stem"};
    for (std::size_t b = 0; b < cfg.blocks; ++b)
        scopes.push_back("block" + std::to_string(b));
    if (cfg.head_conv) scopes.push_back("head");
    return scopes;
}

// Span of input frames that can influence one output frame.
inline std::size_t receptive_field_frames(const SequenceNetConfig& cfg) {
    std::size_t rf = 1, jump = 1;
    rf += (cfg.kernel - 1) * jump;      // stem
    rf += (cfg.pool_stride - 1) * jump; // pool
    jump *= cfg.pool_stride;
    const std::size_t post = cfg.blocks * (cfg.repeats + 1) + (cfg.head_conv ? 1 : 0);
    rf += post * (cfg.kernel - 1) * jump;
    return rf;
}

// Input frames buffered ahead of the emitted output: the end-pointing delay
// of the streaming engine, in feature frames.
inline std::size_t lookahead_frames(const SequenceNetConfig& cfg) {
    std::size_t look = 0, jump = 1;
    look += (cfg.kernel - 1) / 2 * jump; // stem
    look += (cfg.pool_stride - 1) * jump; // pool parity
    jump *= cfg.pool_stride;
    const std::size_t post = cfg.blocks * (cfg.repeats + 1) + (cfg.head_conv ? 1 : 0);
    look += post * ((cfg.kernel - 1) / 2) * jump;
    return look;
}

// Every tensor the sequence network loads, with its expected shape.
inline std::map<std::string, std::vector<std::size_t>>
sequence_tensor_shapes(const SequenceNetConfig& cfg) {
    std::map<std::string, std::vector<std::size_t>> shapes;
    for (const TcsLayerSpec& l : tcs_schedule(cfg)) {
        const std::string p = "seq." + l.name;
        shapes[p + ".dw_weight"] = {l.in_ch, l.kernel};
        shapes[p + ".pw_weight"] = {l.out_ch, l.in_ch};
        shapes[p + ".pw_bias"] = {l.out_ch};
        shapes[p + ".bn_gamma"] = {l.out_ch};
        shapes[p + ".bn_beta"] = {l.out_ch};
        shapes[p + ".bn_mean"] = {l.out_ch};
        shapes[p + ".bn_var"] = {l.out_ch};
    }
    for (const std::string& s : prelu_scopes(cfg))
        shapes["seq." + s + ".prelu"] = {cfg.filters};
    return shapes;
}

// Sequence-wise network: stem TCS layer, max-pool, residual MFM blocks, head
// TCS layer. Immutable after build and safe to share across threads.
class SequenceNet {
public:
    struct Layer {
        TcsLayerSpec spec;
        DepthwiseKernel dw;
        PointwiseKernel pw;
        AffineParams bn; // batch norm folded to scale/shift at build time
    };
    struct Block {
        std::vector<Layer> convs; // repeats inner layers, then the closing layer
        PReluParams prelu;
    };

    static SequenceNet build(const SequenceNetConfig& cfg, const WeightSet& ws) {
        validate(cfg);
        SequenceNet net;
        net.cfg_ = cfg;
        const std::vector<TcsLayerSpec> sched = tcs_schedule(cfg);
        std::size_t idx = 0;
        net.stem_ = load_layer(sched[idx++], ws);
        net.stem_prelu_ = load_prelu("stem", cfg, ws);
        for (std::size_t b = 0; b < cfg.blocks; ++b) {
            Block blk;
            for (std::size_t r = 0; r < cfg.repeats + 1; ++r)
                blk.convs.push_back(load_layer(sched[idx++], ws));
            blk.prelu = load_prelu("block" + std::to_string(b), cfg, ws);
            net.blocks_.push_back(std::move(blk));
        }
        if (cfg.head_conv) {
            net.head_ = load_layer(sched[idx++], ws);
            net.head_prelu_ = load_prelu("head", cfg, ws);
        }
        return net;
    }

    const SequenceNetConfig& config() const { return cfg_; }
    const Layer& stem() const { return stem_; }
    const PReluParams& stem_prelu() const { return stem_prelu_; }
    const std::vector<Block>& blocks() const { return blocks_; }
    const std::optional<Layer>& head() const { return head_; }
    const PReluParams& head_prelu() const { return head_prelu_; }
    std::size_t out_channels() const { return cfg_.filters; }
    std::size_t tcs_layer_count() const { return cfg_.tcs_layer_count(); }

    std::size_t receptive_field_frames() const {
        return tinysv::receptive_field_frames(cfg_);
    }

    std::size_t lookahead_frames() const { return tinysv::lookahead_frames(cfg_); }

    Matrix forward(const Matrix& feat) const {
        require(feat.cols() == cfg_.in_channels, ErrorCode::shape_error,
                "sequence net expects " + std::to_string(cfg_.in_channels) +
                    " input channels, got " + std::to_string(feat.cols()));
        require(feat.rows() >= cfg_.pool_stride, ErrorCode::signal_too_short,
                "need at least " + std::to_string(cfg_.pool_stride) +
                    " feature frames, got " + std::to_string(feat.rows()));
        Matrix x = apply_layer(stem_, feat);
        if (cfg_.pool_before_stem_prelu) {
            x = max_pool1d(x);
            x = prelu(x, stem_prelu_);
        } else {
            x = prelu(x, stem_prelu_);
            x = max_pool1d(x);
        }
        for (std::size_t b = 0; b < blocks_.size(); ++b) x = forward_block(b, x);
        if (head_) {
            x = apply_layer(*head_, x);
            x = prelu(x, head_prelu_);
        }
        return x;
    }

    // One residual block: repeats x (TCS+BN+MFM), closing TCS+BN, residual
    // add, PReLU. Public so the residual path can be probed in isolation.
    Matrix forward_block(std::size_t b, const Matrix& x) const {
        require(b < blocks_.size(), ErrorCode::bad_index, "block index out of range");
        const Block& blk = blocks_[b];
        Matrix h = x;
        for (std::size_t r = 0; r + 1 < blk.convs.size(); ++r)
            h = mfm(apply_layer(blk.convs[r], h));
        h = apply_layer(blk.convs.back(), h);
        require(h.rows() == x.rows() && h.cols() == x.cols(), ErrorCode::shape_error,
                "residual operand shape mismatch");
        Matrix out(h.rows(), h.cols());
        for (std::size_t t = 0; t < h.rows(); ++t) {
            for (std::size_t c = 0; c < h.cols(); ++c)
                out.at(t, c) = x.at(t, c) + h.at(t, c);
            prelu_frame(blk.prelu, out.row(t));
        }
        return out;
    }

    Matrix apply_layer(const Layer& L, const Matrix& x) const {
        const Matrix d = depthwise_conv1d(x, L.dw, Padding::same_symmetric);
        Matrix o(d.rows(), L.pw.out_channels());
        for (std::size_t t = 0; t < d.rows(); ++t) {
            pointwise_frame(L.pw, d.row(t), o.row(t));
            affine_frame(L.bn, o.row(t));
        }
        return o;
    }

private:
    static Layer load_layer(const TcsLayerSpec& spec, const WeightSet& ws) {
        const std::string p = "seq." + spec.name;
        Layer L;
        L.spec = spec;
        L.dw.weights =
            tensor_as_matrix(ws.get(p + ".dw_weight", {{spec.in_ch, spec.kernel}}));
        L.pw.weights =
            tensor_as_matrix(ws.get(p + ".pw_weight", {{spec.out_ch, spec.in_ch}}));
        L.pw.bias = ws.get(p + ".pw_bias", {{spec.out_ch}}).data;
        BatchNormParams bn;
        bn.gamma = ws.get(p + ".bn_gamma", {{spec.out_ch}}).data;
        bn.beta = ws.get(p + ".bn_beta", {{spec.out_ch}}).data;
        bn.running_mean = ws.get(p + ".bn_mean", {{spec.out_ch}}).data;
        bn.running_var = ws.get(p + ".bn_var", {{spec.out_ch}}).data;
        L.bn = AffineParams::from_batch_norm(bn);
        return L;
    }

    static PReluParams load_prelu(const std::string& scope, const SequenceNetConfig& cfg,
                                  const WeightSet& ws) {
        return {ws.get("seq." + scope + ".prelu", {{cfg.filters}}).data};
    }

    SequenceNetConfig cfg_;
    Layer stem_;
    PReluParams stem_prelu_;
    std::vector<Block> blocks_;
    std::optional<Layer> head_;
    PReluParams head_prelu_;
};

namespace detail {

// Fixed-capacity ring of frames; capacity never changes after construction.
class FrameRing {
public:
    FrameRing(std::size_t capacity, std::size_t channels)
        : cap_(capacity), ch_(channels), data_(capacity * channels, 0.0f) {}

    std::size_t size() const { return size_; }
    std::size_t capacity() const { return cap_; }
    std::size_t capacity_bytes() const { return data_.size() * sizeof(float); }

    void push(std::span<const float> frame) {
        require(size_ < cap_, ErrorCode::validation_error, "frame ring overflow");
        float* slot = data_.data() + ((head_ + size_) % cap_) * ch_;
        std::copy(frame.begin(), frame.end(), slot);
        ++size_;
    }

    std::span<const float> frame(std::size_t i) const {
        return {data_.data() + ((head_ + i) % cap_) * ch_, ch_};
    }

    void pop() {
        head_ = (head_ + 1) % cap_;
        --size_;
    }

private:
    std::size_t cap_, ch_;
    std::size_t head_ = 0, size_ = 0;
    std::vector<float> data_;
};

// Streaming form of the symmetric-padding depthwise convolution. The ring is
// seeded with the left zero padding; each push emits at most one frame, which
// lags the input by (kernel-1)/2 frames.
class DepthwiseStream {
public:
    explicit DepthwiseStream(const DepthwiseKernel* k)
        : k_(k), ring_(k->kernel_size(), k->channels()) {
        const std::vector<float> zero(k->channels(), 0.0f);
        for (std::size_t i = 0; i < lookahead(); ++i) ring_.push(zero);
    }

    std::size_t lookahead() const { return (k_->kernel_size() - 1) / 2; }
    std::size_t channels() const { return k_->channels(); }
    std::size_t state_bytes() const { return ring_.capacity_bytes(); }

    bool push(std::span<const float> frame, std::vector<float>& out) {
        ring_.push(frame);
        if (ring_.size() < k_->kernel_size()) return false;
        out.resize(k_->channels());
        for (std::size_t c = 0; c < k_->channels(); ++c) {
            float acc = 0.0f;
            const auto w = k_->weights.row(c);
            for (std::size_t j = 0; j < k_->kernel_size(); ++j)
                acc += w[j] * ring_.frame(j)[c];
            out[c] = acc;
        }
        ring_.pop();
        return true;
    }

private:
    const DepthwiseKernel* k_;
    FrameRing ring_;
};

// Streaming kernel-2/stride-2 max-pool; a pending unpaired frame is dropped
// at flush, matching the batch floor rule.
class PoolStream {
public:
    explicit PoolStream(std::size_t channels) : pending_(channels, 0.0f) {}

    bool push(std::span<const float> frame, std::vector<float>& out) {
        if (!has_pending_) {
            std::copy(frame.begin(), frame.end(), pending_.begin());
            has_pending_ = true;
            return false;
        }
        out.resize(pending_.size());
        for (std::size_t c = 0; c < pending_.size(); ++c)
            out[c] = std::max(pending_[c], frame[c]);
        has_pending_ = false;
        return true;
    }

    std::size_t state_bytes() const { return pending_.size() * sizeof(float); }

private:
    std::vector<float> pending_;
    bool has_pending_ = false;
};

} // namespace detail

// Stateful chunked execution of a SequenceNet. After flush(), the
// concatenation of everything emitted equals forward() on the concatenated
// input. State size depends only on the configuration, never on how much
// audio has passed through.
class SequenceStream {
public:
    explicit SequenceStream(const SequenceNet& net)
        : net_(&net), stem_dw_(&net.stem().dw),
          pool_(net.stem().pw.out_channels()) {
        for (const SequenceNet::Block& blk : net.blocks()) {
            BlockState bs;
            std::size_t chain_lookahead = 0;
            for (const SequenceNet::Layer& L : blk.convs) {
                bs.dw.emplace_back(&L.dw);
                chain_lookahead += bs.dw.back().lookahead();
            }
            bs.residual = detail::FrameRing(chain_lookahead + 1, net.config().filters);
            blocks_.push_back(std::move(bs));
        }
        if (net.head()) head_dw_.emplace(&net.head()->dw);
    }

    Matrix push(const Matrix& frames) {
        require(!flushed_, ErrorCode::push_after_flush, "stream already flushed");
        require(frames.cols() == net_->config().in_channels, ErrorCode::shape_error,
                "stream push: channel mismatch");
        Matrix out(0, net_->out_channels());
        for (std::size_t t = 0; t < frames.rows(); ++t) feed_input(frames.row(t), out);
        return out;
    }

    // Synthesizes the tail zero padding of every layer, in network order, and
    // drains all pending frames. Emitted totals then match the batch path.
    Matrix flush() {
        require(!flushed_, ErrorCode::double_flush, "stream flushed twice");
        Matrix out(0, net_->out_channels());
        const std::vector<float> zin(net_->config().in_channels, 0.0f);
        for (std::size_t i = 0; i < stem_dw_.lookahead(); ++i) feed_input(zin, out);
        // pool: a pending unpaired frame is dropped
        for (std::size_t b = 0; b < blocks_.size(); ++b) {
            for (std::size_t sub = 0; sub < blocks_[b].dw.size(); ++sub) {
                const std::vector<float> z(blocks_[b].dw[sub].channels(), 0.0f);
                for (std::size_t i = 0; i < blocks_[b].dw[sub].lookahead(); ++i)
                    if (block_feed(b, sub, z, s_flush_)) from_block(b + 1, s_flush_, out);
            }
        }
        if (head_dw_) {
            const std::vector<float> z(head_dw_->channels(), 0.0f);
            for (std::size_t i = 0; i < head_dw_->lookahead(); ++i) head_feed(z, out);
        }
        flushed_ = true;
        return out;
    }

    bool flushed() const { return flushed_; }

    // Total fixed buffer footprint; constant for the life of the session.
    std::size_t state_bytes() const {
        std::size_t n = stem_dw_.state_bytes() + pool_.state_bytes();
        for (const BlockState& bs : blocks_) {
            for (const auto& dw : bs.dw) n += dw.state_bytes();
            n += bs.residual.capacity_bytes();
        }
        if (head_dw_) n += head_dw_->state_bytes();
        return n;
    }

private:
    struct BlockState {
        std::vector<detail::DepthwiseStream> dw; // repeats + 1 entries
        detail::FrameRing residual{1, 1};
        std::vector<float> buf_in, buf_dw, buf_pw;
    };

    void feed_input(std::span<const float> frame, Matrix& out) {
        if (!stem_dw_.push(frame, s_dw_)) return;
        const SequenceNet::Layer& L = net_->stem();
        s_pw_.resize(L.pw.out_channels());
        pointwise_frame(L.pw, s_dw_, s_pw_);
        affine_frame(L.bn, s_pw_);
        if (!net_->config().pool_before_stem_prelu)
            prelu_frame(net_->stem_prelu(), s_pw_);
        if (!pool_.push(s_pw_, s_pool_)) return;
        if (net_->config().pool_before_stem_prelu)
            prelu_frame(net_->stem_prelu(), s_pool_);
        from_block(0, s_pool_, out);
    }

    // Send a frame through blocks b.. and the head.
    void from_block(std::size_t b, std::span<const float> frame, Matrix& out) {
        std::vector<float> cur(frame.begin(), frame.end());
        for (std::size_t i = b; i < blocks_.size(); ++i) {
            blocks_[i].residual.push(cur);
            if (!block_feed(i, 0, cur, s_emit_)) return;
            cur.assign(s_emit_.begin(), s_emit_.end());
        }
        head_feed(cur, out);
    }

    // Push a frame into block b at chain position `sub` and run the rest of
    // the chain. Returns true when the block emits (residual added, PReLU
    // applied) into `out`.
    bool block_feed(std::size_t b, std::size_t sub, std::span<const float> frame,
                    std::vector<float>& out) {
        const SequenceNet::Block& blk = net_->blocks()[b];
        BlockState& bs = blocks_[b];
        bs.buf_in.assign(frame.begin(), frame.end());
        const std::size_t last = blk.convs.size() - 1;
        for (std::size_t c = sub; c <= last; ++c) {
            if (!bs.dw[c].push(bs.buf_in, bs.buf_dw)) return false;
            const SequenceNet::Layer& L = blk.convs[c];
            bs.buf_pw.resize(L.pw.out_channels());
            pointwise_frame(L.pw, bs.buf_dw, bs.buf_pw);
            affine_frame(L.bn, bs.buf_pw);
            if (c < last) {
                bs.buf_in.resize(L.pw.out_channels() / 2);
                mfm_frame(bs.buf_pw, bs.buf_in);
            } else {
                const auto res = bs.residual.frame(0);
                out.resize(bs.buf_pw.size());
                for (std::size_t i = 0; i < out.size(); ++i)
                    out[i] = res[i] + bs.buf_pw[i];
                bs.residual.pop();
                prelu_frame(blk.prelu, out);
                return true;
            }
        }
        return false; // unreachable
    }

    void head_feed(std::span<const float> frame, Matrix& out) {
        if (!head_dw_) {
            out.append_row(frame);
            return;
        }
        if (!head_dw_->push(frame, s_dw_)) return;
        const SequenceNet::Layer& L = *net_->head();
        s_head_.resize(L.pw.out_channels());
        pointwise_frame(L.pw, s_dw_, s_head_);
        affine_frame(L.bn, s_head_);
        prelu_frame(net_->head_prelu(), s_head_);
        out.append_row(s_head_);
    }

    const SequenceNet* net_;
    detail::DepthwiseStream stem_dw_;
    detail::PoolStream pool_;
    std::vector<BlockState> blocks_;
    std::optional<detail::DepthwiseStream> head_dw_;
    bool flushed_ = false;
    std::vector<float> s_dw_, s_pw_, s_pool_, s_emit_, s_head_, s_flush_;
};

} // namespace tinysv
