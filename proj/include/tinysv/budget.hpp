#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "tinysv/model.hpp"
#include "tinysv/sequence_net.hpp"

namespace tinysv {

// Reference budget the architecture was designed against; cmd_inspect prints
// the measured deviation from these targets, it never asserts parity.
struct ReferenceBudget {
    double sequence_params = 211.6e3;  // learning parameters
    double embedding_params = 25.8e3;
    double total_params = 237499;
    double sequence_fma_per_s = 10850.4e3;
    double embedding_fma_per_s = 659.7e3;
    double embedding_div_per_s = 8.0e3;
    double total_flops_per_s = 11.5e6;
};

inline constexpr ReferenceBudget kReferenceBudget{};

struct BudgetLine {
    std::string name;
    std::size_t in_ch = 0, out_ch = 0;
    // parameters
    std::size_t params_stored = 0;    // every scalar the container holds
    std::size_t params_learnable = 0; // excludes batch-norm running statistics
    std::size_t params_dw = 0, params_pw = 0, params_bn_learnable = 0, params_act = 0;
    // compute over the report's audio_seconds
    double fma = 0.0, div = 0.0;
    double fma_dw = 0.0, fma_pw = 0.0, fma_bn = 0.0, fma_act = 0.0;
    double frame_rate_hz = 0.0;
};

struct StageTotals {
    std::size_t params_stored = 0, params_learnable = 0;
    double fma = 0.0, div = 0.0;
    double flops() const { return 2.0 * fma + div; }

    void add(const BudgetLine& l) {
        params_stored += l.params_stored;
        params_learnable += l.params_learnable;
        fma += l.fma;
        div += l.div;
    }
};

struct BudgetReport {
    double audio_seconds = 1.0;
    std::size_t tcs_layer_count = 0;
    std::size_t receptive_field_frames = 0;
    std::size_t endpoint_delay_frames = 0;
    VladConfig vlad;
    std::vector<BudgetLine> sequence_lines, embedding_lines;
    StageTotals sequence, embedding, total;

    nlohmann::json to_json() const;
};

// Analytic parameter and FMA/Div accounting over the layer schedule. FMA
// conventions: depthwise in*k and pointwise out*in per frame, batch norm one
// scale+shift FMA per channel (folded at load, so no per-frame divisions),
// PReLU one multiply per channel; MFM, max-pool and residual adds are free.
// Softmax normalization, intra-normalization and the final L2 norm carry the
// divisions. Aggregation finalize is charged once per utterance.
inline BudgetReport compute_budget(const ModelConfig& cfg, double audio_seconds) {
    validate(cfg);
    require(audio_seconds > 0.0, ErrorCode::validation_error,
            "audio_seconds must be > 0");

    BudgetReport rep;
    rep.audio_seconds = audio_seconds;
    rep.tcs_layer_count = cfg.sequence.tcs_layer_count();
    rep.receptive_field_frames = receptive_field_frames(cfg.sequence);
    rep.endpoint_delay_frames = lookahead_frames(cfg.sequence);
    rep.vlad = cfg.vlad;

    const double rate_pre = cfg.features.frame_rate_hz();
    const double rate_post = rate_pre / static_cast<double>(cfg.sequence.pool_stride);
    const std::size_t filters = cfg.sequence.filters;

    const std::vector<TcsLayerSpec> sched = tcs_schedule(cfg.sequence);
    for (const TcsLayerSpec& l : sched) {
        BudgetLine line;
        line.name = "seq." + l.name;
        line.in_ch = l.in_ch;
        line.out_ch = l.out_ch;
        line.frame_rate_hz = l.post_pool ? rate_post : rate_pre;
        line.params_dw = l.in_ch * l.kernel;
        line.params_pw = l.out_ch * l.in_ch + l.out_ch;
        line.params_bn_learnable = 2 * l.out_ch;

        // PReLU slopes live on the scope the layer closes (stem, block, head).
        bool owns_prelu = l.name == "stem" || l.name == "head" ||
                          l.name.ends_with(".close");
        if (owns_prelu) line.params_act = filters;

        const double frames = line.frame_rate_hz * audio_seconds;
        line.fma_dw = static_cast<double>(l.in_ch * l.kernel) * frames;
        line.fma_pw = static_cast<double>(l.out_ch * l.in_ch) * frames;
        line.fma_bn = static_cast<double>(l.out_ch) * frames;
        if (owns_prelu) {
            // the stem activation runs pre-pool unless the pool is moved in front
            const double act_rate = l.name == "stem" && !cfg.sequence.pool_before_stem_prelu
                                        ? rate_pre
                                        : rate_post;
            line.fma_act = static_cast<double>(filters) * act_rate * audio_seconds;
        }
        line.fma = line.fma_dw + line.fma_pw + line.fma_bn + line.fma_act;
        line.params_learnable =
            line.params_dw + line.params_pw + line.params_bn_learnable + line.params_act;
        line.params_stored = line.params_learnable + 2 * l.out_ch; // + running stats
        rep.sequence_lines.push_back(line);
        rep.sequence.add(line);
    }

    const std::size_t O = cfg.vlad.total_clusters();
    const std::size_t K = cfg.vlad.clusters;
    const std::size_t C = cfg.vlad.in_channels;
    const std::size_t D = cfg.vlad.embed_dim;
    const double frames_post = rate_post * audio_seconds;

    BudgetLine assign;
    assign.name = "vlad.assign";
    assign.frame_rate_hz = rate_post;
    assign.params_pw = O * C + O;
    assign.fma_pw = static_cast<double>(O * C) * frames_post;
    assign.div = static_cast<double>(O) * frames_post; // softmax normalization
    assign.fma = assign.fma_pw;
    assign.params_learnable = assign.params_stored = assign.params_pw;
    rep.embedding_lines.push_back(assign);

    BudgetLine aggregate;
    aggregate.name = "vlad.aggregate";
    aggregate.frame_rate_hz = rate_post;
    aggregate.fma = static_cast<double>(K * C + K) * frames_post;
    rep.embedding_lines.push_back(aggregate);

    BudgetLine finalize; // once per utterance
    finalize.name = "vlad.finalize";
    finalize.params_pw = K * C + D * C + D; // centroids + shared projection
    finalize.params_learnable = finalize.params_stored = finalize.params_pw;
    finalize.fma = static_cast<double>(K * C)     // residual mass * centroid
                   + static_cast<double>(K * C)   // intra-norm squares
                   + static_cast<double>(D * C)   // shared projection
                   + static_cast<double>(D);      // final norm squares
    finalize.div = static_cast<double>(K * C) + static_cast<double>(D);
    rep.embedding_lines.push_back(finalize);

    for (const BudgetLine& l : rep.embedding_lines) rep.embedding.add(l);
    rep.total.params_stored = rep.sequence.params_stored + rep.embedding.params_stored;
    rep.total.params_learnable =
        rep.sequence.params_learnable + rep.embedding.params_learnable;
    rep.total.fma = rep.sequence.fma + rep.embedding.fma;
    rep.total.div = rep.sequence.div + rep.embedding.div;
    return rep;
}

// Parameter section of the budget (computed over 1 s; the parameter columns
// do not depend on duration).
inline BudgetReport count_params(const ModelConfig& cfg) {
    return compute_budget(cfg, 1.0);
}

inline BudgetReport count_flops(const ModelConfig& cfg, double audio_seconds) {
    return compute_budget(cfg, audio_seconds);
}

inline double deviation_percent(double actual, double reference) {
    return (actual - reference) / reference * 100.0;
}

inline nlohmann::json BudgetReport::to_json() const {
    auto stage_json = [](const StageTotals& s) {
        return nlohmann::json{{"params_stored", s.params_stored},
                              {"params_learnable", s.params_learnable},
                              {"fma", s.fma},
                              {"div", s.div},
                              {"flops", s.flops()}};
    };
    nlohmann::json layers = nlohmann::json::array();
    auto line_json = [](const BudgetLine& l) {
        return nlohmann::json{{"name", l.name},
                              {"params_stored", l.params_stored},
                              {"params_learnable", l.params_learnable},
                              {"fma", l.fma},
                              {"div", l.div},
                              {"frame_rate_hz", l.frame_rate_hz}};
    };
    for (const BudgetLine& l : sequence_lines) layers.push_back(line_json(l));
    for (const BudgetLine& l : embedding_lines) layers.push_back(line_json(l));

    const ReferenceBudget& ref = kReferenceBudget;
    return nlohmann::json{
        {"audio_seconds", audio_seconds},
        {"tcs_conv1d_layers", tcs_layer_count},
        {"clusters", vlad.clusters},
        {"ghosts", vlad.ghosts},
        {"embedding_dim", vlad.embed_dim},
        {"receptive_field_frames", receptive_field_frames},
        {"endpoint_delay_frames", endpoint_delay_frames},
        {"params",
         {{"sequence", stage_json(sequence)},
          {"embedding", stage_json(embedding)},
          {"total", stage_json(total)}}},
        {"reference",
         {{"sequence_params", ref.sequence_params},
          {"embedding_params", ref.embedding_params},
          {"total_params", ref.total_params},
          {"sequence_fma_per_s", ref.sequence_fma_per_s},
          {"embedding_fma_per_s", ref.embedding_fma_per_s},
          {"total_flops_per_s", ref.total_flops_per_s}}},
        {"deviation_percent",
         {{"sequence_params",
           deviation_percent(static_cast<double>(sequence.params_learnable),
                             ref.sequence_params)},
          {"embedding_params",
           deviation_percent(static_cast<double>(embedding.params_learnable),
                             ref.embedding_params)},
          {"total_params", deviation_percent(static_cast<double>(total.params_learnable),
                                             ref.total_params)},
          {"sequence_fma",
           deviation_percent(sequence.fma / audio_seconds, ref.sequence_fma_per_s)},
          {"embedding_fma",
           deviation_percent(embedding.fma / audio_seconds, ref.embedding_fma_per_s)},
          {"total_flops",
           deviation_percent(total.flops() / audio_seconds, ref.total_flops_per_s)}}},
        {"layers", layers}};
}

} // namespace tinysv
