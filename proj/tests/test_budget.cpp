#include <doctest.h>

#include "tinysv/budget.hpp"

#include "testutil.hpp"

using namespace tinysv;

TEST_SUITE_BEGIN("budget");

namespace {

// Small architecture used for hand-derived accounting below.
ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.features.n_mels = 4;
    cfg.sequence.in_channels = 4;
    cfg.sequence.filters = 2;
    cfg.sequence.kernel = 3;
    cfg.sequence.blocks = 1;
    cfg.sequence.repeats = 1;
    cfg.vlad.clusters = 2;
    cfg.vlad.ghosts = 1;
    cfg.vlad.in_channels = 2;
    cfg.vlad.embed_dim = 2;
    return cfg;
}

const BudgetLine& line_named(const BudgetReport& rep, const std::string& name) {
    for (const BudgetLine& l : rep.sequence_lines)
        if (l.name == name) return l;
    for (const BudgetLine& l : rep.embedding_lines)
        if (l.name == name) return l;
    FAIL(("no budget line named " + name).c_str());
    return rep.sequence_lines.front();
}

} // namespace

TEST_CASE("pointwise hand counts") {
    // stem pointwise 2 -> 3 with bias: 9 parameters
    ModelConfig cfg = tiny_config();
    cfg.features.n_mels = 2;
    cfg.sequence.in_channels = 2;
    cfg.sequence.filters = 3;
    cfg.sequence.mfm_variant = MfmVariant::doubling; // odd filters need doubling
    cfg.vlad.in_channels = 3;
    const BudgetReport rep = count_params(cfg);
    CHECK(line_named(rep, "seq.stem").params_pw == 9);

    // pointwise 4 in -> 2 out at 100 fps over 1 s: 800 FMA
    ModelConfig flops_cfg = tiny_config();
    const BudgetReport frep = count_flops(flops_cfg, 1.0);
    CHECK(line_named(frep, "seq.stem").fma_pw == doctest::Approx(800.0));
}

TEST_CASE("vlad parameter section, hand-summed") {
    // assign 35*96+35, centroids 32*96, projection 96*96+96 -> 15779
    const ModelConfig cfg;
    const BudgetReport rep = count_params(cfg);
    CHECK(rep.embedding.params_learnable == 35 * 96 + 35 + 32 * 96 + 96 * 96 + 96);
    CHECK(rep.embedding.params_learnable == 15779);
    CHECK(rep.embedding.params_stored == rep.embedding.params_learnable);
}

TEST_CASE("default sequence parameters, hand-derived") {
    const ModelConfig cfg;
    const BudgetReport rep = count_params(cfg);
    // stem 960+6240+384+96, 5 blocks of 11136+3*5808+96, head 1440+9312+384+96
    CHECK(rep.sequence.params_stored == 162192);
    // learnable excludes 2 running-stat vectors per BN: 22 * 2 * 96
    CHECK(rep.sequence.params_learnable == 162192 - 22 * 192);
    CHECK(rep.total.params_stored == 177971);
}

TEST_CASE("stored parameter count equals the loaded scalar count") {
    for (const MfmVariant v : {MfmVariant::halving, MfmVariant::doubling}) {
        ModelConfig cfg;
        cfg.sequence.mfm_variant = v;
        const WeightSet ws = random_init(cfg, 5);
        const BudgetReport rep = count_params(cfg);
        CHECK(rep.total.params_stored == ws.total_scalars());
    }
}

TEST_CASE("vlad cluster cost is linear: count(K+1) - count(K) == 2C + 1") {
    ModelConfig base;
    for (std::size_t k : {8u, 16u, 32u, 57u}) {
        ModelConfig a = base, b = base;
        a.vlad.clusters = k;
        b.vlad.clusters = k + 1;
        const std::size_t ca = count_params(a).embedding.params_learnable;
        const std::size_t cb = count_params(b).embedding.params_learnable;
        CHECK(cb - ca == 2 * 96 + 1);
    }
}

TEST_CASE("tiny config, fully hand-derived") {
    // stem: dw 4*3, pw 2*4+2, bn 2*2 learnable (+2*2 stored), prelu 2
    // block0.conv0: in 2 -> out 2 (halving, filters 2 -> mfm 1)
    const ModelConfig cfg = tiny_config();
    const BudgetReport rep = count_params(cfg);

    const BudgetLine& stem = line_named(rep, "seq.stem");
    CHECK(stem.params_dw == 12);
    CHECK(stem.params_pw == 10);
    CHECK(stem.params_bn_learnable == 4);
    CHECK(stem.params_act == 2);
    CHECK(stem.params_stored == 12 + 10 + 4 + 2 + 4);

    // fma per 1 s: stem at 100 fps: dw 4*3*100, pw 2*4*100, bn 2*100, act 2*100
    const BudgetReport frep = count_flops(cfg, 1.0);
    const BudgetLine& fstem = line_named(frep, "seq.stem");
    CHECK(fstem.fma == doctest::Approx(1200.0 + 800.0 + 200.0 + 200.0));

    // block0.conv0 at 50 fps: in 2, out 2: dw 2*3*50, pw 2*2*50, bn 2*50, no act
    const BudgetLine& c0 = line_named(frep, "seq.block0.conv0");
    CHECK(c0.fma == doctest::Approx(300.0 + 200.0 + 100.0));

    // block0.close at 50 fps: in 1 (post-MFM), out 2: dw 1*3*50, pw 2*1*50,
    // bn 2*50, prelu 2*50
    const BudgetLine& close = line_named(frep, "seq.block0.close");
    CHECK(close.fma == doctest::Approx(150.0 + 100.0 + 100.0 + 100.0));

    // vlad (K=2, G=1, C=2, D=2) at 50 fps:
    //   assign: fma O*C*50 = 3*2*50, div O*50
    const BudgetLine& assign = line_named(frep, "vlad.assign");
    CHECK(assign.fma == doctest::Approx(300.0));
    CHECK(assign.div == doctest::Approx(150.0));
    //   aggregate: (K*C + K)*50 = (4+2)*50
    CHECK(line_named(frep, "vlad.aggregate").fma == doctest::Approx(300.0));
    //   finalize once: K*C + K*C + D*C + D = 4+4+4+2; div K*C + D = 6
    const BudgetLine& fin = line_named(frep, "vlad.finalize");
    CHECK(fin.fma == doctest::Approx(14.0));
    CHECK(fin.div == doctest::Approx(6.0));
}

TEST_CASE("totals are sums of the per-line parts") {
    const ModelConfig cfg;
    const BudgetReport rep = compute_budget(cfg, 2.5);
    StageTotals seq, emb;
    for (const BudgetLine& l : rep.sequence_lines) seq.add(l);
    for (const BudgetLine& l : rep.embedding_lines) emb.add(l);
    CHECK(seq.fma == rep.sequence.fma);
    CHECK(seq.params_stored == rep.sequence.params_stored);
    CHECK(emb.fma == rep.embedding.fma);
    CHECK(emb.div == rep.embedding.div);
    CHECK(rep.total.fma == rep.sequence.fma + rep.embedding.fma);
    CHECK(rep.total.flops() == 2.0 * rep.total.fma + rep.total.div);
}

TEST_CASE("sequence-stage compute is exactly linear in duration") {
    const ModelConfig cfg;
    const BudgetReport one = count_flops(cfg, 1.0);
    const BudgetReport two = count_flops(cfg, 2.0);
    CHECK(two.sequence.fma == 2.0 * one.sequence.fma);
    CHECK(two.sequence.div == 2.0 * one.sequence.div);
    // aggregation finalize runs once per utterance, so the embedding stage is
    // affine rather than linear
    const double per_frame_part = two.embedding.fma - one.embedding.fma;
    CHECK(one.embedding.fma + per_frame_part ==
          doctest::Approx(two.embedding.fma).epsilon(1e-12));
}

TEST_CASE("report carries the architecture summary and reference deviations") {
    const ModelConfig cfg;
    const BudgetReport rep = compute_budget(cfg, 1.0);
    CHECK(rep.tcs_layer_count == 22);
    CHECK(rep.receptive_field_frames == 604);
    CHECK(rep.endpoint_delay_frames == 302);

    const nlohmann::json j = rep.to_json();
    CHECK(j.at("tcs_conv1d_layers") == 22);
    CHECK(j.at("clusters") == 32);
    CHECK(j.at("ghosts") == 3);
    CHECK(j.at("embedding_dim") == 96);
    CHECK(j.at("reference").at("total_params") == 237499.0);
    CHECK(j.at("deviation_percent").contains("sequence_params"));
    CHECK(j.at("deviation_percent").contains("total_flops"));
    // totals in JSON equal sums of the per-layer lines
    double fma_sum = 0.0;
    for (const auto& l : j.at("layers")) fma_sum += l.at("fma").get<double>();
    CHECK(fma_sum == doctest::Approx(j.at("params").at("total").at("fma").get<double>()));
}

TEST_SUITE_END();
