#include <doctest.h>

#include <random>

#include "tinysv/sequence_net.hpp"

#include "testutil.hpp"

using namespace tinysv;

TEST_SUITE_BEGIN("sequence_net");

namespace {

WeightSet random_seq_weights(const SequenceNetConfig& cfg, std::uint32_t seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> dist(-0.3f, 0.3f);
    WeightSet ws;
    for (const auto& [name, shape] : sequence_tensor_shapes(cfg)) {
        Tensor t;
        t.shape = shape;
        t.data.resize(t.numel());
        if (name.ends_with(".bn_gamma") || name.ends_with(".bn_var")) {
            std::fill(t.data.begin(), t.data.end(), 1.0f);
        } else if (name.ends_with(".bn_beta") || name.ends_with(".bn_mean")) {
            std::fill(t.data.begin(), t.data.end(), 0.0f);
        } else if (name.ends_with(".prelu")) {
            std::fill(t.data.begin(), t.data.end(), 0.25f);
        } else {
            for (float& v : t.data) v = dist(rng);
        }
        ws.put(name, std::move(t));
    }
    return ws;
}

SequenceNetConfig toy_config() {
    SequenceNetConfig cfg;
    cfg.in_channels = 8;
    cfg.filters = 16;
    cfg.kernel = 5;
    cfg.blocks = 2;
    cfg.repeats = 2;
    return cfg;
}

} // namespace

TEST_CASE("schedule layer counts") {
    SequenceNetConfig cfg; // defaults
    CHECK(tcs_schedule(cfg).size() == 22);
    CHECK(cfg.tcs_layer_count() == 22);

    SequenceNetConfig small;
    small.blocks = 1;
    small.repeats = 1;
    CHECK(tcs_schedule(small).size() == 4); // stem + 2 + head
    small.head_conv = false;
    CHECK(tcs_schedule(small).size() == 3);
}

TEST_CASE("schedule channel flow, both MFM variants") {
    SequenceNetConfig cfg; // halving
    auto sched = tcs_schedule(cfg);
    CHECK(sched[0].in_ch == 64);
    CHECK(sched[0].out_ch == 96);
    CHECK(sched[1].in_ch == 96);  // block0.conv0 takes the block input
    CHECK(sched[1].out_ch == 96);
    CHECK(sched[2].in_ch == 48);  // post-MFM
    CHECK(sched[4].name == "block0.close");
    CHECK(sched[4].in_ch == 48);
    CHECK(sched[4].out_ch == 96);
    CHECK(sched.back().name == "head");

    cfg.mfm_variant = MfmVariant::doubling;
    sched = tcs_schedule(cfg);
    CHECK(sched[1].out_ch == 192);
    CHECK(sched[2].in_ch == 96);
    CHECK(sched[4].in_ch == 96);
}

TEST_CASE("build reports 22 layers on the default config") {
    const SequenceNetConfig cfg;
    const SequenceNet net = SequenceNet::build(cfg, random_seq_weights(cfg, 1));
    CHECK(net.tcs_layer_count() == 22);
    CHECK(net.receptive_field_frames() == 604);
    CHECK(net.lookahead_frames() == 302);
}

TEST_CASE("build rejects an incomplete weight set") {
    const SequenceNetConfig cfg = toy_config();
    WeightSet ws = random_seq_weights(cfg, 2);
    ws.tensors().erase("seq.block1.close.bn_beta");
    CHECK(testutil::caught_code([&] { SequenceNet::build(cfg, ws); }) ==
          ErrorCode::missing_tensor);
}

TEST_CASE("build rejects a wrongly shaped tensor") {
    const SequenceNetConfig cfg = toy_config();
    WeightSet ws = random_seq_weights(cfg, 3);
    Tensor bad;
    bad.shape = {3};
    bad.data = {1.0f, 2.0f, 3.0f};
    ws.put("seq.stem.pw_bias", bad);
    CHECK(testutil::caught_code([&] { SequenceNet::build(cfg, ws); }) ==
          ErrorCode::shape_error);
}

TEST_CASE("forward shape arithmetic: 500x64 -> 250x96") {
    const SequenceNetConfig cfg;
    const SequenceNet net = SequenceNet::build(cfg, random_seq_weights(cfg, 4));
    const Matrix out = net.forward(testutil::random_matrix(500, 64, 5));
    CHECK(out.rows() == 250);
    CHECK(out.cols() == 96);
}

TEST_CASE("forward rejects bad inputs") {
    const SequenceNetConfig cfg = toy_config();
    const SequenceNet net = SequenceNet::build(cfg, random_seq_weights(cfg, 6));
    CHECK(testutil::caught_code([&] {
              net.forward(testutil::random_matrix(10, 5, 7));
          }) == ErrorCode::shape_error);
    CHECK(testutil::caught_code([&] {
              net.forward(testutil::random_matrix(1, 8, 8));
          }) == ErrorCode::signal_too_short);
}

TEST_CASE("forward is deterministic") {
    const SequenceNetConfig cfg = toy_config();
    const SequenceNet net = SequenceNet::build(cfg, random_seq_weights(cfg, 9));
    const Matrix x = testutil::random_matrix(40, 8, 10);
    CHECK(net.forward(x) == net.forward(x));
}

TEST_CASE("outputs depend only on the receptive field") {
    const SequenceNetConfig cfg;
    const SequenceNet net = SequenceNet::build(cfg, random_seq_weights(cfg, 11));
    const std::size_t rf = net.receptive_field_frames();
    const std::size_t probe = 100; // pooled index; probe <= (rf-1)/2 keeps t+rf a bound
    const Matrix a = testutil::random_matrix(800, 64, 12);
    Matrix b = a;
    for (std::size_t t = probe + rf; t < b.rows(); ++t)
        for (std::size_t c = 0; c < b.cols(); ++c) b.at(t, c) += 5.0f;

    const Matrix fa = net.forward(a);
    const Matrix fb = net.forward(b);
    REQUIRE(fa.rows() == fb.rows());
    bool any_diff = false;
    for (std::size_t t = 0; t <= probe; ++t)
        for (std::size_t c = 0; c < fa.cols(); ++c)
            if (fa.at(t, c) != fb.at(t, c)) any_diff = true;
    CHECK_FALSE(any_diff);
    // sanity: the perturbation did change later frames
    CHECK(max_abs_diff(fa, fb) > 0.0f);
}

TEST_CASE("residual path isolated: zeroed block collapses to PReLU") {
    const SequenceNetConfig cfg = toy_config();
    WeightSet ws = random_seq_weights(cfg, 13);
    // zero every conv weight/bias of block0; batch norm already maps 0 -> 0
    for (auto& [name, t] : ws.tensors()) {
        if (name.starts_with("seq.block0.") &&
            (name.ends_with("dw_weight") || name.ends_with("pw_weight") ||
             name.ends_with("pw_bias")))
            std::fill(t.data.begin(), t.data.end(), 0.0f);
    }
    const SequenceNet net = SequenceNet::build(cfg, ws);
    const Matrix x = testutil::random_matrix(10, cfg.filters, 14);
    const Matrix got = net.forward_block(0, x);
    const Matrix want = prelu(x, PReluParams{ws.get("seq.block0.prelu").data});
    CHECK(max_abs_diff(got, want) == 0.0f);
}

TEST_CASE("stream equals batch for a single push") {
    const SequenceNetConfig cfg = toy_config();
    const SequenceNet net = SequenceNet::build(cfg, random_seq_weights(cfg, 15));
    const Matrix x = testutil::random_matrix(60, 8, 16);
    const Matrix batch = net.forward(x);

    SequenceStream stream(net);
    Matrix streamed = stream.push(x);
    streamed.append_rows(stream.flush());
    REQUIRE(streamed.rows() == batch.rows());
    CHECK(max_abs_diff(streamed, batch) <= 1e-6f);
}

TEST_CASE("stream equals batch for random chunkings") {
    const SequenceNetConfig cfg = toy_config();
    const SequenceNet net = SequenceNet::build(cfg, random_seq_weights(cfg, 17));
    const Matrix x = testutil::random_matrix(123, 8, 18);
    const Matrix batch = net.forward(x);

    std::mt19937 rng(19);
    for (int round = 0; round < 50; ++round) {
        SequenceStream stream(net);
        Matrix streamed(0, cfg.filters);
        std::size_t t = 0;
        while (t < x.rows()) {
            const std::size_t n = std::min<std::size_t>(1 + rng() % 17, x.rows() - t);
            Matrix chunk(n, x.cols());
            for (std::size_t i = 0; i < n; ++i)
                std::copy(x.row(t + i).begin(), x.row(t + i).end(),
                          chunk.row(i).begin());
            streamed.append_rows(stream.push(chunk));
            t += n;
        }
        streamed.append_rows(stream.flush());
        REQUIRE(streamed.rows() == batch.rows());
        CHECK(max_abs_diff(streamed, batch) <= 1e-4f);
        // tail equivalence specifically
        CHECK(max_abs_diff(streamed.row(streamed.rows() - 1),
                           batch.row(batch.rows() - 1)) <= 1e-4f);
    }
}

TEST_CASE("stream equals batch on the default architecture") {
    const SequenceNetConfig cfg;
    const SequenceNet net = SequenceNet::build(cfg, random_seq_weights(cfg, 20));
    const Matrix x = testutil::random_matrix(150, 64, 21);
    const Matrix batch = net.forward(x);

    SequenceStream stream(net);
    Matrix streamed(0, 96);
    for (std::size_t t = 0; t < x.rows(); t += 7) {
        const std::size_t n = std::min<std::size_t>(7, x.rows() - t);
        Matrix chunk(n, 64);
        for (std::size_t i = 0; i < n; ++i)
            std::copy(x.row(t + i).begin(), x.row(t + i).end(), chunk.row(i).begin());
        streamed.append_rows(stream.push(chunk));
    }
    streamed.append_rows(stream.flush());
    REQUIRE(streamed.rows() == batch.rows());
    CHECK(max_abs_diff(streamed, batch) <= 1e-4f);
}

TEST_CASE("stream frame bookkeeping") {
    const SequenceNetConfig cfg = toy_config();
    const SequenceNet net = SequenceNet::build(cfg, random_seq_weights(cfg, 22));

    SUBCASE("flush with no input emits nothing") {
        SequenceStream stream(net);
        CHECK(stream.flush().rows() == 0);
    }
    SUBCASE("100 inputs emit 50 outputs after flush") {
        SequenceStream stream(net);
        std::size_t total = stream.push(testutil::random_matrix(100, 8, 23)).rows();
        total += stream.flush().rows();
        CHECK(total == 50);
    }
    SUBCASE("push after flush") {
        SequenceStream stream(net);
        stream.push(testutil::random_matrix(4, 8, 24));
        stream.flush();
        CHECK(testutil::caught_code([&] {
                  stream.push(testutil::random_matrix(4, 8, 25));
              }) == ErrorCode::push_after_flush);
    }
    SUBCASE("double flush") {
        SequenceStream stream(net);
        stream.flush();
        CHECK(testutil::caught_code([&] { stream.flush(); }) == ErrorCode::double_flush);
    }
}

TEST_CASE("streaming state is bounded by the configuration") {
    const SequenceNetConfig cfg = toy_config();
    const SequenceNet net = SequenceNet::build(cfg, random_seq_weights(cfg, 26));
    SequenceStream stream(net);
    const std::size_t at_start = stream.state_bytes();
    stream.push(testutil::random_matrix(50, 8, 27));
    const std::size_t warm = stream.state_bytes();
    stream.push(testutil::random_matrix(2000, 8, 28));
    const std::size_t late = stream.state_bytes();
    CHECK(at_start == warm);
    CHECK(warm == late);

    // and a fresh session of the same config reports the same footprint
    SequenceStream other(net);
    CHECK(other.state_bytes() == at_start);
}

TEST_CASE("pool placement and headless variants run and stream consistently") {
    for (const bool pool_first : {false, true}) {
        for (const bool head : {true, false}) {
            SequenceNetConfig cfg = toy_config();
            cfg.pool_before_stem_prelu = pool_first;
            cfg.head_conv = head;
            const SequenceNet net = SequenceNet::build(cfg, random_seq_weights(cfg, 29));
            const Matrix x = testutil::random_matrix(41, 8, 30);
            const Matrix batch = net.forward(x);
            CHECK(batch.rows() == 20);
            CHECK(batch.cols() == 16);

            SequenceStream stream(net);
            Matrix streamed = stream.push(x);
            streamed.append_rows(stream.flush());
            REQUIRE(streamed.rows() == batch.rows());
            CHECK(max_abs_diff(streamed, batch) <= 1e-5f);
        }
    }
}

TEST_SUITE_END();
