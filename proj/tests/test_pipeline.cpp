#include <doctest.h>

#include <random>
#include <thread>

#include "tinysv/eval.hpp"
#include "tinysv/pipeline.hpp"

#include "testutil.hpp"

using namespace tinysv;

TEST_SUITE_BEGIN("pipeline");

TEST_CASE("batch and stream embeddings agree") {
    const ModelConfig cfg;
    const Embedder embedder(cfg, random_init(cfg, 11));
    const auto pcm = testutil::make_noise_pcm(16000, 5);

    const std::vector<float> batch = embedder.embed_pcm(pcm, 16000);
    CHECK(batch.size() == 96);

    std::mt19937 rng(6);
    for (int round = 0; round < 5; ++round) {
        StreamSession session(embedder, true);
        std::size_t off = 0;
        while (off < pcm.size()) {
            const std::size_t n =
                std::min<std::size_t>(1 + rng() % 2000, pcm.size() - off);
            session.push_pcm({pcm.data() + off, n});
            off += n;
        }
        const std::vector<float> streamed = session.finish();
        CHECK(cosine_score(batch, streamed) >= 1.0 - 1e-6);

        const Matrix stage1_batch = embedder.net().forward(
            apply_mvn(compute_log_mel(pcm, 16000, cfg.features), cfg.mvn));
        REQUIRE(session.stage1_frames().rows() == stage1_batch.rows());
        CHECK(max_abs_diff(session.stage1_frames(), stage1_batch) <= 1e-4f);
    }
}

TEST_CASE("doubling MFM variant streams like batch too") {
    ModelConfig cfg;
    cfg.sequence.mfm_variant = MfmVariant::doubling;
    const Embedder embedder(cfg, random_init(cfg, 19));
    const auto pcm = testutil::make_noise_pcm(14000, 20);
    const std::vector<float> batch = embedder.embed_pcm(pcm, 16000);

    StreamSession session(embedder);
    for (std::size_t off = 0; off < pcm.size(); off += 1100)
        session.push_pcm({pcm.data() + off, std::min<std::size_t>(1100, pcm.size() - off)});
    CHECK(cosine_score(batch, session.finish()) >= 1.0 - 1e-6);
}

TEST_CASE("session state footprint is constant") {
    const ModelConfig cfg;
    const Embedder embedder(cfg, random_init(cfg, 12));
    StreamSession session(embedder);
    const std::size_t before = session.state_bytes();
    session.push_pcm(testutil::make_noise_pcm(32000, 7));
    CHECK(session.state_bytes() == before);
}

TEST_CASE("utterance-MVN models embed in batch but refuse sessions") {
    ModelConfig cfg;
    cfg.mvn = MvnMode::utterance;
    const Embedder embedder(cfg, random_init(cfg, 13));
    const auto pcm = testutil::make_noise_pcm(8000, 8);
    CHECK(embedder.embed_pcm(pcm, 16000).size() == 96);
    CHECK(testutil::caught_code([&] { StreamSession s(embedder); }) ==
          ErrorCode::unsupported_mode);
}

TEST_CASE("pipeline error propagation") {
    const ModelConfig cfg;
    const Embedder embedder(cfg, random_init(cfg, 14));
    SUBCASE("too-short audio") {
        const std::vector<std::int16_t> tiny(100, 0);
        CHECK(testutil::caught_code([&] { embedder.embed_pcm(tiny, 16000); }) ==
              ErrorCode::signal_too_short);
    }
    SUBCASE("wrong sample rate") {
        const std::vector<std::int16_t> pcm(16000, 0);
        CHECK(testutil::caught_code([&] { embedder.embed_pcm(pcm, 44100); }) ==
              ErrorCode::unsupported_format);
    }
    SUBCASE("empty stream finishes with EmptyUtterance") {
        StreamSession session(embedder);
        CHECK(testutil::caught_code([&] { session.finish(); }) ==
              ErrorCode::empty_utterance);
    }
}

TEST_CASE("embedding from a wav file matches the pcm path") {
    testutil::TempDir dir;
    const ModelConfig cfg;
    const Embedder embedder(cfg, random_init(cfg, 15));
    const auto pcm = testutil::make_noise_pcm(12000, 9);
    testutil::write_wav(dir.file("u.wav"), pcm, 16000);
    const std::vector<float> from_file = embedder.embed_wav(dir.file("u.wav"));
    const std::vector<float> from_pcm = embedder.embed_pcm(pcm, 16000);
    CHECK(max_abs_diff(from_file, from_pcm) == 0.0f);
}

TEST_CASE("concurrent sessions share one immutable embedder") {
    const ModelConfig cfg;
    const Embedder embedder(cfg, random_init(cfg, 17));
    const auto pcm = testutil::make_noise_pcm(16000, 18);
    const std::vector<float> want = embedder.embed_pcm(pcm, 16000);

    std::vector<std::vector<float>> results(4);
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < results.size(); ++w)
        threads.emplace_back([&, w] {
            StreamSession session(embedder);
            for (std::size_t off = 0; off < pcm.size(); off += 480)
                session.push_pcm(
                    {pcm.data() + off, std::min<std::size_t>(480, pcm.size() - off)});
            results[w] = session.finish();
        });
    for (std::thread& t : threads) t.join();
    for (const std::vector<float>& r : results)
        CHECK(cosine_score(r, want) >= 1.0 - 1e-6);
}

TEST_CASE("embedder round trip through a model file") {
    testutil::TempDir dir;
    const ModelConfig cfg;
    const WeightSet ws = random_init(cfg, 16);
    save_model_file(dir.file("m.svw"), cfg, ws);
    const Embedder a(cfg, ws);
    const Embedder b = Embedder::load_file(dir.file("m.svw"));
    const auto pcm = testutil::make_noise_pcm(8000, 10);
    CHECK(max_abs_diff(a.embed_pcm(pcm, 16000), b.embed_pcm(pcm, 16000)) == 0.0f);
}

TEST_SUITE_END();
