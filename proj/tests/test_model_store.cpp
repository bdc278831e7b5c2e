#include <doctest.h>

#include "tinysv/crc32.hpp"
#include "tinysv/model.hpp"

#include "testutil.hpp"

using namespace tinysv;

TEST_SUITE_BEGIN("model_store");

TEST_CASE("crc32 known vector") {
    const std::string s = "123456789";
    CHECK(crc32({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}) ==
          0xCBF43926u);
}

TEST_CASE("random_init is deterministic per seed") {
    const ModelConfig cfg;
    const WeightSet a = random_init(cfg, 7);
    const WeightSet b = random_init(cfg, 7);
    REQUIRE(a.size() == b.size());
    for (const auto& [name, t] : a.tensors()) {
        const Tensor& u = b.get(name);
        CHECK(t.shape == u.shape);
        CHECK(t.data == u.data);
    }

    const WeightSet c = random_init(cfg, 8);
    bool any_diff = false;
    for (const auto& [name, t] : a.tensors())
        if (c.get(name).data != t.data) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("random_init covers exactly the configured tensor roster") {
    const ModelConfig cfg;
    const WeightSet ws = random_init(cfg, 0);
    const auto expected = expected_tensor_shapes(cfg);
    CHECK(ws.size() == expected.size());
    // oracle: enumerate the schedule independently
    const std::size_t tcs = cfg.sequence.tcs_layer_count();
    const std::size_t want = tcs * 7                    // dw, pw w+b, 4 bn vectors
                             + (2 + cfg.sequence.blocks) // prelu scopes
                             + 5;                        // vlad tensors
    CHECK(ws.size() == want);
    for (const auto& [name, shape] : expected) CHECK(ws.get(name).shape == shape);
}

TEST_CASE("init bounds and values") {
    ModelConfig cfg;
    const WeightSet ws = random_init(cfg, 123);
    const Tensor& dw = ws.get("seq.stem.dw_weight");
    const float bound = std::sqrt(1.0f / static_cast<float>(cfg.sequence.kernel));
    for (float v : dw.data) CHECK(std::abs(v) <= bound);
    for (float v : ws.get("seq.stem.bn_gamma").data) CHECK(v == 1.0f);
    for (float v : ws.get("seq.stem.bn_var").data) CHECK(v == 1.0f);
    for (float v : ws.get("seq.block0.prelu").data) CHECK(v == 0.25f);
    for (float v : ws.get("vlad.assign_bias").data) CHECK(v == 0.0f);
}

TEST_CASE("container roundtrip is bit-identical") {
    const ModelConfig cfg;
    const WeightSet ws = random_init(cfg, 42);
    const std::vector<std::uint8_t> bytes = save_weights(cfg, ws);
    auto [cfg2, ws2] = load_weights(bytes);
    for (const auto& [name, t] : ws.tensors()) {
        const Tensor& u = ws2.get(name);
        CHECK(t.shape == u.shape);
        CHECK(t.data == u.data);
    }
    // config roundtrip through the header, then byte-for-byte stability
    const std::vector<std::uint8_t> again = save_weights(cfg2, ws2);
    CHECK(bytes == again);
}

TEST_CASE("container rejects corruption") {
    const ModelConfig cfg;
    const WeightSet ws = random_init(cfg, 1);
    std::vector<std::uint8_t> bytes = save_weights(cfg, ws);

    SUBCASE("bad magic") {
        bytes[0] ^= 0xFF;
        CHECK(testutil::caught_code([&] { load_weights(bytes); }) ==
              ErrorCode::bad_magic);
    }
    SUBCASE("payload bit flip") {
        bytes.back() ^= 0x01;
        CHECK(testutil::caught_code([&] { load_weights(bytes); }) ==
              ErrorCode::crc_mismatch);
    }
    SUBCASE("truncated file") {
        bytes.resize(bytes.size() / 2);
        const ErrorCode code = testutil::caught_code([&] { load_weights(bytes); });
        const bool recognized =
            code == ErrorCode::bad_container || code == ErrorCode::crc_mismatch;
        CHECK(recognized);
    }
    SUBCASE("unsupported version") {
        // rewrite the header with a bumped version
        std::uint32_t hlen = 0;
        for (int b = 0; b < 4; ++b)
            hlen |= static_cast<std::uint32_t>(bytes[4 + b]) << (8 * b);
        std::string header(bytes.begin() + 8, bytes.begin() + 8 + hlen);
        const auto pos = header.find("\"format_version\":1");
        REQUIRE(pos != std::string::npos);
        header.replace(pos, 18, "\"format_version\":9");
        std::copy(header.begin(), header.end(), bytes.begin() + 8);
        CHECK(testutil::caught_code([&] { load_weights(bytes); }) ==
              ErrorCode::version_unsupported);
    }
}

TEST_CASE("save rejects an incomplete or inflated tensor set") {
    const ModelConfig cfg;
    WeightSet ws = random_init(cfg, 2);
    SUBCASE("missing tensor") {
        ws.tensors().erase("vlad.centroids");
        CHECK(testutil::caught_code([&] { save_weights(cfg, ws); }) ==
              ErrorCode::missing_tensor);
    }
    SUBCASE("unexpected tensor") {
        Tensor extra;
        extra.shape = {2};
        extra.data = {1.0f, 2.0f};
        ws.put("seq.mystery", extra);
        CHECK(testutil::caught_code([&] { save_weights(cfg, ws); }) ==
              ErrorCode::bad_container);
    }
}

TEST_CASE("tensors are 64-byte aligned in the file") {
    const ModelConfig cfg;
    const std::vector<std::uint8_t> bytes = save_weights(cfg, random_init(cfg, 3));
    std::uint32_t hlen = 0;
    for (int b = 0; b < 4; ++b)
        hlen |= static_cast<std::uint32_t>(bytes[4 + b]) << (8 * b);
    CHECK((8 + hlen) % 64 == 0);
    const auto header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + hlen);
    for (const auto& t : header.at("tensors"))
        CHECK(t.at("offset").get<std::size_t>() % 64 == 0);
}

TEST_CASE("model file save/load") {
    testutil::TempDir dir;
    const ModelConfig cfg;
    const WeightSet ws = random_init(cfg, 4);
    save_model_file(dir.file("m.svw"), cfg, ws);
    auto [cfg2, ws2] = load_model_file(dir.file("m.svw"));
    CHECK(ws2.total_scalars() == ws.total_scalars());
    CHECK(testutil::caught_code([&] { load_model_file(dir.file("missing.svw")); }) ==
          ErrorCode::io_error);
}

TEST_CASE("config JSON round trip and validation") {
    ModelConfig cfg;
    cfg.sequence.mfm_variant = MfmVariant::doubling;
    cfg.mvn = MvnMode::utterance;
    const nlohmann::json j = cfg;
    ModelConfig back = j.get<ModelConfig>();
    CHECK(back.sequence.mfm_variant == MfmVariant::doubling);
    CHECK(back.mvn == MvnMode::utterance);
    CHECK(back.features.fft_size == cfg.features.fft_size);

    SUBCASE("even kernel rejected, error names the field") {
        ModelConfig bad;
        bad.sequence.kernel = 14;
        try {
            validate(bad);
            FAIL("expected ValidationError");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::validation_error);
            CHECK(std::string(e.what()).find("kernel") != std::string::npos);
        }
    }
    SUBCASE("channel chain consistency enforced") {
        ModelConfig bad;
        bad.vlad.in_channels = 128;
        CHECK(testutil::caught_code([&] { validate(bad); }) ==
              ErrorCode::validation_error);
    }
}

TEST_SUITE_END();
