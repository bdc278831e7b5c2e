#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tinysv/crc32.hpp"
#include "tinysv/errors.hpp"
#include "tinysv/features.hpp"
#include "tinysv/sequence_net.hpp"
#include "tinysv/vlad.hpp"
#include "tinysv/weights.hpp"

namespace tinysv {

inline constexpr int kFormatVersion = 1;
inline constexpr char kContainerMagic[4] = {'S', 'V', 'W', '1'};
inline constexpr std::size_t kTensorAlignment = 64;

// Everything needed to rebuild the full pipeline: front end, sequence-wise
// network, aggregator, and the MVN mode the embedder runs with.
struct ModelConfig {
    FeatureConfig features;
    SequenceNetConfig sequence;
    VladConfig vlad;
    MvnMode mvn = MvnMode::causal;
    int format_version = kFormatVersion;
};

inline void validate(const ModelConfig& cfg) {
    validate(cfg.features);
    validate(cfg.sequence);
    validate(cfg.vlad);
    require(static_cast<std::size_t>(cfg.features.n_mels) == cfg.sequence.in_channels,
            ErrorCode::validation_error,
            "sequence.in_channels must equal features.n_mels");
    require(cfg.vlad.in_channels == cfg.sequence.filters, ErrorCode::validation_error,
            "vlad.in_channels must equal sequence.filters");
    require(cfg.mvn == MvnMode::causal || cfg.mvn == MvnMode::utterance,
            ErrorCode::validation_error, "model mvn mode must be causal or utterance");
}

// ---- JSON (stable field names, documented in the README) -------------------

inline void to_json(nlohmann::json& j, const FeatureConfig& c) {
    j = {{"sample_rate_hz", c.sample_rate_hz}, {"n_mels", c.n_mels},
         {"window_ms", c.window_ms},           {"hop_ms", c.hop_ms},
         {"fmin_hz", c.fmin_hz},               {"fmax_hz", c.fmax_hz},
         {"log_floor", c.log_floor},           {"fft_size", c.fft_size},
         {"window_fn", c.window_fn},           {"mel_scale", c.mel_scale}};
}

inline void from_json(const nlohmann::json& j, FeatureConfig& c) {
    c.sample_rate_hz = j.value("sample_rate_hz", c.sample_rate_hz);
    c.n_mels = j.value("n_mels", c.n_mels);
    c.window_ms = j.value("window_ms", c.window_ms);
    c.hop_ms = j.value("hop_ms", c.hop_ms);
    c.fmin_hz = j.value("fmin_hz", c.fmin_hz);
    c.fmax_hz = j.value("fmax_hz", c.fmax_hz);
    c.log_floor = j.value("log_floor", c.log_floor);
    c.fft_size = j.value("fft_size", c.fft_size);
    c.window_fn = j.value("window_fn", c.window_fn);
    c.mel_scale = j.value("mel_scale", c.mel_scale);
}

inline void to_json(nlohmann::json& j, const SequenceNetConfig& c) {
    j = {{"in_channels", c.in_channels},
         {"filters", c.filters},
         {"kernel", c.kernel},
         {"blocks", c.blocks},
         {"repeats", c.repeats},
         {"pool_stride", c.pool_stride},
         {"mfm_variant", mfm_variant_name(c.mfm_variant)},
         {"pool_before_stem_prelu", c.pool_before_stem_prelu},
         {"head_conv", c.head_conv}};
}

inline void from_json(const nlohmann::json& j, SequenceNetConfig& c) {
    c.in_channels = j.value("in_channels", c.in_channels);
    c.filters = j.value("filters", c.filters);
    c.kernel = j.value("kernel", c.kernel);
    c.blocks = j.value("blocks", c.blocks);
    c.repeats = j.value("repeats", c.repeats);
    c.pool_stride = j.value("pool_stride", c.pool_stride);
    const std::string v = j.value("mfm_variant", std::string("halving"));
    require(v == "halving" || v == "doubling", ErrorCode::validation_error,
            "sequence.mfm_variant must be \"halving\" or \"doubling\"");
    c.mfm_variant = v == "halving" ? MfmVariant::halving : MfmVariant::doubling;
    c.pool_before_stem_prelu = j.value("pool_before_stem_prelu", c.pool_before_stem_prelu);
    c.head_conv = j.value("head_conv", c.head_conv);
}

inline void to_json(nlohmann::json& j, const VladConfig& c) {
    j = {{"clusters", c.clusters},
         {"ghosts", c.ghosts},
         {"in_channels", c.in_channels},
         {"embed_dim", c.embed_dim}};
}

inline void from_json(const nlohmann::json& j, VladConfig& c) {
    c.clusters = j.value("clusters", c.clusters);
    c.ghosts = j.value("ghosts", c.ghosts);
    c.in_channels = j.value("in_channels", c.in_channels);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"format_version", c.format_version},
         {"features", c.features},
         {"sequence", c.sequence},
         {"vlad", c.vlad},
         {"mvn", mvn_mode_name(c.mvn)}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    c.format_version = j.value("format_version", kFormatVersion);
    if (j.contains("features")) j.at("features").get_to(c.features);
    if (j.contains("sequence")) j.at("sequence").get_to(c.sequence);
    if (j.contains("vlad")) j.at("vlad").get_to(c.vlad);
    const std::string mvn = j.value("mvn", std::string("causal"));
    require(mvn == "causal" || mvn == "utterance", ErrorCode::validation_error,
            "model mvn mode must be \"causal\" or \"utterance\"");
    c.mvn = mvn == "causal" ? MvnMode::causal : MvnMode::utterance;
}

// ---- tensor roster ----------------------------------------------------------

// Every tensor a model of this configuration stores, with expected shapes.
inline std::map<std::string, std::vector<std::size_t>>
expected_tensor_shapes(const ModelConfig& cfg) {
    std::map<std::string, std::vector<std::size_t>> shapes =
        sequence_tensor_shapes(cfg.sequence);
    for (auto& [name, shape] : vlad_tensor_shapes(cfg.vlad))
        shapes.emplace(name, shape);
    return shapes;
}

namespace detail {

class InitRng {
public:
    explicit InitRng(std::uint64_t seed) : rng_(seed) {}

    // uniform in [-bound, bound], reproducible across platforms
    float uniform(float bound) {
        const auto u = static_cast<std::uint32_t>(rng_() >> 40); // 24 bits
        const float unit = static_cast<float>(u) * (1.0f / 16777216.0f);
        return (2.0f * unit - 1.0f) * bound;
    }

private:
    std::mt19937_64 rng_;
};

} // namespace detail

// Deterministic random weights: convolution and projection weights uniform in
// +-sqrt(1/fan_in), biases zero, batch norm at identity, PReLU slope 0.25.
inline WeightSet random_init(const ModelConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    detail::InitRng rng(seed);
    WeightSet ws;

    auto fill_uniform = [&](const std::vector<std::size_t>& shape, std::size_t fan_in) {
        Tensor t;
        t.shape = shape;
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        t.data.resize(n);
        const float bound = std::sqrt(1.0f / static_cast<float>(fan_in));
        for (float& v : t.data) v = rng.uniform(bound);
        return t;
    };
    auto constant = [](const std::vector<std::size_t>& shape, float value) {
        Tensor t;
        t.shape = shape;
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        t.data.assign(n, value);
        return t;
    };

    for (const TcsLayerSpec& l : tcs_schedule(cfg.sequence)) {
        const std::string p = "seq." + l.name;
        ws.put(p + ".dw_weight", fill_uniform({l.in_ch, l.kernel}, l.kernel));
        ws.put(p + ".pw_weight", fill_uniform({l.out_ch, l.in_ch}, l.in_ch));
        ws.put(p + ".pw_bias", constant({l.out_ch}, 0.0f));
        ws.put(p + ".bn_gamma", constant({l.out_ch}, 1.0f));
        ws.put(p + ".bn_beta", constant({l.out_ch}, 0.0f));
        ws.put(p + ".bn_mean", constant({l.out_ch}, 0.0f));
        ws.put(p + ".bn_var", constant({l.out_ch}, 1.0f));
    }
    for (const std::string& s : prelu_scopes(cfg.sequence))
        ws.put("seq." + s + ".prelu", constant({cfg.sequence.filters}, 0.25f));

    const VladConfig& v = cfg.vlad;
    ws.put("vlad.assign_weight",
           fill_uniform({v.total_clusters(), v.in_channels}, v.in_channels));
    ws.put("vlad.assign_bias", constant({v.total_clusters()}, 0.0f));
    ws.put("vlad.centroids", fill_uniform({v.clusters, v.in_channels}, v.in_channels));
    ws.put("vlad.proj_weight", fill_uniform({v.embed_dim, v.in_channels}, v.in_channels));
    ws.put("vlad.proj_bias", constant({v.embed_dim}, 0.0f));
    return ws;
}

// ---- SVW1 container ---------------------------------------------------------
//
// [0..3]  magic "SVW1"
// [4..7]  header length, unsigned 32-bit little-endian
// [8..]   UTF-8 JSON header (space-padded so the payload is 64-byte aligned):
//         {format_version, model_config, payload_length, payload_crc32,
//          tensors: [{name, shape, dtype "f32", offset, nbytes}, ...]}
// then    payload: raw float32 little-endian tensor data, each tensor at a
//         64-byte aligned payload-relative offset, gaps zero-filled.

namespace detail {

inline void check_weights_match_config(const ModelConfig& cfg, const WeightSet& ws) {
    const auto expected = expected_tensor_shapes(cfg);
    for (const auto& [name, shape] : expected) ws.get(name, shape);
    for (const auto& [name, t] : ws.tensors())
        require(expected.count(name) != 0, ErrorCode::bad_container,
                "unexpected tensor not named by the configuration: " + name);
}

} // namespace detail

inline std::vector<std::uint8_t> save_weights(const ModelConfig& cfg,
                                              const WeightSet& ws) {
    validate(cfg);
    detail::check_weights_match_config(cfg, ws);

    // lay out the payload first (offsets feed the header)
    nlohmann::json table = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& [name, t] : ws.tensors()) {
        offset = (offset + kTensorAlignment - 1) / kTensorAlignment * kTensorAlignment;
        const std::size_t nbytes = t.numel() * sizeof(float);
        table.push_back({{"name", name},
                         {"shape", t.shape},
                         {"dtype", "f32"},
                         {"offset", offset},
                         {"nbytes", nbytes}});
        offset += nbytes;
    }
    const std::size_t payload_len = offset;
    std::vector<std::uint8_t> payload(payload_len, 0);
    std::size_t i = 0;
    for (const auto& [name, t] : ws.tensors()) {
        const std::size_t off = table[i++]["offset"].get<std::size_t>();
        std::memcpy(payload.data() + off, t.data.data(), t.numel() * sizeof(float));
    }

    nlohmann::json header = {{"format_version", cfg.format_version},
                             {"model_config", cfg},
                             {"payload_length", payload_len},
                             {"payload_crc32", crc32(payload)},
                             {"tensors", table}};
    std::string header_str = header.dump();
    while ((8 + header_str.size()) % kTensorAlignment != 0) header_str.push_back(' ');

    std::vector<std::uint8_t> out;
    out.reserve(8 + header_str.size() + payload.size());
    out.insert(out.end(), kContainerMagic, kContainerMagic + 4);
    const auto hlen = static_cast<std::uint32_t>(header_str.size());
    for (int b = 0; b < 4; ++b)
        out.push_back(static_cast<std::uint8_t>((hlen >> (8 * b)) & 0xFFu));
    out.insert(out.end(), header_str.begin(), header_str.end());
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

inline std::pair<ModelConfig, WeightSet> load_weights(std::span<const std::uint8_t> bytes) {
    require(bytes.size() >= 8 && std::memcmp(bytes.data(), kContainerMagic, 4) == 0,
            ErrorCode::bad_magic, "not an SVW1 container");
    std::uint32_t hlen = 0;
    for (int b = 0; b < 4; ++b)
        hlen |= static_cast<std::uint32_t>(bytes[4 + static_cast<std::size_t>(b)])
                << (8 * b);
    require(8 + static_cast<std::size_t>(hlen) <= bytes.size(), ErrorCode::bad_container,
            "header length exceeds file size");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + hlen);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::bad_container, std::string("unparseable header: ") + e.what());
    }

    const int version = header.value("format_version", -1);
    require(version == kFormatVersion, ErrorCode::version_unsupported,
            "unsupported container format_version " + std::to_string(version));

    ModelConfig cfg;
    try {
        header.at("model_config").get_to(cfg);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::bad_container, std::string("bad model_config: ") + e.what());
    }
    validate(cfg);

    const std::span<const std::uint8_t> payload = bytes.subspan(8 + hlen);
    const auto payload_len = header.value("payload_length", std::size_t{0});
    require(payload_len <= payload.size(), ErrorCode::bad_container,
            "payload_length exceeds file size");
    require(crc32(payload.first(payload_len)) ==
                header.value("payload_crc32", std::uint32_t{0}),
            ErrorCode::crc_mismatch, "payload checksum mismatch");

    WeightSet ws;
    std::vector<std::pair<std::size_t, std::size_t>> extents;
    for (const auto& entry : header.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        require(entry.value("dtype", std::string()) == "f32", ErrorCode::bad_container,
                name + ": unsupported dtype");
        Tensor t;
        t.shape = entry.at("shape").get<std::vector<std::size_t>>();
        const auto off = entry.at("offset").get<std::size_t>();
        const auto nbytes = entry.at("nbytes").get<std::size_t>();
        require(nbytes == t.numel() * sizeof(float), ErrorCode::bad_container,
                name + ": byte length does not match shape");
        require(off + nbytes <= payload_len, ErrorCode::bad_container,
                name + ": tensor extends past the payload");
        require(!ws.contains(name), ErrorCode::bad_container,
                name + ": duplicate tensor");
        extents.emplace_back(off, off + nbytes);
        t.data.resize(t.numel());
        std::memcpy(t.data.data(), payload.data() + off, nbytes);
        ws.put(name, std::move(t));
    }
    std::sort(extents.begin(), extents.end());
    for (std::size_t e = 1; e < extents.size(); ++e)
        require(extents[e].first >= extents[e - 1].second, ErrorCode::bad_container,
                "overlapping tensor extents");

    detail::check_weights_match_config(cfg, ws);
    return {cfg, std::move(ws)};
}

inline void save_model_file(const std::filesystem::path& path, const ModelConfig& cfg,
                            const WeightSet& ws) {
    const std::vector<std::uint8_t> bytes = save_weights(cfg, ws);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorCode::io_error, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    require(out.good(), ErrorCode::io_error, "write failed: " + path.string());
}

inline std::pair<ModelConfig, WeightSet>
load_model_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::io_error, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return load_weights(bytes);
}

} // namespace tinysv
