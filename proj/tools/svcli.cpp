// svcli: speaker-verification command line: embedding extraction, enrollment,
// verification, EER evaluation, latency benchmarking and model inspection.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tinysv/budget.hpp"
#include "tinysv/eval.hpp"
#include "tinysv/model.hpp"
#include "tinysv/pipeline.hpp"

using namespace tinysv;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::io_error, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    require(out.good(), ErrorCode::io_error, "cannot write " + path.string());
    out << text;
    require(out.good(), ErrorCode::io_error, "write failed: " + path.string());
}

ModelConfig config_from_file_or_default(const std::string& config_path) {
    ModelConfig cfg;
    if (!config_path.empty()) {
        json j;
        try {
            j = json::parse(read_text(config_path));
        } catch (const json::exception& e) {
            fail(ErrorCode::validation_error,
                 config_path + ": invalid JSON: " + e.what());
        }
        j.get_to(cfg);
    }
    validate(cfg);
    return cfg;
}

json profile_to_json(const SpeakerProfile& p) {
    return {{"dim", p.embedding.size()},
            {"utterance_count", p.utterance_count},
            {"embedding", p.embedding}};
}

SpeakerProfile profile_from_json(const fs::path& path) {
    json j;
    try {
        j = json::parse(read_text(path));
    } catch (const json::exception& e) {
        fail(ErrorCode::validation_error, path.string() + ": invalid JSON: " + e.what());
    }
    SpeakerProfile p;
    p.embedding = j.at("embedding").get<std::vector<float>>();
    p.utterance_count = j.value("utterance_count", std::size_t{1});
    return p;
}

// ---- embed ------------------------------------------------------------------

struct EmbedArgs {
    std::string model, wav, out = "-", mode = "batch", format = "json";
};

std::vector<float> run_embedding(const Embedder& embedder, const fs::path& wav_path,
                                 const std::string& mode) {
    if (mode == "batch") return embedder.embed_wav(wav_path);
    const WavData wav = read_wav(wav_path);
    StreamSession session(embedder);
    // feed in 10 ms chunks, the granularity a live audio front end would use
    const std::size_t chunk = static_cast<std::size_t>(
        embedder.config().features.hop_samples());
    for (std::size_t off = 0; off < wav.samples.size(); off += chunk)
        session.push_pcm({wav.samples.data() + off,
                          std::min(chunk, wav.samples.size() - off)});
    return session.finish();
}

int cmd_embed(const EmbedArgs& args) {
    const Embedder embedder = Embedder::load_file(args.model);
    const std::vector<float> emb = run_embedding(embedder, args.wav, args.mode);

    if (args.format == "raw") {
        const char* bytes = reinterpret_cast<const char*>(emb.data());
        const std::streamsize n =
            static_cast<std::streamsize>(emb.size() * sizeof(float));
        if (args.out == "-") {
            std::cout.write(bytes, n);
        } else {
            std::ofstream out(args.out, std::ios::binary | std::ios::trunc);
            require(out.good(), ErrorCode::io_error, "cannot write " + args.out);
            out.write(bytes, n);
        }
        return 0;
    }
    const json j = {{"dim", emb.size()}, {"mode", args.mode}, {"embedding", emb}};
    if (args.out == "-")
        std::cout << j.dump() << "\n";
    else
        write_text(args.out, j.dump());
    return 0;
}

// ---- enroll / verify ----------------------------------------------------------

int cmd_enroll(const std::string& model, const std::vector<std::string>& wavs,
               const std::string& out) {
    const Embedder embedder = Embedder::load_file(model);
    std::vector<std::vector<float>> embeddings;
    for (const std::string& w : wavs) embeddings.push_back(embedder.embed_wav(w));
    const SpeakerProfile profile = enroll(embeddings);
    write_text(out, profile_to_json(profile).dump());
    std::cout << "enrolled " << wavs.size() << " utterance(s) -> " << out << "\n";
    return 0;
}

int cmd_verify(const std::string& model, const std::string& profile_path,
               const std::string& wav, double threshold, const std::string& mode) {
    const Embedder embedder = Embedder::load_file(model);
    const SpeakerProfile profile = profile_from_json(profile_path);
    const std::vector<float> emb = run_embedding(embedder, wav, mode);
    const double score = cosine_score(profile.embedding, emb);
    std::cout << "score " << std::fixed << std::setprecision(6) << score << "\n"
              << "threshold " << threshold << "\n"
              << "decision " << (score >= threshold ? "accept" : "reject") << "\n";
    return 0;
}

// ---- eval-eer -----------------------------------------------------------------

int cmd_eval_eer(const std::string& model, const std::string& trials_path,
                 const std::string& wav_root, const std::string& scores_out,
                 unsigned jobs) {
    const Embedder embedder = Embedder::load_file(model);
    const TrialSet trials = parse_trials(read_text(trials_path));
    require(!trials.trials.empty(), ErrorCode::malformed_line,
            trials_path + ": no trials");

    // resolve and check every path up front
    std::map<std::string, fs::path> resolved;
    for (const Trial& t : trials.trials)
        for (const std::string& p : {t.path_a, t.path_b}) {
            const fs::path full = wav_root.empty() ? fs::path(p) : fs::path(wav_root) / p;
            require(fs::exists(full), ErrorCode::missing_audio,
                    "missing audio: " + full.string());
            resolved.emplace(p, full);
        }

    // embed each unique file once, in parallel over a work queue
    std::vector<std::pair<std::string, fs::path>> work(resolved.begin(), resolved.end());
    std::map<std::string, std::vector<float>> embeddings;
    std::mutex mu;
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < std::min<std::size_t>(jobs, work.size()); ++w)
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= work.size()) return;
                try {
                    std::vector<float> e = embedder.embed_wav(work[i].second);
                    std::lock_guard<std::mutex> lock(mu);
                    embeddings[work[i].first] = std::move(e);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(mu);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);

    ScoreSet scores;
    std::ostringstream csv;
    csv << "label,path_a,path_b,score\n";
    for (const Trial& t : trials.trials) {
        const double s = cosine_score(embeddings.at(t.path_a), embeddings.at(t.path_b));
        scores.add(s, t.target);
        csv << (t.target ? 1 : 0) << "," << t.path_a << "," << t.path_b << ","
            << std::fixed << std::setprecision(6) << s << "\n";
    }
    if (!scores_out.empty()) write_text(scores_out, csv.str());

    const EerResult r = compute_eer(scores);
    std::cout << "trials " << trials.trials.size() << "\n"
              << std::fixed << std::setprecision(6) << "eer " << r.eer << "\n"
              << "eer_percent " << std::setprecision(4) << 100.0 * r.eer << "\n"
              << "threshold " << std::setprecision(6) << r.threshold << "\n";
    return 0;
}

// ---- bench --------------------------------------------------------------------

struct BenchArgs {
    std::string model;
    std::vector<double> durations{1.0, 5.0, 10.0};
    std::string mode = "both";
    int runs = 5;
    bool no_pacing = false;
    std::string device_label = "cpu";
    std::uint64_t seed = 0;
};

using Clock = std::chrono::steady_clock;

double ms_between(Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
}

// Batch latency: the whole pipeline runs once end-pointing fires.
std::pair<double, double> bench_batch_once(const Embedder& embedder,
                                           const std::vector<std::int16_t>& pcm,
                                           double seconds) {
    const auto t0 = Clock::now();
    volatile float sink = embedder.embed_pcm(pcm, 16000)[0];
    (void)sink;
    const double ms = ms_between(t0, Clock::now());
    return {ms, ms / 1000.0 / seconds};
}

// Stream latency: audio is consumed chunk by chunk as it "arrives"; the
// reported latency spans from the delivery of the final chunk (the end-point)
// to the embedding being available. RTF uses active processing time only.
std::pair<double, double> bench_stream_once(const Embedder& embedder,
                                            const std::vector<std::int16_t>& pcm,
                                            double seconds, bool pacing) {
    const std::size_t chunk = static_cast<std::size_t>(
        embedder.config().features.hop_samples()); // 10 ms
    StreamSession session(embedder);
    double active_ms = 0.0;
    const auto wall_start = Clock::now();
    std::size_t off = 0, pushed_chunks = 0;
    while (off + chunk < pcm.size()) { // all but the final chunk
        if (pacing) {
            const auto due = wall_start + std::chrono::microseconds(
                                              10000 * (pushed_chunks + 1));
            std::this_thread::sleep_until(due);
        }
        const auto t0 = Clock::now();
        session.push_pcm({pcm.data() + off, chunk});
        active_ms += ms_between(t0, Clock::now());
        off += chunk;
        ++pushed_chunks;
    }
    // the final chunk arriving is the end-point
    if (pacing)
        std::this_thread::sleep_until(
            wall_start + std::chrono::microseconds(10000 * (pushed_chunks + 1)));
    const auto endpoint = Clock::now();
    session.push_pcm({pcm.data() + off, pcm.size() - off});
    volatile float sink = session.finish()[0];
    (void)sink;
    const auto done = Clock::now();
    const double latency_ms = ms_between(endpoint, done);
    const double rtf = (active_ms + latency_ms) / 1000.0 / seconds;
    return {latency_ms, rtf};
}

int cmd_bench(const BenchArgs& args) {
    const Embedder embedder = Embedder::load_file(args.model);
    require(args.runs >= 1, ErrorCode::validation_error, "--runs must be >= 1");
    for (double d : args.durations)
        require(d > 0.0, ErrorCode::validation_error, "--durations must be positive");

    std::vector<std::string> modes;
    if (args.mode == "both") {
        modes = {"batch", "stream"};
    } else {
        require(args.mode == "batch" || args.mode == "stream",
                ErrorCode::validation_error, "--mode must be batch, stream or both");
        modes = {args.mode};
    }

    std::cout << "device_label,mode,audio_seconds,latency_ms,rtf,runs\n";
    std::mt19937_64 rng(args.seed);
    for (double seconds : args.durations) {
        const std::size_t n = static_cast<std::size_t>(seconds * 16000.0);
        std::vector<std::int16_t> pcm(n);
        for (auto& s : pcm)
            s = static_cast<std::int16_t>(static_cast<std::int64_t>(rng() % 12000) - 6000);
        for (const std::string& mode : modes) {
            double latency_sum = 0.0, rtf_sum = 0.0;
            for (int r = 0; r < args.runs; ++r) {
                const auto [ms, rtf] =
                    mode == "batch"
                        ? bench_batch_once(embedder, pcm, seconds)
                        : bench_stream_once(embedder, pcm, seconds, !args.no_pacing);
                latency_sum += ms;
                rtf_sum += rtf;
            }
            char row[256];
            std::snprintf(row, sizeof row, "%s,%s,%g,%.3f,%.4f,%d\n",
                          args.device_label.c_str(), mode.c_str(), seconds,
                          latency_sum / args.runs, rtf_sum / args.runs, args.runs);
            std::cout << row;
        }
    }
    return 0;
}

// ---- inspect ------------------------------------------------------------------

std::string human_k(double v) {
    char buf[64];
    if (v >= 1e6)
        std::snprintf(buf, sizeof buf, "%.1fM", v / 1e6);
    else
        std::snprintf(buf, sizeof buf, "%.1fK", v / 1e3);
    return buf;
}

int cmd_inspect(const std::string& model_path, bool as_json) {
    auto [cfg, ws] = load_model_file(model_path);
    const BudgetReport rep = compute_budget(cfg, 1.0);
    if (as_json) {
        json j = rep.to_json();
        j["loaded_scalars"] = ws.total_scalars();
        j["mfm_variant"] = mfm_variant_name(cfg.sequence.mfm_variant);
        j["mvn"] = mvn_mode_name(cfg.mvn);
        std::cout << j.dump(2) << "\n";
        return 0;
    }

    std::cout << "model " << model_path << " (format v" << cfg.format_version << ")\n";
    std::cout << "sequence-wise network: " << rep.tcs_layer_count
              << " TCSConv1d layers, kernel " << cfg.sequence.kernel << ", B="
              << cfg.sequence.blocks << " R=" << cfg.sequence.repeats << ", MFM "
              << mfm_variant_name(cfg.sequence.mfm_variant) << "\n";
    std::cout << "embedding-wise network: K=" << cfg.vlad.clusters << " ghosts G="
              << cfg.vlad.ghosts << " embedding_dim=" << cfg.vlad.embed_dim << "\n";
    std::cout << "receptive field: " << rep.receptive_field_frames
              << " frames; end-pointing delay: " << rep.endpoint_delay_frames
              << " frames\n\n";

    std::printf("%-22s %5s %5s %9s %12s %12s\n", "layer", "in", "out", "rate_hz",
                "params", "fma/s");
    for (const BudgetLine& l : rep.sequence_lines)
        std::printf("%-22s %5zu %5zu %9.0f %12zu %12.0f\n", l.name.c_str(), l.in_ch,
                    l.out_ch, l.frame_rate_hz, l.params_stored, l.fma);
    for (const BudgetLine& l : rep.embedding_lines)
        std::printf("%-22s %5s %5s %9.0f %12zu %12.0f\n", l.name.c_str(), "-", "-",
                    l.frame_rate_hz, l.params_stored, l.fma);

    const ReferenceBudget& ref = kReferenceBudget;
    std::cout << "\nparams (learnable / stored):\n";
    std::printf("  sequence   %8zu / %8zu   reference %s  deviation %+.1f%%\n",
                rep.sequence.params_learnable, rep.sequence.params_stored,
                human_k(ref.sequence_params).c_str(),
                deviation_percent(static_cast<double>(rep.sequence.params_learnable),
                                  ref.sequence_params));
    std::printf("  embedding  %8zu / %8zu   reference %s  deviation %+.1f%%\n",
                rep.embedding.params_learnable, rep.embedding.params_stored,
                human_k(ref.embedding_params).c_str(),
                deviation_percent(static_cast<double>(rep.embedding.params_learnable),
                                  ref.embedding_params));
    std::printf("  total      %8zu / %8zu   reference %.0f  deviation %+.1f%%\n",
                rep.total.params_learnable, rep.total.params_stored, ref.total_params,
                deviation_percent(static_cast<double>(rep.total.params_learnable),
                                  ref.total_params));
    std::cout << "loaded scalars: " << ws.total_scalars() << "\n";

    std::cout << "\ncompute per 1 s of audio:\n";
    std::printf("  sequence   FMA %12.0f   reference %s  deviation %+.1f%%\n",
                rep.sequence.fma, human_k(ref.sequence_fma_per_s).c_str(),
                deviation_percent(rep.sequence.fma, ref.sequence_fma_per_s));
    std::printf("  embedding  FMA %12.0f   reference %s  deviation %+.1f%%\n",
                rep.embedding.fma, human_k(ref.embedding_fma_per_s).c_str(),
                deviation_percent(rep.embedding.fma, ref.embedding_fma_per_s));
    std::printf("  total      FLOPS %10.0f   reference %s  deviation %+.1f%%  "
                "(FLOPS = 2*FMA + div)\n",
                rep.total.flops(), human_k(ref.total_flops_per_s).c_str(),
                deviation_percent(rep.total.flops(), ref.total_flops_per_s));
    return 0;
}

// ---- init-random ----------------------------------------------------------------

int cmd_init_random(const std::string& config_path, std::uint64_t seed,
                    const std::string& out) {
    const ModelConfig cfg = config_from_file_or_default(config_path);
    const WeightSet ws = random_init(cfg, seed);
    save_model_file(out, cfg, ws);
    std::cout << "wrote " << out << " (" << ws.total_scalars() << " scalars, seed "
              << seed << ")\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"small-footprint streaming speaker-verification engine"};
    app.require_subcommand(1);

    // embed
    EmbedArgs embed;
    auto* c_embed = app.add_subcommand("embed", "extract an embedding from a wav file");
    c_embed->add_option("--model", embed.model, "SVW1 model file")->required();
    c_embed->add_option("--wav", embed.wav, "input wav (PCM16 mono 16 kHz)")->required();
    c_embed->add_option("--mode", embed.mode, "batch|stream")
        ->check(CLI::IsMember({"batch", "stream"}));
    c_embed->add_option("--out", embed.out, "output path or - for stdout");
    c_embed->add_option("--format", embed.format, "json|raw (raw = 96 float32 LE)")
        ->check(CLI::IsMember({"json", "raw"}));

    // enroll
    std::string en_model, en_out;
    std::vector<std::string> en_wavs;
    auto* c_enroll = app.add_subcommand("enroll", "build a speaker profile from wavs");
    c_enroll->add_option("--model", en_model)->required();
    c_enroll->add_option("--out", en_out, "profile JSON path")->required();
    c_enroll->add_option("wavs", en_wavs, "enrollment wav files")->required();

    // verify
    std::string v_model, v_profile, v_wav, v_mode = "batch";
    double v_threshold = 0.5;
    auto* c_verify = app.add_subcommand("verify", "score a wav against a profile");
    c_verify->add_option("--model", v_model)->required();
    c_verify->add_option("--profile", v_profile)->required();
    c_verify->add_option("--wav", v_wav)->required();
    c_verify->add_option("--threshold", v_threshold, "accept when score >= threshold");
    c_verify->add_option("--mode", v_mode)->check(CLI::IsMember({"batch", "stream"}));

    // eval-eer
    std::string e_model, e_trials, e_root, e_scores;
    unsigned e_jobs = 0;
    auto* c_eval = app.add_subcommand("eval-eer", "equal error rate over a trial list");
    c_eval->add_option("--model", e_model)->required();
    c_eval->add_option("--trials", e_trials, "text file: label path_a path_b")
        ->required();
    c_eval->add_option("--wav-root", e_root, "directory trial paths resolve under");
    c_eval->add_option("--scores-out", e_scores, "write per-trial scores CSV here");
    c_eval->add_option("--jobs", e_jobs, "embedding worker threads (0 = auto)");

    // bench
    BenchArgs bench;
    auto* c_bench = app.add_subcommand("bench", "latency and real-time-factor report");
    c_bench->add_option("--model", bench.model)->required();
    c_bench->add_option("--durations", bench.durations, "audio lengths in seconds")
        ->delimiter(',');
    c_bench->add_option("--mode", bench.mode)->check(
        CLI::IsMember({"batch", "stream", "both"}));
    c_bench->add_option("--runs", bench.runs, "repetitions per record");
    c_bench->add_flag("--no-pacing", bench.no_pacing,
                      "skip real-time pacing of stream chunks");
    c_bench->add_option("--device-label", bench.device_label, "label for the CSV");
    c_bench->add_option("--seed", bench.seed, "synthetic audio seed");

    // inspect
    std::string i_model;
    bool i_json = false;
    auto* c_inspect = app.add_subcommand("inspect", "layer schedule and cost budget");
    c_inspect->add_option("--model", i_model)->required();
    c_inspect->add_flag("--json", i_json, "machine-readable report");

    // init-random
    std::string r_config, r_out;
    std::uint64_t r_seed = 0;
    auto* c_init = app.add_subcommand("init-random",
                                      "write a deterministic random-weight model");
    c_init->add_option("--config", r_config, "model config JSON (defaults when absent)");
    c_init->add_option("--seed", r_seed);
    c_init->add_option("--out", r_out, "output model path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_embed->parsed()) return cmd_embed(embed);
        if (c_enroll->parsed()) return cmd_enroll(en_model, en_wavs, en_out);
        if (c_verify->parsed())
            return cmd_verify(v_model, v_profile, v_wav, v_threshold, v_mode);
        if (c_eval->parsed())
            return cmd_eval_eer(e_model, e_trials, e_root, e_scores, e_jobs);
        if (c_bench->parsed()) return cmd_bench(bench);
        if (c_inspect->parsed()) return cmd_inspect(i_model, i_json);
        if (c_init->parsed()) return cmd_init_random(r_config, r_seed, r_out);
    } catch (const Error& e) {
        std::cerr << "error: " << e.code_name() << ": " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: Internal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
