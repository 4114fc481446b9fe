#pragma once

// The clickseg command line: segment, eval, simulate, bootstrap, serve.

#include <clickseg/error.hpp>
#include <clickseg/eval.hpp>
#include <clickseg/game.hpp>
#include <clickseg/media.hpp>
#include <clickseg/service.hpp>
#include <clickseg/temporal.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace clickseg::cli {

enum ExitCode { ok = 0, runtime_failure = 1, usage_error = 2 };

/// 0 errors only, 1 progress, 2 debug; from CLICKSEG_LOG.
inline int log_level()
{
    const char* v = std::getenv("CLICKSEG_LOG");
    if (!v)
        return 0;
    const std::string s = v;
    if (s == "debug" || s == "2")
        return 2;
    if (s == "info" || s == "1")
        return 1;
    return 0;
}

/// 64-bit FNV-1a over bytes.
inline std::uint64_t fnv1a(const std::string& bytes, std::uint64_t h = 0xcbf29ce484222325ull)
{
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string read_file(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in)
        throw Error(Errc::decode_error, "cannot read " + p.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

/// Digest of a file, or of a directory's regular files in name order
/// (names included).
inline std::string digest(const fs::path& p)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    if (fs::is_directory(p)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(p)) {
            if (e.is_regular_file())
                files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files)
            h = fnv1a(read_file(f), fnv1a(f.filename().string(), h));
    } else {
        h = fnv1a(read_file(p), h);
    }
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << h;
    return s.str();
}

inline nlohmann::json params_json(const Params& p)
{
    return {{"alpha1", p.alpha1},     {"alpha2", p.alpha2},           {"beta1", p.beta1},
            {"u_s", p.u_s},           {"t_window", p.t_window},       {"gamma1", p.gamma1},
            {"gamma2", p.gamma2},     {"delay", p.click_delay},       {"proximity_threshold", p.proximity_threshold},
            {"slic_target", p.slic_target}, {"slic_compactness", p.slic_compactness}, {"bins", p.bins}};
}

inline void add_param_flags(CLI::App* cmd, Params& p)
{
    cmd->add_option("--alpha1", p.alpha1, "stage 1 unary weight")->capture_default_str();
    cmd->add_option("--alpha2", p.alpha2, "temporal unary weight")->capture_default_str();
    cmd->add_option("--beta1", p.beta1, "histogram similarity bandwidth")->capture_default_str();
    cmd->add_option("--t-window", p.t_window, "temporal half-window")->capture_default_str();
    cmd->add_option("--delay", p.click_delay, "frames clicks are shifted back by")->capture_default_str();
    cmd->add_option("--u-s", p.u_s, "unclicked regularizer")->capture_default_str();
    cmd->add_option("--gamma1", p.gamma1, "temporal cost, labels agree")->capture_default_str();
    cmd->add_option("--gamma2", p.gamma2, "temporal cost, labels disagree")->capture_default_str();
    cmd->add_option("--slic-target", p.slic_target, "superpixels per frame (0: pixels / 40)")->capture_default_str();
    cmd->add_option("--bins", p.bins, "histogram bins per channel")->capture_default_str();
}

/// One-record manifest in the click-log line format.
inline void write_manifest(const fs::path& path, const nlohmann::json& record)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw Error(Errc::write_error, "cannot write " + path.string());
    out << record.dump() << '\n';
    if (!out)
        throw Error(Errc::write_error, "cannot write " + path.string());
}

inline void write_eval_csv(const fs::path& path, const Prf& s, double p)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw Error(Errc::write_error, "cannot write " + path.string());
    out << std::setprecision(12) << "pr,rec,f1,pom\n" << s.pr << ',' << s.rec << ',' << s.f1 << ',' << p << '\n';
}

inline ClickerProfile profile_from_json(const nlohmann::json& j, ClickerProfile p = {})
{
    p.clicks_per_frame_rate = j.value("rate", p.clicks_per_frame_rate);
    p.spatial_sigma = j.value("sigma", p.spatial_sigma);
    p.reaction_delay = j.value("reaction_delay", p.reaction_delay);
    p.miss_rate = j.value("miss_rate", p.miss_rate);
    p.target_bias = j.value("target_bias", p.target_bias);
    p.preference_spread = j.value("preference_spread", p.preference_spread);
    p.seed = j.value("seed", p.seed);
    p.validate();
    return p;
}

inline AblationSpec sweep_from_json(const nlohmann::json& j, const ClickerProfile& profile, const Params& params)
{
    AblationSpec s;
    s.profile = j.contains("profile") ? profile_from_json(j["profile"], profile) : profile;
    s.params = params;
    s.playtime_fractions = j.value("playtime_fractions", s.playtime_fractions);
    s.users = j.value("users", s.users);
    s.delays = j.value("delays", s.delays);
    if (j.contains("quality_bands")) {
        s.quality_bands.clear();
        for (const auto& b : j["quality_bands"])
            s.quality_bands.emplace_back(b.at(0).get<double>(), b.at(1).get<double>());
    }
    s.seed = j.value("seed", s.seed);
    return s;
}

struct Paths {
    std::string frames, clicks, gt, output, manifest, csv, profile, sweep, stage1;
};

inline void require_exists(const std::string& path, const std::string& what)
{
    if (path.empty() || !fs::exists(path))
        throw CLI::ValidationError(what, "not found: " + path);
}

inline int cmd_segment(const Paths& paths, const Params& params, int jobs, std::ostream& out)
{
    require_exists(paths.frames, "--frames");
    require_exists(paths.clicks, "--clicks");
    const auto t0 = std::chrono::steady_clock::now();
    const FrameSequence seq = load_frame_sequence(paths.frames);
    const ClickLog log = read_click_log(paths.clicks);
    const auto t1 = std::chrono::steady_clock::now();
    PipelineOptions opt;
    opt.params = params;
    opt.jobs = jobs;
    const SegmentationResult r = segment_sequence(seq, log, opt);
    write_mask_sequence(r.masks, paths.output);
    if (!paths.stage1.empty())
        write_mask_sequence(r.stage1_masks, paths.stage1);
    const double load_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    const fs::path manifest = paths.manifest.empty() ? fs::path(paths.output) / "manifest.jsonl" : fs::path(paths.manifest);
    write_manifest(manifest, {{"command", "segment"},
                              {"params", params_json(params)},
                              {"jobs", jobs},
                              {"inputs",
                               {{"frames", {{"path", paths.frames}, {"fnv1a", digest(paths.frames)}}},
                                {"clicks", {{"path", paths.clicks}, {"fnv1a", digest(paths.clicks)}}}}},
                              {"frames", seq.size()},
                              {"clicks", log.size()},
                              {"timings_ms", {{"load", load_ms}, {"features", r.artifact_ms}, {"segment", r.window_ms}}}});
    if (log_level() >= 1)
        out << "segmented " << seq.size() << " frames into " << paths.output << '\n';
    return ok;
}

inline int cmd_eval(const Paths& paths, std::ostream& out)
{
    require_exists(paths.output, "--output");
    require_exists(paths.gt, "--gt");
    const MaskSequence a = read_mask_sequence(paths.output);
    const MaskSequence b = read_mask_sequence(paths.gt);
    const Prf s = prf(a, b);
    const double p = pom(a, b);
    out << std::fixed << std::setprecision(3) << "Pr=" << s.pr << " Rec=" << s.rec << " F1=" << s.f1 << " POM=" << p
        << '\n';
    if (!paths.csv.empty())
        write_eval_csv(paths.csv, s, p);
    return ok;
}

inline int cmd_simulate(const Paths& paths, ClickerProfile profile, const Params& params, const std::string& user,
                        const std::string& level, int jobs, std::ostream& out)
{
    require_exists(paths.gt, "--gt");
    if (!paths.profile.empty()) {
        require_exists(paths.profile, "--profile");
        profile = profile_from_json(nlohmann::json::parse(read_file(paths.profile)), profile);
    }
    profile.validate();
    const MaskSequence gt = read_mask_sequence(paths.gt);
    if (!paths.sweep.empty()) {
        require_exists(paths.sweep, "--sweep");
        require_exists(paths.frames, "--frames");
        if (paths.csv.empty())
            throw CLI::ValidationError("--csv", "a sweep needs --csv");
        const AblationSpec spec = sweep_from_json(nlohmann::json::parse(read_file(paths.sweep)), profile, params);
        const FrameSequence seq = load_frame_sequence(paths.frames);
        const auto rows = ablation_run(seq, {gt}, spec, jobs);
        std::ofstream csv(paths.csv, std::ios::trunc);
        if (!csv)
            throw Error(Errc::write_error, "cannot write " + paths.csv);
        write_ablation_csv(rows, csv);
        if (log_level() >= 1)
            out << rows.size() << " cells written to " << paths.csv << '\n';
        return ok;
    }
    if (paths.output.empty())
        throw CLI::ValidationError("--out", "an output log is required");
    const ClickLog log = simulate_clicks(gt, profile, user, level);
    write_click_log(paths.output, log);
    if (log_level() >= 1)
        out << log.size() << " clicks written to " << paths.output << '\n';
    return ok;
}

inline int cmd_bootstrap(const Paths& paths, double min_threshold, std::ostream& out)
{
    require_exists(paths.frames, "--frames");
    const FrameSequence seq = load_frame_sequence(paths.frames);
    const ScoreSegmentation seg = bootstrap_segmentation(seq, min_threshold);
    write_mask_sequence(seg.masks(), paths.output);
    if (log_level() >= 1)
        out << "bootstrap masks written to " << paths.output << '\n';
    return ok;
}

struct ServeOptions {
    std::string levels;
    std::string host = "127.0.0.1";
    int port = 8080;
};

inline int cmd_serve(const ServeOptions& so, ServiceConfig config, std::ostream& out)
{
    require_exists(so.levels, "--levels");
    GameService service(std::move(config));
    service.load_levels(so.levels);
    service.load_click_history();
    httplib::Server server;
    install_routes(server, service);
    out << "serving on http://" << so.host << ':' << so.port << '\n' << std::flush;
    if (!server.listen(so.host, so.port))
        throw Error(Errc::invalid_argument, "cannot listen on " + so.host + ":" + std::to_string(so.port));
    return ok;
}

/// Entry point; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"click-driven video object segmentation", "clickseg"};
    app.require_subcommand(1);
    Paths paths;
    Params params;
    int jobs = 0;
    ClickerProfile profile;
    std::string user = "sim0", level = "sim";
    double min_threshold = 10.0;
    ServeOptions serve;
    ServiceConfig service_config;

    auto* segment = app.add_subcommand("segment", "segment a frame sequence from a click log");
    segment->add_option("--frames", paths.frames, "frame directory")->required();
    segment->add_option("--clicks", paths.clicks, "click log")->required();
    segment->add_option("--out", paths.output, "mask output directory")->required();
    segment->add_option("--stage1-out", paths.stage1, "also write stage 1 masks here");
    segment->add_option("--manifest", paths.manifest, "manifest path (default <out>/manifest.jsonl)");
    segment->add_option("--jobs", jobs, "parallel frames (0: all cores)");
    add_param_flags(segment, params);

    auto* eval = app.add_subcommand("eval", "score masks against ground truth");
    eval->add_option("--output", paths.output, "segmentation directory")->required();
    eval->add_option("--gt", paths.gt, "ground-truth directory")->required();
    eval->add_option("--csv", paths.csv, "write scores as CSV");

    auto* simulate = app.add_subcommand("simulate", "simulate clickers on ground-truth masks");
    simulate->add_option("--gt", paths.gt, "ground-truth directory")->required();
    simulate->add_option("--out", paths.output, "click log to write");
    simulate->add_option("--profile", paths.profile, "clicker profile JSON");
    simulate->add_option("--rate", profile.clicks_per_frame_rate, "clicks per frame")->capture_default_str();
    simulate->add_option("--sigma", profile.spatial_sigma, "click jitter in pixels")->capture_default_str();
    simulate->add_option("--reaction-delay", profile.reaction_delay, "frames")->capture_default_str();
    simulate->add_option("--miss-rate", profile.miss_rate, "fraction of background clicks")->capture_default_str();
    simulate->add_option("--target-bias", profile.target_bias, "object area exponent")->capture_default_str();
    simulate->add_option("--preference-spread", profile.preference_spread, "per-object preference log-sd")
        ->capture_default_str();
    simulate->add_option("--seed", profile.seed, "random seed")->capture_default_str();
    simulate->add_option("--user", user, "user id")->capture_default_str();
    simulate->add_option("--level", level, "level id")->capture_default_str();
    simulate->add_option("--sweep", paths.sweep, "ablation sweep JSON");
    simulate->add_option("--frames", paths.frames, "frames for the sweep");
    simulate->add_option("--csv", paths.csv, "sweep results");
    simulate->add_option("--jobs", jobs, "parallel frames (0: all cores)");
    add_param_flags(simulate, params);

    auto* bootstrap = app.add_subcommand("bootstrap", "motion-based initial segmentation");
    bootstrap->add_option("--frames", paths.frames, "frame directory")->required();
    bootstrap->add_option("--out", paths.output, "mask output directory")->required();
    bootstrap->add_option("--min-threshold", min_threshold, "lowest difference threshold")->capture_default_str();

    auto* srv = app.add_subcommand("serve", "run the game service");
    srv->add_option("--levels", serve.levels, "levels directory (<id>/frames, optional <id>/segmentation)")
        ->required();
    srv->add_option("--host", serve.host)->capture_default_str();
    srv->add_option("--port", serve.port)->capture_default_str();
    srv->add_option("--click-log", service_config.click_log)->capture_default_str();
    srv->add_option("--static", service_config.static_dir, "webgame bundle");
    srv->add_option("--seed", service_config.seed, "level order seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return usage_error;
    }

    try {
        params.validate();
        service_config.params = params;
        if (*segment)
            return cmd_segment(paths, params, jobs, out);
        if (*eval)
            return cmd_eval(paths, out);
        if (*simulate)
            return cmd_simulate(paths, profile, params, user, level, jobs, out);
        if (*bootstrap)
            return cmd_bootstrap(paths, min_threshold, out);
        return cmd_serve(serve, service_config, out);
    } catch (const CLI::ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return usage_error;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return e.code() == Errc::invalid_argument ? usage_error : runtime_failure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return runtime_failure;
    }
}

} // namespace clickseg::cli
