#pragma once

// Segmentation metrics and a synthetic clicker that stands in for players.

#include <clickseg/error.hpp>
#include <clickseg/game.hpp>
#include <clickseg/media.hpp>
#include <clickseg/temporal.hpp>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace clickseg {

struct ConfusionTotals {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
};

struct Prf {
    double pr = 0.0;
    double rec = 0.0;
    double f1 = 0.0;
};

inline void check_aligned(const MaskSequence& a, const MaskSequence& b)
{
    if (a.size() != b.size())
        throw Error(Errc::shape_mismatch, "mask sequences differ in length");
    for (int i = 0; i < a.size(); ++i) {
        if (a[i].size() != b[i].size())
            throw Error(Errc::shape_mismatch, "mask " + std::to_string(i) + " differs in size");
    }
}

/// Pixel counts summed over all frames.
inline ConfusionTotals confusion(const MaskSequence& output, const MaskSequence& gt)
{
    check_aligned(output, gt);
    ConfusionTotals c;
    for (int i = 0; i < gt.size(); ++i) {
        const cv::Mat1b o = output[i] > 0;
        const cv::Mat1b g = gt[i] > 0;
        const std::int64_t inter = cv::countNonZero(o & g);
        c.tp += inter;
        c.fp += cv::countNonZero(o) - inter;
        c.fn += cv::countNonZero(g) - inter;
    }
    return c;
}

inline double safe_ratio(double num, double den)
{
    return den == 0.0 ? 0.0 : num / den;
}

inline Prf prf(const ConfusionTotals& c)
{
    Prf r;
    r.pr = safe_ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
    r.rec = safe_ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
    r.f1 = safe_ratio(2.0 * r.pr * r.rec, r.pr + r.rec);
    return r;
}

inline Prf prf(const MaskSequence& output, const MaskSequence& gt)
{
    return prf(confusion(output, gt));
}

/// Mean per-frame IoU. Frames where both masks are empty are skipped; if
/// every frame is skipped the result is 1.
inline double pom(const MaskSequence& output, const MaskSequence& gt)
{
    check_aligned(output, gt);
    double sum = 0.0;
    int counted = 0;
    for (int i = 0; i < gt.size(); ++i) {
        const cv::Mat1b o = output[i] > 0;
        const cv::Mat1b g = gt[i] > 0;
        const int uni = cv::countNonZero(o | g);
        if (uni == 0)
            continue;
        sum += static_cast<double>(cv::countNonZero(o & g)) / uni;
        ++counted;
    }
    return counted == 0 ? 1.0 : sum / counted;
}

struct ClickerProfile {
    double clicks_per_frame_rate = 1.0;
    double spatial_sigma = 0.0;
    int reaction_delay = 0;
    double miss_rate = 0.0;
    double target_bias = 0.0;       // exponent on object area
    double preference_spread = 0.0; // log-sd of the player's per-object preference
    std::uint64_t seed = 0;

    void validate() const
    {
        if (!(clicks_per_frame_rate >= 0) || !(spatial_sigma >= 0) || reaction_delay < 0 || !(target_bias >= 0) ||
            !(preference_spread >= 0))
            throw Error(Errc::invalid_argument, "clicker rates must be >= 0");
        if (!(miss_rate >= 0 && miss_rate <= 1))
            throw Error(Errc::invalid_argument, "miss_rate must lie in [0, 1]");
    }
};

namespace detail {

struct FrameObjects {
    std::vector<std::vector<cv::Point>> objects; // indexed by object identity
    std::vector<cv::Point> background;
};

inline FrameObjects frame_objects(const std::vector<MaskSequence>& objects, int t)
{
    FrameObjects f;
    const cv::Mat1b& first = objects.front()[t];
    cv::Mat1b any = cv::Mat1b::zeros(first.size());
    for (const auto& o : objects) {
        std::vector<cv::Point> pts;
        cv::findNonZero(o[t], pts);
        f.objects.push_back(std::move(pts));
        any |= o[t] > 0;
    }
    cv::findNonZero(any == 0, f.background);
    return f;
}

/// Splits a foreground mask sequence into connected components; identities
/// are per-frame component indices.
inline std::vector<MaskSequence> split_components(const MaskSequence& gt)
{
    std::vector<cv::Mat1i> labels(gt.size());
    int n_max = 0;
    for (int t = 0; t < gt.size(); ++t)
        n_max = std::max(n_max, cv::connectedComponents(gt[t] > 0, labels[t], 8, CV_32S) - 1);
    std::vector<MaskSequence> out(std::max(1, n_max));
    for (int i = 0; i < static_cast<int>(out.size()); ++i) {
        for (int t = 0; t < gt.size(); ++t)
            out[i].masks.push_back(labels[t] == i + 1);
    }
    return out;
}

} // namespace detail

/// Clicks of one simulated player on scenes with known object identities
/// (one mask sequence per object). Each player draws a fixed preference
/// for every object; random draws do not depend on the reaction delay, so
/// logs for different delays differ only by the shift.
inline ClickLog simulate_clicks(const std::vector<MaskSequence>& objects, const ClickerProfile& profile,
                                const std::string& user_id, const std::string& level_id)
{
    profile.validate();
    if (objects.empty() || objects.front().empty())
        throw Error(Errc::no_frames, "empty ground truth");
    const int n_frames = objects.front().size();
    for (const auto& o : objects) {
        if (o.size() != n_frames)
            throw Error(Errc::shape_mismatch, "object mask sequences differ in length");
    }
    const int w = objects.front()[0].cols;
    const int h = objects.front()[0].rows;
    std::mt19937_64 rng(profile.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> preference;
    for (std::size_t i = 0; i < objects.size(); ++i)
        preference.push_back(std::exp(profile.preference_spread * noise(rng)));

    ClickLog log;
    log.provenance = "simulated:" + user_id;
    for (int t = 0; t < n_frames; ++t) {
        int n = 0;
        if (profile.clicks_per_frame_rate > 0)
            n = std::poisson_distribution<int>(profile.clicks_per_frame_rate)(rng);
        if (n == 0)
            continue;
        const auto objs = detail::frame_objects(objects, t);
        std::vector<double> weights;
        double total = 0;
        for (std::size_t i = 0; i < objs.objects.size(); ++i) {
            const double area = static_cast<double>(objs.objects[i].size());
            weights.push_back(area > 0 ? std::pow(area, profile.target_bias) * preference[i] : 0.0);
            total += weights.back();
        }
        for (int k = 0; k < n; ++k) {
            const bool miss = unit(rng) < profile.miss_rate;
            const double pick = unit(rng);
            const double jitter = unit(rng);
            const double nx = noise(rng);
            const double ny = noise(rng);

            const std::vector<cv::Point>* pool = &objs.background;
            if ((!miss && total > 0) || objs.background.empty()) {
                std::size_t i = 0;
                double acc = weights[0] / total;
                while (i + 1 < weights.size() && (pick >= acc || weights[i] == 0))
                    acc += weights[++i] / total;
                pool = &objs.objects[i];
            }
            if (pool->empty())
                continue;
            const cv::Point target = (*pool)[std::min(pool->size() - 1, static_cast<std::size_t>(jitter * pool->size()))];
            const int x = std::clamp(static_cast<int>(std::lround(target.x + profile.spatial_sigma * nx)), 0, w - 1);
            const int y = std::clamp(static_cast<int>(std::lround(target.y + profile.spatial_sigma * ny)), 0, h - 1);
            const int frame = t + profile.reaction_delay;
            if (frame >= n_frames)
                continue;
            Click c;
            c.frame_index = frame;
            c.x = x;
            c.y = y;
            c.user_id = user_id;
            c.level_id = level_id;
            log.clicks.push_back(std::move(c));
        }
    }
    return log;
}

/// Same, with objects taken as the connected components of each frame.
inline ClickLog simulate_clicks(const MaskSequence& gt, const ClickerProfile& profile, const std::string& user_id,
                                const std::string& level_id)
{
    if (gt.empty())
        throw Error(Errc::no_frames, "empty ground truth");
    return simulate_clicks(detail::split_components(gt), profile, user_id, level_id);
}

/// Clicks drawn uniformly inside the ground truth, one per
/// `pixels_per_click` foreground pixels (rounded) in every frame.
inline ClickLog gt_point_clicks(const MaskSequence& gt, double pixels_per_click, std::uint64_t seed,
                                const std::string& level_id = "gt")
{
    if (!(pixels_per_click > 0))
        throw Error(Errc::invalid_argument, "pixels_per_click must be positive");
    std::mt19937_64 rng(seed);
    ClickLog log;
    log.provenance = "gt-points";
    for (int t = 0; t < gt.size(); ++t) {
        std::vector<cv::Point> fg;
        cv::findNonZero(gt[t], fg);
        const int n = static_cast<int>(std::lround(fg.size() / pixels_per_click));
        if (fg.empty())
            continue;
        std::uniform_int_distribution<std::size_t> pick(0, fg.size() - 1);
        for (int k = 0; k < n; ++k) {
            const cv::Point p = fg[pick(rng)];
            Click c;
            c.frame_index = t;
            c.x = p.x;
            c.y = p.y;
            c.user_id = "gt";
            c.level_id = level_id;
            log.clicks.push_back(std::move(c));
        }
    }
    return log;
}

inline MaskSequence union_masks(const std::vector<MaskSequence>& objects)
{
    if (objects.empty())
        throw Error(Errc::no_frames, "no object masks");
    MaskSequence out;
    for (const auto& m : objects.front().masks)
        out.masks.push_back(m.clone());
    for (std::size_t i = 1; i < objects.size(); ++i) {
        check_aligned(out, objects[i]);
        for (int t = 0; t < out.size(); ++t)
            out[t] |= objects[i][t];
    }
    return out;
}

inline ClickLog merge_logs(const std::vector<ClickLog>& logs)
{
    ClickLog out;
    for (const auto& l : logs)
        out.clicks.insert(out.clicks.end(), l.clicks.begin(), l.clicks.end());
    out.sort_by_frame_and_user();
    return out;
}

/// One cell of an ablation sweep.
struct AblationCell {
    double playtime_fraction = 1.0; // scales the total click budget
    int users = 1;                  // budget split evenly across users
    int delay = 2;                  // pipeline click delay
    double quality_min = 0.0;       // users whose hit rate is outside the band are dropped
    double quality_max = 1.0;

    std::string id() const
    {
        std::ostringstream s;
        s << "f" << playtime_fraction << "_u" << users << "_d" << delay << "_q" << quality_min << "-" << quality_max;
        return s.str();
    }
};

struct AblationSpec {
    ClickerProfile profile;          // per-frame rate is the total budget
    Params params;
    std::vector<double> playtime_fractions{1.0};
    std::vector<int> users{1};
    std::vector<int> delays{2};
    std::vector<std::pair<double, double>> quality_bands{{0.0, 1.0}};
    std::uint64_t seed = 0;

    std::vector<AblationCell> cells() const
    {
        std::vector<AblationCell> out;
        for (double f : playtime_fractions)
            for (int u : users)
                for (int d : delays)
                    for (const auto& [lo, hi] : quality_bands)
                        out.push_back({f, u, d, lo, hi});
        return out;
    }
};

struct AblationResult {
    std::string cell_id;
    Prf scores;
    double pom = 0.0;
    int n_clicks = 0;
    double wall_ms = 0.0;
};

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0)
{
    std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

/// Simulated log for a cell: `users` players sharing the budget, each with
/// its own seed and hence its own object preferences. Clicks are left
/// without a quality score.
inline ClickLog simulate_cell_clicks(const std::vector<MaskSequence>& objects, const ClickerProfile& base,
                                     const AblationCell& cell, std::uint64_t cell_seed,
                                     const std::string& level_id = "sim")
{
    if (cell.users < 1 || !(cell.playtime_fraction >= 0))
        throw Error(Errc::invalid_argument, "invalid ablation cell");
    const MaskSequence gt = union_masks(objects);
    const ScoreSegmentation truth(gt);
    std::vector<ClickLog> logs;
    for (int u = 0; u < cell.users; ++u) {
        ClickerProfile p = base;
        p.clicks_per_frame_rate = base.clicks_per_frame_rate * cell.playtime_fraction / cell.users;
        p.seed = derive_seed(cell_seed, static_cast<std::uint64_t>(u));
        const std::string user = "sim" + std::to_string(u);
        ClickLog log = simulate_clicks(objects, p, user, level_id);
        const double q = click_quality(log.clicks, truth);
        if (q < cell.quality_min || q > cell.quality_max)
            continue;
        logs.push_back(std::move(log));
    }
    return merge_logs(logs);
}

/// Every cell of the sweep on one sequence; features are computed once.
/// `objects` holds one mask sequence per object; pass a single union
/// sequence when identities are unknown.
inline std::vector<AblationResult> ablation_run(const FrameSequence& seq, const std::vector<MaskSequence>& objects,
                                                const AblationSpec& spec, int jobs = 0)
{
    if (objects.empty())
        throw Error(Errc::no_frames, "empty ground truth");
    const MaskSequence gt = union_masks(objects);
    const auto identities = objects.size() == 1 ? detail::split_components(objects.front()) : objects;
    if (gt.size() != seq.size())
        throw Error(Errc::shape_mismatch, "ground truth and frames differ in length");
    PipelineOptions opt;
    opt.params = spec.params;
    opt.jobs = jobs;
    const auto features = compute_features(seq, opt);
    std::vector<AblationResult> out;
    const auto cells = spec.cells();
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        const ClickLog log = simulate_cell_clicks(identities, spec.profile, cells[i], derive_seed(spec.seed, i));
        Params p = spec.params;
        p.click_delay = cells[i].delay;
        const auto seg = segment_features(features, log, p, jobs);
        AblationResult r;
        r.cell_id = cells[i].id();
        r.scores = prf(seg.masks, gt);
        r.pom = pom(seg.masks, gt);
        r.n_clicks = static_cast<int>(log.clicks.size());
        r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        out.push_back(std::move(r));
    }
    return out;
}

inline void write_ablation_csv(const std::vector<AblationResult>& rows, std::ostream& out)
{
    out << "cell_id, pr, rec, f1, pom, n_clicks, wall_ms\n";
    out << std::setprecision(6) << std::fixed;
    for (const auto& r : rows)
        out << r.cell_id << ", " << r.scores.pr << ", " << r.scores.rec << ", " << r.scores.f1 << ", " << r.pom
            << ", " << r.n_clicks << ", " << r.wall_ms << '\n';
}

} // namespace clickseg
