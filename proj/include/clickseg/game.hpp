#pragma once

// Game mechanics: points, penalties, levels, hit classification, click
// quality, inhibition-of-return maps and the motion-based bootstrap.

#include <clickseg/error.hpp>
#include <clickseg/media.hpp>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace clickseg {

inline constexpr int level_duration_s = 30;
inline constexpr int far_miss_distance = 200;
inline constexpr int run_region_half = 15; // 30x30 box around the anchor
inline constexpr double ior_sigma = 25.0;

inline std::int64_t required_points(int level_index)
{
    if (level_index < 1)
        throw Error(Errc::invalid_argument, "level index starts at 1");
    return 4000 + 2000 * static_cast<std::int64_t>(level_index - 1);
}

/// P+ for a hit on an object of `area` pixels after t_plus consecutive hits
/// in the same region; never negative.
inline std::int64_t award_points(std::int64_t area, int t_plus)
{
    if (area <= 0 || t_plus < 0)
        throw Error(Errc::invalid_argument, "award_points needs area > 0 and t_plus >= 0");
    const double p = (static_cast<double>(area) / 20.0) * (1.0 - t_plus / 10.0);
    return std::max<std::int64_t>(0, std::llround(p));
}

inline std::int64_t penalty(int t_minus)
{
    if (t_minus < 1)
        throw Error(Errc::invalid_argument, "penalty needs t_minus >= 1");
    return 20 * static_cast<std::int64_t>(t_minus);
}

struct GameLevel {
    std::string level_id;
    std::shared_ptr<const FrameSequence> frames;
    int level_index = 1;
    int duration_s = level_duration_s;

    std::int64_t required() const { return required_points(level_index); }
};

/// Foreground masks with connected components and a distance map per frame.
class ScoreSegmentation {
public:
    ScoreSegmentation() = default;

    explicit ScoreSegmentation(MaskSequence masks) : masks_(std::move(masks))
    {
        for (const auto& m : masks_.masks) {
            Frame f;
            cv::Mat stats, centroids;
            const cv::Mat1b fg = m > 0;
            const int n = cv::connectedComponentsWithStats(fg, f.components, stats, centroids, 8, CV_32S);
            f.areas.assign(n, 0);
            for (int i = 1; i < n; ++i)
                f.areas[i] = stats.at<int>(i, cv::CC_STAT_AREA);
            f.empty = cv::countNonZero(fg) == 0;
            if (!f.empty) {
                const cv::Mat1b bg = m == 0;
                cv::distanceTransform(bg, f.distance, cv::DIST_L2, cv::DIST_MASK_PRECISE, CV_32F);
            }
            frames_.push_back(std::move(f));
        }
    }

    int size() const { return static_cast<int>(frames_.size()); }
    int width() const { return masks_.empty() ? 0 : masks_[0].cols; }
    int height() const { return masks_.empty() ? 0 : masks_[0].rows; }
    const MaskSequence& masks() const { return masks_; }
    const cv::Mat1b& mask(int frame) const { return masks_[frame]; }

    /// 0 for background, else the component's 1-based id.
    int component_at(int frame, int x, int y) const { return frames_.at(frame).components(y, x); }
    int component_area(int frame, int component) const { return frames_.at(frame).areas.at(component); }

    /// Per component, excluding the background entry.
    std::vector<int> component_areas(int frame) const
    {
        const auto& a = frames_.at(frame).areas;
        return a.empty() ? std::vector<int>{} : std::vector<int>(a.begin() + 1, a.end());
    }

    /// Euclidean distance to the nearest foreground pixel; infinity for an
    /// empty frame.
    double distance_to_foreground(int frame, int x, int y) const
    {
        const auto& f = frames_.at(frame);
        if (f.empty)
            return std::numeric_limits<double>::infinity();
        return f.distance(y, x);
    }

private:
    struct Frame {
        cv::Mat1i components;
        std::vector<int> areas;
        cv::Mat1f distance;
        bool empty = true;
    };
    MaskSequence masks_;
    std::vector<Frame> frames_;
};

enum class HitKind { hit, near_miss, far_miss };

struct ClickOutcome {
    HitKind kind = HitKind::far_miss;
    int component = 0;
    std::int64_t area = 0;
};

inline ClickOutcome classify_click(const Click& c, const ScoreSegmentation& seg)
{
    if (c.frame_index < 0 || c.frame_index >= seg.size() || c.x < 0 || c.y < 0 || c.x >= seg.width() ||
        c.y >= seg.height())
        throw Error(Errc::range_error, "click outside the score segmentation");
    const int comp = seg.component_at(c.frame_index, c.x, c.y);
    if (comp > 0)
        return {HitKind::hit, comp, seg.component_area(c.frame_index, comp)};
    if (seg.distance_to_foreground(c.frame_index, c.x, c.y) > far_miss_distance)
        return {HitKind::far_miss, 0, 0};
    return {HitKind::near_miss, 0, 0};
}

struct SessionState {
    std::string user_id;
    std::int64_t score = 0;
    int t_plus = 0;
    cv::Point anchor{0, 0};
    int t_minus = 0;
    int clicks = 0;
    int hits = 0;

    friend bool operator==(const SessionState&, const SessionState&) = default;
};

struct ClickResult {
    SessionState state;
    std::int64_t delta = 0;
    ClickOutcome outcome;
};

inline bool in_run_region(cv::Point anchor, int x, int y)
{
    return std::abs(x - anchor.x) <= run_region_half && std::abs(y - anchor.y) <= run_region_half;
}

inline ClickResult apply_click(const SessionState& state, const Click& c, const ScoreSegmentation& seg)
{
    ClickResult r{state, 0, classify_click(c, seg)};
    SessionState& s = r.state;
    ++s.clicks;
    switch (r.outcome.kind) {
    case HitKind::hit:
        ++s.hits;
        if (s.t_plus == 0 || !in_run_region(s.anchor, c.x, c.y)) {
            s.t_plus = 0;
            s.anchor = {c.x, c.y};
        }
        r.delta = award_points(r.outcome.area, s.t_plus);
        ++s.t_plus;
        s.t_minus = 0;
        break;
    case HitKind::far_miss:
        ++s.t_minus;
        r.delta = -penalty(s.t_minus);
        s.t_plus = 0;
        break;
    case HitKind::near_miss:
        s.t_minus = 0;
        break;
    }
    s.score += r.delta;
    return r;
}

/// Fraction of clicks that hit; 1 for an empty list.
inline double click_quality(std::span<const Click> clicks, const ScoreSegmentation& seg)
{
    if (clicks.empty())
        return 1.0;
    int hits = 0;
    for (const auto& c : clicks)
        hits += classify_click(c, seg).kind == HitKind::hit;
    return static_cast<double>(hits) / static_cast<double>(clicks.size());
}

/// Recomputes and stamps the quality of one user's clicks in one level.
inline double restamp_quality(ClickLog& log, const std::string& user, const std::string& level,
                              const ScoreSegmentation& seg)
{
    std::vector<Click> mine;
    for (const auto& c : log.clicks) {
        if (c.user_id == user && c.level_id == level)
            mine.push_back(c);
    }
    const double q = click_quality(mine, seg);
    stamp_quality(log, user, level, q);
    return q;
}

/// Unnormalized sum of isotropic Gaussians centered on the frame's clicks.
inline cv::Mat1d ior_density(std::span<const Click> clicks, int frame_index, int width, int height,
                             double sigma = ior_sigma)
{
    cv::Mat1d density = cv::Mat1d::zeros(height, width);
    std::map<std::pair<int, int>, int> counts;
    for (const auto& c : clicks) {
        if (c.frame_index == frame_index)
            ++counts[{c.x, c.y}];
    }
    std::vector<double> gx(width), gy(height);
    const double k = -0.5 / (sigma * sigma);
    for (const auto& [p, n] : counts) {
        for (int x = 0; x < width; ++x)
            gx[x] = std::exp(k * (x - p.first) * (x - p.first));
        for (int y = 0; y < height; ++y)
            gy[y] = n * std::exp(k * (y - p.second) * (y - p.second));
        for (int y = 0; y < height; ++y) {
            double* row = density.ptr<double>(y);
            for (int x = 0; x < width; ++x)
                row[x] += gy[y] * gx[x];
        }
    }
    return density;
}

/// Density normalized by its maximum; all zero without clicks.
inline cv::Mat1d ior_blur_map(std::span<const Click> clicks, int frame_index, int width, int height)
{
    cv::Mat1d d = ior_density(clicks, frame_index, width, height);
    double max_v = 0;
    cv::minMaxLoc(d, nullptr, &max_v);
    if (max_v > 0)
        d /= max_v;
    return d;
}

namespace detail {

inline cv::Mat1b abs_diff_gray(const cv::Mat3b& a, const cv::Mat3b& b)
{
    cv::Mat diff, gray;
    cv::absdiff(a, b, diff);
    cv::cvtColor(diff, gray, cv::COLOR_BGR2GRAY);
    return gray;
}

inline cv::Mat1b otsu_foreground(const cv::Mat1b& diff, double min_threshold)
{
    cv::Mat1b fg;
    const double t = cv::threshold(diff, fg, 0, 255, cv::THRESH_BINARY | cv::THRESH_OTSU);
    if (t < min_threshold)
        cv::threshold(diff, fg, min_threshold, 255, cv::THRESH_BINARY);
    return fg;
}

} // namespace detail

/// Per-channel temporal median (lower median for even counts).
inline cv::Mat3b median_background(const FrameSequence& seq)
{
    const int n = seq.size();
    cv::Mat3b bg(seq.height(), seq.width());
    std::vector<unsigned char> buf(n);
    for (int y = 0; y < bg.rows; ++y) {
        for (int x = 0; x < bg.cols; ++x) {
            for (int c = 0; c < 3; ++c) {
                for (int t = 0; t < n; ++t)
                    buf[t] = seq[t](y, x)[c];
                std::nth_element(buf.begin(), buf.begin() + (n - 1) / 2, buf.end());
                bg(y, x)[c] = buf[(n - 1) / 2];
            }
        }
    }
    return bg;
}

/// Moving foreground: difference to the temporal median background,
/// Otsu threshold (never below min_threshold) and a 3x3 closing.
inline ScoreSegmentation bootstrap_segmentation(const FrameSequence& seq, double min_threshold = 10.0)
{
    if (seq.size() < 2)
        throw Error(Errc::need_more_frames, "bootstrap needs at least two frames");
    const cv::Mat3b bg = median_background(seq);
    const cv::Mat kernel = cv::getStructuringElement(cv::MORPH_RECT, cv::Size(3, 3));
    MaskSequence masks;
    masks.masks.resize(seq.size());
    for (int t = 0; t < seq.size(); ++t) {
        cv::Mat1b fg = detail::otsu_foreground(detail::abs_diff_gray(seq[t], bg), min_threshold);
        cv::morphologyEx(fg, fg, cv::MORPH_CLOSE, kernel, cv::Point(-1, -1), 1, cv::BORDER_CONSTANT, cv::Scalar(0));
        masks[t] = fg;
    }
    return ScoreSegmentation(std::move(masks));
}

} // namespace clickseg
