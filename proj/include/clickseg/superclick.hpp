#pragma once

// Stage 1: per-frame superclick extraction from noisy, quality-weighted clicks.

#include <clickseg/error.hpp>
#include <clickseg/media.hpp>
#include <clickseg/mrf.hpp>
#include <clickseg/superpix.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace clickseg {

struct Params {
    double alpha1 = 0.25;      // E1 unary weight
    double alpha2 = 0.2;       // E2 unary weight
    double beta1 = 5.0;        // bandwidth of the histogram similarity
    double u_s = 0.4;          // unclicked regularizer
    int t_window = 2;          // temporal half-window T
    double gamma1 = 0.1;       // W1 cost when labels agree
    double gamma2 = 0.9;       // W1 cost when labels disagree
    int click_delay = 2;       // frames clicks are shifted back by
    double proximity_threshold = 0.5;
    int slic_target = 0;       // 0: pixel_count / 40
    double slic_compactness = 10.0;
    int bins = 8;              // histogram bins per channel

    void validate() const
    {
        if (!(alpha1 > 0) || !(alpha2 > 0) || !(beta1 > 0))
            throw Error(Errc::invalid_argument, "alpha1, alpha2 and beta1 must be positive");
        if (!(u_s >= 0 && u_s < 1))
            throw Error(Errc::invalid_argument, "u_s must lie in [0, 1)");
        if (!(gamma1 < gamma2) || gamma1 < 0)
            throw Error(Errc::invalid_argument, "need 0 <= gamma1 < gamma2");
        if (click_delay < 0 || t_window < 0)
            throw Error(Errc::invalid_argument, "click_delay and t_window must be >= 0");
        if (slic_target < 0 || !(slic_compactness > 0) || bins < 1)
            throw Error(Errc::invalid_argument, "invalid superpixel settings");
    }
};

inline constexpr double probability_epsilon = 1e-6;

struct SuperclickLabeling {
    Labeling labels;             // 1 = superclick
    std::vector<double> clickedness;
    std::vector<double> proximity;
    std::vector<double> p1;      // P(l_s = 1) before clamping

    int size() const { return static_cast<int>(labels.size()); }
};

/// Moves clicks `delay` frames earlier; clicks that would land before frame
/// 0 are dropped.
inline ClickLog shift_clicks(const ClickLog& log, int delay)
{
    if (delay < 0)
        throw Error(Errc::invalid_argument, "delay must be >= 0");
    ClickLog out;
    out.provenance = log.provenance;
    out.clicks.reserve(log.clicks.size());
    for (const auto& c : log.clicks) {
        if (c.frame_index - delay < 0)
            continue;
        Click s = c;
        s.frame_index -= delay;
        out.clicks.push_back(std::move(s));
    }
    return out;
}

/// Clicks bucketed by frame index; clicks past the last frame are ignored.
inline std::vector<std::vector<Click>> clicks_by_frame(const ClickLog& log, int n_frames)
{
    std::vector<std::vector<Click>> out(std::max(0, n_frames));
    for (const auto& c : log.clicks) {
        if (c.frame_index >= 0 && c.frame_index < n_frames)
            out[c.frame_index].push_back(c);
    }
    return out;
}

/// K_s: quality-weighted click count of s over the largest raw count of any
/// superpixel in the frame. All zero when the frame has no clicks.
inline std::vector<double> clickedness(const SuperpixelMap& map, std::span<const Click> clicks)
{
    std::vector<double> weighted(map.size(), 0.0);
    std::vector<int> count(map.size(), 0);
    for (const auto& c : clicks) {
        if (c.x < 0 || c.y < 0 || c.x >= map.width() || c.y >= map.height())
            throw Error(Errc::range_error, "click outside the frame");
        const int s = map.at(c.x, c.y);
        weighted[s] += c.quality();
        ++count[s];
    }
    const int max_count = count.empty() ? 0 : *std::max_element(count.begin(), count.end());
    if (max_count == 0)
        return std::vector<double>(map.size(), 0.0);
    for (double& k : weighted)
        k /= max_count;
    return weighted;
}

/// V_s: fraction of neighbors whose clickedness exceeds the threshold.
inline std::vector<double> proximity(std::span<const double> k, const AdjacencyGraph& adj, double threshold = 0.5)
{
    if (static_cast<int>(k.size()) != adj.size())
        throw Error(Errc::shape_mismatch, "clickedness and adjacency sizes differ");
    std::vector<double> v(k.size(), 0.0);
    for (int s = 0; s < adj.size(); ++s) {
        const auto& nb = adj.neighbors[s];
        if (nb.empty())
            continue;
        const auto hot = std::count_if(nb.begin(), nb.end(), [&](int n) { return k[n] > threshold; });
        v[s] = static_cast<double>(hot) / static_cast<double>(nb.size());
    }
    return v;
}

struct SuperclickProbability {
    double p1 = 0.0;
    double p0 = 0.0;
};

/// P1 = min(K + V + U, 1), clamped into [eps, 1 - eps] so that its negative
/// log stays finite; P0 = 1 - P1.
inline SuperclickProbability superclick_probability(double k, double v, double u_s)
{
    double p1 = std::min(k + v + u_s, 1.0);
    p1 = std::clamp(p1, probability_epsilon, 1.0 - probability_epsilon);
    return {p1, 1.0 - p1};
}

inline double similarity_weight(const Histogram& a, const Histogram& b, double beta1)
{
    return std::exp(-beta1 * chi_square(a, b));
}

/// Stage-1 energy from precomputed histograms.
inline EnergyProblem build_e1(const SuperpixelMap& map, const AdjacencyGraph& adj, const std::vector<Histogram>& hist,
                              std::span<const Click> clicks, const Params& params,
                              SuperclickLabeling* diagnostics = nullptr)
{
    if (adj.size() != map.size() || static_cast<int>(hist.size()) != map.size())
        throw Error(Errc::shape_mismatch, "map, adjacency and histograms disagree");
    const auto k = clickedness(map, clicks);
    const auto v = proximity(k, adj, params.proximity_threshold);

    EnergyProblem problem;
    problem.unary.reserve(map.size());
    std::vector<double> p1_raw(map.size());
    for (int s = 0; s < map.size(); ++s) {
        p1_raw[s] = std::min(k[s] + v[s] + params.u_s, 1.0);
        const auto p = superclick_probability(k[s], v[s], params.u_s);
        problem.add_node(params.alpha1 * -std::log(p.p0), params.alpha1 * -std::log(p.p1));
    }
    for (const auto& [a, b] : adj.edges())
        problem.add_edge(a, b, similarity_weight(hist[a], hist[b], params.beta1));

    if (diagnostics) {
        diagnostics->clickedness = k;
        diagnostics->proximity = v;
        diagnostics->p1 = std::move(p1_raw);
    }
    return problem;
}

inline EnergyProblem build_e1(const cv::Mat3b& frame, const SuperpixelMap& map, const AdjacencyGraph& adj,
                              std::span<const Click> clicks, const Params& params)
{
    if (frame.size() != map.labels.size())
        throw Error(Errc::dimension_mismatch, "frame and superpixel map differ in size");
    return build_e1(map, adj, rgb_histograms(frame, map, params.bins), clicks, params);
}

inline SuperclickLabeling extract_superclicks(const SuperpixelMap& map, const AdjacencyGraph& adj,
                                              const std::vector<Histogram>& hist, std::span<const Click> clicks,
                                              const Params& params)
{
    SuperclickLabeling out;
    const auto problem = build_e1(map, adj, hist, clicks, params, &out);
    out.labels = minimize(problem).labeling;
    return out;
}

inline SuperclickLabeling extract_superclicks(const cv::Mat3b& frame, const SuperpixelMap& map,
                                              const AdjacencyGraph& adj, std::span<const Click> clicks,
                                              const Params& params)
{
    if (frame.size() != map.labels.size())
        throw Error(Errc::dimension_mismatch, "frame and superpixel map differ in size");
    return extract_superclicks(map, adj, rgb_histograms(frame, map, params.bins), clicks, params);
}

/// Foreground = every pixel of a label-1 superpixel.
inline cv::Mat1b render_labels(const SuperpixelMap& map, std::span<const std::uint8_t> labels)
{
    if (static_cast<int>(labels.size()) != map.size())
        throw Error(Errc::shape_mismatch, "label count does not match superpixel count");
    cv::Mat1b mask(map.labels.size());
    for (int y = 0; y < mask.rows; ++y) {
        const int* l = map.labels.ptr<int>(y);
        unsigned char* m = mask.ptr<unsigned char>(y);
        for (int x = 0; x < mask.cols; ++x)
            m[x] = labels[l[x]] ? 255 : 0;
    }
    return mask;
}

/// Debug CSV: superpixel id, K_s, V_s, P_{s,1}, label.
inline void write_superclick_csv(const SuperclickLabeling& s, const std::string& path)
{
    std::ofstream out(path);
    if (!out)
        throw Error(Errc::write_error, "cannot open " + path);
    out << "superpixel,k,v,p1,label\n";
    for (int i = 0; i < s.size(); ++i)
        out << i << ',' << s.clickedness[i] << ',' << s.proximity[i] << ',' << s.p1[i] << ','
            << int(s.labels[i]) << '\n';
}

} // namespace clickseg
