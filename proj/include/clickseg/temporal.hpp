#pragma once

// Stage 2: joint labeling of a 2T+1 frame window linked by optical flow;
// only the center frame's labels are emitted.

#include <clickseg/error.hpp>
#include <clickseg/flow.hpp>
#include <clickseg/media.hpp>
#include <clickseg/mrf.hpp>
#include <clickseg/parallel.hpp>
#include <clickseg/superclick.hpp>
#include <clickseg/superpix.hpp>

#include <algorithm>
#include <chrono>
#include <vector>

namespace clickseg {

/// Everything computed once per frame and shared by all windows.
struct FrameArtifacts {
    SuperpixelMap map;
    AdjacencyGraph adjacency;
    std::vector<Histogram> histograms;
    SuperclickLabeling stage1;
    TemporalLinks links_to_next; // empty for the last frame
};

struct PipelineOptions {
    Params params;
    FlowOptions flow;
    int jobs = 0; // 0 = all cores
};

/// Superpixels, histograms and forward links; independent of the clicks,
/// so one set can serve many click logs.
inline std::vector<FrameArtifacts> compute_features(const FrameSequence& seq, const PipelineOptions& opt)
{
    opt.params.validate();
    if (seq.empty())
        throw Error(Errc::no_frames, "empty frame sequence");
    std::vector<FrameArtifacts> out(seq.size());
    const Params& p = opt.params;
    parallel_for(seq.size(), opt.jobs, [&](int t) {
        FrameArtifacts& a = out[t];
        a.map = slic_segment(seq[t], SlicOptions{p.slic_target, p.slic_compactness, 10});
        a.adjacency = build_adjacency(a.map);
        a.histograms = rgb_histograms(seq[t], a.map, p.bins);
    });
    parallel_for(seq.size() - 1, opt.jobs, [&](int t) {
        const FlowField flow = estimate_flow(seq[t], seq[t + 1], opt.flow);
        out[t].links_to_next = temporal_links(out[t].map, out[t + 1].map, flow);
    });
    return out;
}

/// Stage-1 labels for every frame. Clicks are shifted by params.click_delay
/// first.
inline void label_stage1(std::vector<FrameArtifacts>& artifacts, const ClickLog& log, const Params& params,
                         int jobs = 0)
{
    params.validate();
    const int n = static_cast<int>(artifacts.size());
    if (n == 0)
        throw Error(Errc::no_frames, "empty frame sequence");
    const int w = artifacts[0].map.width();
    const int h = artifacts[0].map.height();
    const ClickLog shifted = shift_clicks(log, params.click_delay);
    for (const auto& c : shifted.clicks) {
        if (c.frame_index < n && (c.x < 0 || c.y < 0 || c.x >= w || c.y >= h))
            throw Error(Errc::range_error, "click outside the frame bounds");
    }
    const auto by_frame = clicks_by_frame(shifted, n);
    parallel_for(n, jobs, [&](int t) {
        FrameArtifacts& a = artifacts[t];
        a.stage1 = extract_superclicks(a.map, a.adjacency, a.histograms, by_frame[t], params);
    });
}

inline std::vector<FrameArtifacts> compute_artifacts(const FrameSequence& seq, const ClickLog& log,
                                                     const PipelineOptions& opt)
{
    auto out = compute_features(seq, opt);
    label_stage1(out, log, opt.params, opt.jobs);
    return out;
}

/// Frames [first, last] around `center`, truncated at the sequence ends.
/// Node (tau, s) maps to offset(tau) + s.
struct WindowProblem {
    const std::vector<FrameArtifacts>* artifacts = nullptr;
    int center = 0;
    int first = 0;
    int last = 0;
    std::vector<int> offsets; // one per frame in the window, plus the total

    int n_frames() const { return last - first + 1; }
    int n_nodes() const { return offsets.back(); }
    int node(int tau, int s) const { return offsets[tau - first] + s; }
    const FrameArtifacts& frame(int tau) const { return (*artifacts)[tau]; }
};

inline WindowProblem make_window(const std::vector<FrameArtifacts>& artifacts, int center, int t_window)
{
    if (artifacts.empty() || center < 0 || center >= static_cast<int>(artifacts.size()))
        throw Error(Errc::invalid_argument, "window center out of range");
    WindowProblem w;
    w.artifacts = &artifacts;
    w.center = center;
    w.first = std::max(0, center - t_window);
    w.last = std::min(static_cast<int>(artifacts.size()) - 1, center + t_window);
    w.offsets.push_back(0);
    for (int tau = w.first; tau <= w.last; ++tau) {
        const auto& a = artifacts[tau];
        if (a.stage1.size() != a.map.size())
            throw Error(Errc::shape_mismatch, "stage-1 labels missing for a window frame");
        w.offsets.push_back(w.offsets.back() + a.map.size());
    }
    return w;
}

/// gamma1 when the label agrees with the stage-1 label, gamma2 otherwise.
inline double w1_cost(int label, int stage1_label, const Params& params)
{
    return label == stage1_label ? params.gamma1 : params.gamma2;
}

inline EnergyProblem build_e2(const WindowProblem& window, const Params& params)
{
    EnergyProblem problem;
    problem.unary.reserve(window.n_nodes());
    for (int tau = window.first; tau <= window.last; ++tau) {
        const auto& a = window.frame(tau);
        for (int s = 0; s < a.map.size(); ++s) {
            const int l = a.stage1.labels[s];
            problem.add_node(params.alpha2 * w1_cost(0, l, params), params.alpha2 * w1_cost(1, l, params));
        }
    }
    for (int tau = window.first; tau <= window.last; ++tau) {
        const auto& a = window.frame(tau);
        for (const auto& [s1, s2] : a.adjacency.edges())
            problem.add_edge(window.node(tau, s1), window.node(tau, s2),
                             similarity_weight(a.histograms[s1], a.histograms[s2], params.beta1));
    }
    for (int tau = window.first; tau < window.last; ++tau) {
        const auto& a = window.frame(tau);
        const auto& b = window.frame(tau + 1);
        for (const auto& [s1, s2] : a.links_to_next.pairs)
            problem.add_edge(window.node(tau, s1), window.node(tau + 1, s2),
                             similarity_weight(a.histograms[s1], b.histograms[s2], params.beta1));
    }
    return problem;
}

/// Center-frame superpixel labels after minimizing the window energy.
inline Labeling smooth_window(const WindowProblem& window, const Params& params)
{
    const auto result = minimize(build_e2(window, params));
    const int off = window.node(window.center, 0);
    const int n = window.frame(window.center).map.size();
    return Labeling(result.labeling.begin() + off, result.labeling.begin() + off + n);
}

struct SegmentationResult {
    MaskSequence masks;
    MaskSequence stage1_masks;
    double artifact_ms = 0.0;
    double window_ms = 0.0;
};

/// Runs both stages on precomputed features; `features` is not modified.
inline SegmentationResult segment_features(const std::vector<FrameArtifacts>& features, const ClickLog& log,
                                           const Params& params, int jobs = 0)
{
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    std::vector<FrameArtifacts> artifacts = features;
    label_stage1(artifacts, log, params, jobs);
    const int n = static_cast<int>(artifacts.size());
    SegmentationResult r;
    r.masks.masks.resize(n);
    r.stage1_masks.masks.resize(n);
    parallel_for(n, jobs, [&](int t) {
        const auto window = make_window(artifacts, t, params.t_window);
        r.masks[t] = render_labels(artifacts[t].map, smooth_window(window, params));
        r.stage1_masks[t] = render_labels(artifacts[t].map, artifacts[t].stage1.labels);
    });
    r.window_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    return r;
}

inline SegmentationResult segment_sequence(const FrameSequence& seq, const ClickLog& log, const PipelineOptions& opt)
{
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    const auto features = compute_features(seq, opt);
    const auto t1 = clock::now();
    SegmentationResult r = segment_features(features, log, opt.params, opt.jobs);
    r.artifact_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    return r;
}

/// Final per-frame masks (stage 1 followed by temporal smoothing).
inline MaskSequence smooth_segment(const FrameSequence& seq, const ClickLog& log, const Params& params)
{
    PipelineOptions opt;
    opt.params = params;
    return segment_sequence(seq, log, opt).masks;
}

} // namespace clickseg
