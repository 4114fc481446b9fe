#include <clickseg/temporal.hpp>

#include "support/images.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace clickseg;
using clickseg::testing::brute_force_center;
using clickseg::testing::brute_force_minimum;
using clickseg::testing::grid_labels;

namespace {

Click click_at(int frame, int x, int y)
{
    Click c;
    c.frame_index = frame;
    c.x = x;
    c.y = y;
    c.user_id = "u";
    c.level_id = "l";
    return c;
}

// Artifacts for a frame tiled as a gx x gy grid, with given stage-1 labels.
FrameArtifacts grid_artifacts(const cv::Mat3b& frame, int gx, int gy, Labeling stage1, const Params& p)
{
    FrameArtifacts a;
    a.map = superpixel_map_from_labels(grid_labels(frame.cols, frame.rows, gx, gy));
    a.adjacency = build_adjacency(a.map);
    a.histograms = rgb_histograms(frame, a.map, p.bins);
    a.stage1.labels = std::move(stage1);
    return a;
}

FrameSequence static_square_sequence(int n)
{
    cv::Mat3b frame(64, 80, cv::Vec3b(40, 40, 40));
    frame(cv::Rect(32, 24, 16, 16)).setTo(cv::Vec3b(20, 60, 220));
    return FrameSequence(std::vector<cv::Mat3b>(n, frame));
}

cv::Mat1b square_superpixels(const SuperpixelMap& map)
{
    std::vector<int> inside(map.size(), 0);
    for (int y = 24; y < 40; ++y)
        for (int x = 32; x < 48; ++x)
            ++inside[map.at(x, y)];
    Labeling l(map.size(), 0);
    for (int s = 0; s < map.size(); ++s)
        l[s] = 2 * inside[s] > map.superpixels[s].pixel_count;
    return render_labels(map, l);
}

} // namespace

TEST(W1Cost, AgreementIsCheaper)
{
    Params p;
    EXPECT_DOUBLE_EQ(w1_cost(1, 1, p), 0.1);
    EXPECT_DOUBLE_EQ(w1_cost(0, 1, p), 0.9);
    EXPECT_DOUBLE_EQ(w1_cost(0, 0, p), 0.1);
    EXPECT_DOUBLE_EQ(w1_cost(1, 0, p), 0.9);
}

TEST(BuildE2, SingleFrameWindowHasOnlyIntraFrameTerms)
{
    Params p;
    p.t_window = 0;
    std::vector<FrameArtifacts> a{grid_artifacts(clickseg::testing::textured_image(20, 10, 1), 2, 1, {1, 0}, p)};
    const auto e = build_e2(make_window(a, 0, 0), p);
    ASSERT_EQ(e.n_nodes(), 2);
    EXPECT_DOUBLE_EQ(e.unary[0].label0, 0.2 * 0.9);
    EXPECT_DOUBLE_EQ(e.unary[0].label1, 0.2 * 0.1);
    EXPECT_DOUBLE_EQ(e.unary[1].label0, 0.2 * 0.1);
    EXPECT_DOUBLE_EQ(e.unary[1].label1, 0.2 * 0.9);
    EXPECT_EQ(e.pairwise.size(), 1u);
}

TEST(BuildE2, AllOnesStayOnes)
{
    Params p;
    const auto f0 = clickseg::testing::textured_image(30, 10, 2);
    const auto f1 = clickseg::testing::textured_image(30, 10, 3);
    std::vector<FrameArtifacts> a{grid_artifacts(f0, 3, 1, {1, 1, 1}, p), grid_artifacts(f1, 3, 1, {1, 1, 1}, p)};
    a[0].links_to_next.pairs = {{0, 0}, {0, 1}, {1, 1}, {2, 2}};
    const auto w = make_window(a, 0, 1);
    const auto e = build_e2(w, p);
    EXPECT_EQ(e.n_nodes(), 6);
    EXPECT_EQ(brute_force_minimum(e).labeling, Labeling(6, 1));
    EXPECT_EQ(smooth_window(w, p), Labeling(3, 1));
}

TEST(BuildE2, IdenticalLinkedSuperpixelsAgree)
{
    Params p;
    const auto f = clickseg::testing::uniform_image(10, 10, {10, 200, 90});
    std::vector<FrameArtifacts> a{grid_artifacts(f, 1, 1, {1}, p), grid_artifacts(f, 1, 1, {0}, p)};
    a[0].links_to_next.pairs = {{0, 0}};
    const auto e = build_e2(make_window(a, 0, 1), p);
    ASSERT_EQ(e.pairwise.size(), 1u);
    EXPECT_DOUBLE_EQ(e.pairwise[0].weight, 1.0);
    ASSERT_LT(p.alpha2 * (p.gamma2 - p.gamma1), 1.0);
    const auto m = brute_force_minimum(e);
    EXPECT_EQ(m.labeling[0], m.labeling[1]);
    EXPECT_EQ(minimize(e).labeling, m.labeling);
}

TEST(MakeWindow, TruncatesAtSequenceEnds)
{
    Params p;
    const auto f = clickseg::testing::textured_image(20, 20, 5);
    std::vector<FrameArtifacts> a(5, grid_artifacts(f, 2, 2, Labeling(4, 0), p));
    const auto w0 = make_window(a, 0, 2);
    EXPECT_EQ(w0.first, 0);
    EXPECT_EQ(w0.last, 2);
    EXPECT_EQ(w0.n_nodes(), 12);
    const auto w4 = make_window(a, 4, 2);
    EXPECT_EQ(w4.first, 2);
    EXPECT_EQ(w4.last, 4);
    EXPECT_EQ(w4.node(3, 1), 5);
    EXPECT_THROW(make_window(a, 5, 2), Error);
}

TEST(MakeWindow, MissingStage1Rejected)
{
    Params p;
    const auto f = clickseg::testing::textured_image(20, 20, 5);
    std::vector<FrameArtifacts> a(2, grid_artifacts(f, 2, 2, Labeling(4, 0), p));
    a[1].stage1.labels.clear();
    EXPECT_THROW(make_window(a, 0, 1), Error);
}

TEST(SmoothWindow, MatchesEnumerationOnRandomWindows)
{
    std::mt19937 rng(29);
    for (int trial = 0; trial < 60; ++trial) {
        Params p;
        p.t_window = 1 + trial % 2;
        p.beta1 = 0.5 + (trial % 7);
        const int n_frames = 2 + trial % 3;
        std::vector<FrameArtifacts> a;
        std::bernoulli_distribution coin(0.5);
        for (int t = 0; t < n_frames; ++t) {
            const int gx = 1 + (trial + t) % 3;
            Labeling l(gx * 2);
            for (auto& v : l)
                v = coin(rng);
            a.push_back(grid_artifacts(clickseg::testing::textured_image(24, 12, 1000 * trial + t, 4.0), gx, 2, l, p));
        }
        for (int t = 0; t + 1 < n_frames; ++t) {
            for (int s = 0; s < a[t].map.size(); ++s)
                for (int m = 0; m < a[t + 1].map.size(); ++m)
                    if (coin(rng))
                        a[t].links_to_next.pairs.emplace_back(s, m);
        }
        for (int c = 0; c < n_frames; ++c) {
            const auto w = make_window(a, c, p.t_window);
            if (w.n_nodes() > 20)
                continue;
            EXPECT_EQ(smooth_window(w, p), brute_force_center(a, c, p)) << trial << " center " << c;
        }
    }
}

TEST(SmoothSegment, SingleFrameEqualsStage1)
{
    const auto seq = static_square_sequence(1);
    ClickLog log;
    for (int i = 0; i < 8; ++i)
        log.clicks.push_back(click_at(0, 36 + i, 30));
    PipelineOptions opt;
    opt.params.click_delay = 0;
    const auto r = segment_sequence(seq, log, opt);
    ASSERT_EQ(r.masks.size(), 1);
    EXPECT_TRUE(masks_equal(r.masks[0], r.stage1_masks[0]));
}

TEST(SmoothSegment, StaticClickedSquare)
{
    const auto seq = static_square_sequence(5);
    ClickLog log;
    for (int t = 0; t < 5; ++t)
        for (int y = 26; y < 40; y += 4)
            for (int x = 34; x < 48; x += 4)
                log.clicks.push_back(click_at(t, x, y));
    PipelineOptions opt;
    opt.params.click_delay = 0;
    const auto features = compute_features(seq, opt);
    const auto masks = smooth_segment(seq, log, opt.params);
    ASSERT_EQ(masks.size(), 5);
    for (int t = 0; t < 5; ++t) {
        const auto expected = square_superpixels(features[t].map);
        EXPECT_GT(cv::countNonZero(expected), 0);
        EXPECT_TRUE(masks_equal(masks[t], expected)) << t;
    }
}

TEST(SmoothSegment, TransfersLabelsIntoUnclickedFrame)
{
    const auto seq = static_square_sequence(5);
    ClickLog log;
    for (int t : {0, 1, 3, 4})
        for (int y = 26; y < 40; y += 4)
            for (int x = 34; x < 48; x += 4)
                log.clicks.push_back(click_at(t, x, y));
    PipelineOptions opt;
    opt.params.click_delay = 0;
    const auto r = segment_sequence(seq, log, opt);
    EXPECT_EQ(cv::countNonZero(r.stage1_masks[2]), 0);
    EXPECT_TRUE(masks_equal(r.masks[2], r.masks[1]));
    EXPECT_GT(cv::countNonZero(r.masks[2]), 0);
}

TEST(SmoothSegment, MaskAreaIsSumOfLabeledSuperpixels)
{
    const auto seq = static_square_sequence(3);
    ClickLog log;
    log.clicks.push_back(click_at(1, 40, 30));
    PipelineOptions opt;
    opt.params.click_delay = 0;
    auto features = compute_artifacts(seq, log, opt);
    for (int t = 0; t < 3; ++t) {
        const auto labels = smooth_window(make_window(features, t, opt.params.t_window), opt.params);
        int area = 0;
        for (int s = 0; s < features[t].map.size(); ++s)
            area += labels[s] ? features[t].map.superpixels[s].pixel_count : 0;
        EXPECT_EQ(cv::countNonZero(render_labels(features[t].map, labels)), area);
    }
}

TEST(SmoothSegment, ClickDelayShiftsInput)
{
    const auto seq = static_square_sequence(4);
    ClickLog log;
    for (int y = 26; y < 40; y += 4)
        for (int x = 34; x < 48; x += 4)
            log.clicks.push_back(click_at(3, x, y));
    PipelineOptions opt;
    opt.params.click_delay = 2;
    opt.params.t_window = 0;
    const auto r = segment_sequence(seq, log, opt);
    EXPECT_GT(cv::countNonZero(r.stage1_masks[1]), 0);
    EXPECT_EQ(cv::countNonZero(r.stage1_masks[3]), 0);
}

TEST(SmoothSegment, OutOfBoundsClickRejected)
{
    const auto seq = static_square_sequence(2);
    ClickLog log;
    log.clicks.push_back(click_at(0, 80, 0));
    PipelineOptions opt;
    opt.params.click_delay = 0;
    EXPECT_THROW(segment_sequence(seq, log, opt), Error);
}

TEST(SmoothSegment, EmptySequenceRejected)
{
    EXPECT_THROW(smooth_segment(FrameSequence{}, ClickLog{}, Params{}), Error);
}

TEST(SegmentFeatures, ReusableAcrossLogsAndThreadCounts)
{
    const auto seq = static_square_sequence(4);
    PipelineOptions opt;
    opt.params.click_delay = 0;
    const auto features = compute_features(seq, opt);
    ClickLog a, b;
    a.clicks.push_back(click_at(1, 40, 30));
    b.clicks.push_back(click_at(1, 5, 5));
    const auto ra = segment_features(features, a, opt.params, 1);
    const auto rb = segment_features(features, b, opt.params, 3);
    const auto ra2 = segment_features(features, a, opt.params, 4);
    EXPECT_TRUE(ra.masks == ra2.masks);
    EXPECT_FALSE(ra.stage1_masks == rb.stage1_masks);
    EXPECT_TRUE(segment_sequence(seq, a, opt).masks == ra.masks);
}
