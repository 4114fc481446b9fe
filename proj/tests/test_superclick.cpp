#include <clickseg/superclick.hpp>

#include "support/images.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace clickseg;
using clickseg::testing::brute_force_minimum;
using clickseg::testing::grid_labels;

namespace {

Click click_at(int frame, int x, int y, std::optional<double> quality = std::nullopt)
{
    Click c;
    c.frame_index = frame;
    c.x = x;
    c.y = y;
    c.user_id = "u";
    c.level_id = "l";
    c.quality_score = quality;
    return c;
}

ClickLog log_of(std::vector<Click> clicks)
{
    ClickLog log;
    log.clicks = std::move(clicks);
    return log;
}

// 3x3 grid of 10x10 cells on a 30x30 frame.
SuperpixelMap grid_map(int gx = 3, int gy = 3, int cell = 10)
{
    return superpixel_map_from_labels(grid_labels(gx * cell, gy * cell, gx, gy));
}

cv::Point cell_center(int id, int gx = 3, int cell = 10)
{
    return {(id % gx) * cell + cell / 2, (id / gx) * cell + cell / 2};
}

} // namespace

TEST(ShiftClicks, ZeroDelayIsIdentity)
{
    const auto log = log_of({click_at(0, 1, 1), click_at(5, 2, 2)});
    EXPECT_EQ(shift_clicks(log, 0).clicks, log.clicks);
}

TEST(ShiftClicks, MovesEarlier)
{
    const auto out = shift_clicks(log_of({click_at(5, 1, 1)}), 2);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out.clicks[0].frame_index, 3);
}

TEST(ShiftClicks, DropsClicksBeforeFirstFrame)
{
    const auto out = shift_clicks(log_of({click_at(1, 1, 1), click_at(2, 1, 1)}), 2);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out.clicks[0].frame_index, 0);
}

TEST(ShiftClicks, NegativeDelayRejected)
{
    EXPECT_THROW(shift_clicks(log_of({}), -1), Error);
}

TEST(Clickedness, NoClicksAllZero)
{
    const auto k = clickedness(grid_map(), {});
    EXPECT_EQ(k, std::vector<double>(9, 0.0));
}

TEST(Clickedness, SingleOccupiedSuperpixel)
{
    const auto p = cell_center(4);
    std::vector<Click> clicks(3, click_at(0, p.x, p.y));
    const auto k = clickedness(grid_map(), clicks);
    for (int s = 0; s < 9; ++s)
        EXPECT_DOUBLE_EQ(k[s], s == 4 ? 1.0 : 0.0);
}

TEST(Clickedness, QualityWeightedOverRawMaximum)
{
    const auto a = cell_center(0);
    const auto b = cell_center(1);
    std::vector<Click> clicks;
    for (int i = 0; i < 2; ++i)
        clicks.push_back(click_at(0, a.x, a.y, 0.5));
    for (int i = 0; i < 4; ++i)
        clicks.push_back(click_at(0, b.x, b.y, 1.0));
    const auto k = clickedness(grid_map(), clicks);
    EXPECT_DOUBLE_EQ(k[0], 0.25);
    EXPECT_DOUBLE_EQ(k[1], 1.0);
}

TEST(Clickedness, OutOfFrameClickRejected)
{
    const std::vector<Click> clicks{click_at(0, 30, 0)};
    EXPECT_THROW(clickedness(grid_map(), clicks), Error);
}

TEST(Clickedness, AlwaysInUnitInterval)
{
    std::mt19937 rng(3);
    const auto map = grid_map(4, 4, 8);
    std::uniform_int_distribution<int> coord(0, 31);
    std::uniform_real_distribution<double> q(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<Click> clicks;
        const int n = trial % 40;
        for (int i = 0; i < n; ++i)
            clicks.push_back(click_at(0, coord(rng), coord(rng), q(rng)));
        for (double k : clickedness(map, clicks)) {
            EXPECT_GE(k, 0.0);
            EXPECT_LE(k, 1.0);
        }
    }
}

TEST(Proximity, AllZeroClickedness)
{
    const auto map = grid_map();
    const auto adj = build_adjacency(map);
    EXPECT_EQ(proximity(std::vector<double>(9, 0.0), adj), std::vector<double>(9, 0.0));
}

TEST(Proximity, HalfOfFourNeighbors)
{
    // center of a 3x3 grid has neighbors 1, 3, 5, 7
    const auto adj = build_adjacency(grid_map());
    std::vector<double> k(9, 0.0);
    k[1] = 0.9;
    k[3] = 0.6;
    k[5] = 0.5; // not above the threshold
    const auto v = proximity(k, adj);
    EXPECT_DOUBLE_EQ(v[4], 0.5);
}

TEST(Proximity, IsolatedSuperpixelIsZero)
{
    AdjacencyGraph adj;
    adj.neighbors.resize(1);
    EXPECT_EQ(proximity(std::vector<double>{1.0}, adj), std::vector<double>{0.0});
}

TEST(SuperclickProbability, RegularizerOnly)
{
    const auto p = superclick_probability(0.0, 0.0, 0.4);
    EXPECT_DOUBLE_EQ(p.p1, 0.4);
    EXPECT_DOUBLE_EQ(p.p0, 0.6);
}

TEST(SuperclickProbability, ClampsBelowOne)
{
    const auto p = superclick_probability(1.0, 1.0, 0.4);
    EXPECT_DOUBLE_EQ(p.p1, 1.0 - 1e-6);
    EXPECT_NEAR(p.p0, 1e-6, 1e-15);
}

TEST(SuperclickProbability, DirectSum)
{
    EXPECT_NEAR(superclick_probability(0.3, 0.25, 0.4).p1, 0.95, 1e-15);
}

TEST(BuildE1, SingleSuperpixelNoClicks)
{
    const auto frame = clickseg::testing::uniform_image(8, 8, {50, 60, 70});
    const auto map = superpixel_map_from_labels(cv::Mat1i(8, 8, 0));
    const auto adj = build_adjacency(map);
    Params params;
    const auto e = build_e1(frame, map, adj, {}, params);
    ASSERT_EQ(e.n_nodes(), 1);
    EXPECT_TRUE(e.pairwise.empty());
    EXPECT_NEAR(e.unary[0].label0, 0.25 * -std::log(0.6), 1e-12);
    EXPECT_NEAR(e.unary[0].label1, 0.25 * -std::log(0.4), 1e-12);
}

TEST(BuildE1, IdenticalColorsGiveUnitWeight)
{
    const auto frame = clickseg::testing::uniform_image(20, 10, {0, 200, 0});
    const auto map = superpixel_map_from_labels(grid_labels(20, 10, 2, 1));
    const auto e = build_e1(frame, map, build_adjacency(map), {}, Params{});
    ASSERT_EQ(e.pairwise.size(), 1u);
    EXPECT_DOUBLE_EQ(e.pairwise[0].weight, 1.0);
}

TEST(BuildE1, DisjointHistogramsGiveTinyWeight)
{
    cv::Mat3b frame(10, 20, cv::Vec3b(0, 0, 0));
    frame(cv::Rect(10, 0, 10, 10)).setTo(cv::Vec3b(255, 255, 255));
    const auto map = superpixel_map_from_labels(grid_labels(20, 10, 2, 1));
    const auto e = build_e1(frame, map, build_adjacency(map), {}, Params{});
    ASSERT_EQ(e.pairwise.size(), 1u);
    EXPECT_NEAR(e.pairwise[0].weight, std::exp(-15.0), 1e-18);
    EXPECT_NEAR(e.pairwise[0].weight, 3.06e-7, 1e-9);
}

TEST(BuildE1, FrameSizeMismatchRejected)
{
    const auto frame = clickseg::testing::uniform_image(10, 10, {0, 0, 0});
    const auto map = grid_map();
    EXPECT_THROW(build_e1(frame, map, build_adjacency(map), {}, Params{}), Error);
}

TEST(ExtractSuperclicks, NoClicksIsAllBackground)
{
    const auto frame = clickseg::testing::textured_image(20, 20, 4);
    const auto map = superpixel_map_from_labels(grid_labels(20, 20, 2, 2));
    const auto adj = build_adjacency(map);
    Params params;
    const auto e = build_e1(frame, map, adj, {}, params);
    const auto s = extract_superclicks(frame, map, adj, {}, params);
    EXPECT_EQ(s.labels, Labeling(4, 0));
    EXPECT_EQ(s.labels, brute_force_minimum(e).labeling);
}

TEST(ExtractSuperclicks, SaturatedClicksAreAllForeground)
{
    const auto frame = clickseg::testing::textured_image(30, 30, 4);
    const auto map = grid_map();
    std::vector<Click> clicks;
    for (int s = 0; s < 9; ++s) {
        const auto p = cell_center(s);
        for (int i = 0; i < 5; ++i)
            clicks.push_back(click_at(0, p.x, p.y));
    }
    const auto s = extract_superclicks(frame, map, build_adjacency(map), clicks, Params{});
    EXPECT_EQ(s.labels, Labeling(9, 1));
}

TEST(ExtractSuperclicks, SpreadsToIdenticalNeighbors)
{
    const auto frame = clickseg::testing::uniform_image(30, 30, {90, 120, 30});
    const auto map = grid_map();
    const auto adj = build_adjacency(map);
    const auto p = cell_center(4);
    const std::vector<Click> clicks(10, click_at(0, p.x, p.y));
    Params params;
    const auto e = build_e1(frame, map, adj, clicks, params);
    const auto expected = brute_force_minimum(e);
    const auto s = extract_superclicks(frame, map, adj, clicks, params);
    EXPECT_EQ(s.labels, expected.labeling);
    EXPECT_EQ(s.labels, Labeling(9, 1));
    EXPECT_DOUBLE_EQ(s.clickedness[4], 1.0);
    EXPECT_NEAR(s.proximity[1], 1.0 / 3.0, 1e-15);
}

TEST(ExtractSuperclicks, DissimilarNeighborsStayBackground)
{
    auto frame = clickseg::testing::uniform_image(30, 30, {0, 0, 0});
    frame(cv::Rect(10, 10, 10, 10)).setTo(cv::Vec3b(255, 255, 255));
    const auto map = grid_map();
    const auto p = cell_center(4);
    const std::vector<Click> clicks(10, click_at(0, p.x, p.y));
    Params params;
    params.u_s = 0.0;
    const auto adj = build_adjacency(map);
    const auto s = extract_superclicks(frame, map, adj, clicks, params);
    EXPECT_EQ(s.labels, brute_force_minimum(build_e1(frame, map, adj, clicks, params)).labeling);
    Labeling expected(9, 0);
    expected[4] = 1;
    EXPECT_EQ(s.labels, expected);
}

TEST(ExtractSuperclicks, MatchesEnumerationOnRandomFrames)
{
    std::mt19937 rng(17);
    for (int trial = 0; trial < 40; ++trial) {
        const int gx = 2 + trial % 3;
        const int gy = 2 + (trial / 3) % 3; // at most 16 superpixels
        const int w = gx * 8, h = gy * 8;
        const auto frame = clickseg::testing::textured_image(w, h, 100 + trial, 3.0);
        const auto map = superpixel_map_from_labels(grid_labels(w, h, gx, gy));
        const auto adj = build_adjacency(map);
        std::uniform_int_distribution<int> cx(0, w - 1), cy(0, h - 1), n(0, 30);
        std::uniform_real_distribution<double> q(0.0, 1.0);
        std::vector<Click> clicks;
        for (int i = n(rng); i > 0; --i)
            clicks.push_back(click_at(0, cx(rng), cy(rng), q(rng)));
        Params params;
        params.beta1 = 0.5 + trial % 5;
        const auto e = build_e1(frame, map, adj, clicks, params);
        const auto s = extract_superclicks(frame, map, adj, clicks, params);
        const auto oracle = brute_force_minimum(e);
        EXPECT_NEAR(evaluate(e, s.labels), oracle.energy, 1e-9) << trial;
        EXPECT_EQ(s.labels, oracle.labeling) << trial;
        EXPECT_EQ(extract_superclicks(frame, map, adj, clicks, params).labels, s.labels);
    }
}

TEST(ExtractSuperclicks, LabelFlipGivesComplement)
{
    std::mt19937 rng(23);
    for (int trial = 0; trial < 30; ++trial) {
        const auto frame = clickseg::testing::textured_image(24, 24, 300 + trial, 3.0);
        const auto map = superpixel_map_from_labels(grid_labels(24, 24, 3, 3));
        std::uniform_int_distribution<int> c(0, 23);
        std::vector<Click> clicks;
        for (int i = 0; i < 12; ++i)
            clicks.push_back(click_at(0, c(rng), c(rng)));
        auto e = build_e1(frame, map, build_adjacency(map), clicks, Params{});
        const auto m = minimize(e);
        for (auto& u : e.unary)
            std::swap(u.label0, u.label1);
        const auto flipped = minimize(e);
        EXPECT_NEAR(flipped.energy, m.energy, 1e-9);
        // unique minimizers flip exactly
        if (brute_force_minimum(e).n_minimizers == 1) {
            for (int s = 0; s < 9; ++s)
                EXPECT_EQ(flipped.labeling[s], 1 - m.labeling[s]);
        }
    }
}

TEST(RenderLabels, PaintsSuperpixels)
{
    const auto map = grid_map();
    Labeling l(9, 0);
    l[0] = 1;
    const auto mask = render_labels(map, l);
    EXPECT_EQ(cv::countNonZero(mask), 100);
    EXPECT_EQ(mask(5, 5), 255);
    EXPECT_EQ(mask(15, 15), 0);
    EXPECT_THROW(render_labels(map, Labeling(8, 0)), Error);
}

TEST(Params, Validation)
{
    Params p;
    EXPECT_NO_THROW(p.validate());
    p.u_s = 1.0;
    EXPECT_THROW(p.validate(), Error);
    p = Params{};
    p.gamma1 = 0.9;
    p.gamma2 = 0.1;
    EXPECT_THROW(p.validate(), Error);
    p = Params{};
    p.alpha1 = 0;
    EXPECT_THROW(p.validate(), Error);
    p = Params{};
    p.click_delay = -1;
    EXPECT_THROW(p.validate(), Error);
}
