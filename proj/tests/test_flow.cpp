#include <clickseg/flow.hpp>

#include "support/images.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <set>

using namespace clickseg;
using namespace clickseg::testing;

namespace {

// Mean flow over the interior, away from border replication effects.
cv::Vec2d interior_mean(const FlowField& f, int margin)
{
    cv::Vec2d sum(0, 0);
    int n = 0;
    for (int y = margin; y < f.height() - margin; ++y) {
        for (int x = margin; x < f.width() - margin; ++x) {
            sum += cv::Vec2d(f.at(x, y)[0], f.at(x, y)[1]);
            ++n;
        }
    }
    return sum / n;
}

double interior_max_error(const FlowField& f, int margin, double dx, double dy)
{
    double worst = 0;
    for (int y = margin; y < f.height() - margin; ++y)
        for (int x = margin; x < f.width() - margin; ++x)
            worst = std::max(worst, std::hypot(f.at(x, y)[0] - dx, f.at(x, y)[1] - dy));
    return worst;
}

} // namespace

TEST(Flow, IdenticalFramesGiveZeroFlow)
{
    const auto img = textured_image(96, 72, 11);
    const auto f = estimate_flow(img, img);
    ASSERT_EQ(f.width(), 96);
    ASSERT_EQ(f.height(), 72);
    EXPECT_LT(interior_max_error(f, 0, 0, 0), 0.1);
}

TEST(Flow, RecoversIntegerTranslations)
{
    const auto img = textured_image(160, 120, 12, 2.0);
    for (int dx = -3; dx <= 3; ++dx) {
        for (int dy = -3; dy <= 3; ++dy) {
            const auto f = estimate_flow(img, translate(img, dx, dy));
            const auto m = interior_mean(f, 16);
            EXPECT_NEAR(m[0], dx, 0.5) << dx << "," << dy;
            EXPECT_NEAR(m[1], dy, 0.5) << dx << "," << dy;
        }
    }
}

TEST(Flow, LargerMotionUsesPyramid)
{
    const auto img = textured_image(160, 120, 13, 2.0);
    const auto moved = translate(img, 5, -4);
    const auto m = interior_mean(estimate_flow(img, moved), 24);
    EXPECT_NEAR(m[0], 5, 0.1);
    EXPECT_NEAR(m[1], -4, 0.1);
    FlowOptions flat;
    flat.levels = 1;
    EXPECT_GT(interior_max_error(estimate_flow(img, moved, flat), 24, 5, -4), 1.0);
}

TEST(Flow, PerPixelEndpointErrorIsSmall)
{
    const auto img = textured_image(160, 120, 16, 2.0);
    const auto f = estimate_flow(img, translate(img, 3, -2));
    double sum = 0;
    int n = 0;
    for (int y = 16; y < 104; ++y)
        for (int x = 16; x < 144; ++x) {
            sum += std::hypot(f.at(x, y)[0] - 3, f.at(x, y)[1] + 2);
            ++n;
        }
    EXPECT_LT(sum / n, 0.05);
}

TEST(Flow, MoreIterationsDoNotDiverge)
{
    const auto img = textured_image(160, 120, 17, 2.0);
    FlowOptions opt;
    opt.iterations = 40;
    const auto m = interior_mean(estimate_flow(img, translate(img, -2, 3), opt), 16);
    EXPECT_NEAR(m[0], -2, 0.05);
    EXPECT_NEAR(m[1], 3, 0.05);
}

TEST(Flow, UniformFramesStayAtZero)
{
    const auto img = uniform_image(40, 30, {90, 90, 90});
    const auto f = estimate_flow(img, img);
    EXPECT_EQ(interior_max_error(f, 0, 0, 0), 0.0);
}

TEST(Flow, MismatchedSizesRejected)
{
    try {
        estimate_flow(uniform_image(10, 10, {}), uniform_image(11, 10, {}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::dimension_mismatch);
    }
}

TEST(Flow, RuntimeFor320x240)
{
    const auto a = textured_image(320, 240, 14);
    const auto b = translate(a, 2, 1);
    const auto t0 = std::chrono::steady_clock::now();
    estimate_flow(a, b);
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EXPECT_LT(s, 1.0);
}

TEST(Flow, FileRoundTrip)
{
    const auto img = textured_image(33, 21, 15);
    const auto f = estimate_flow(img, translate(img, 1, 0));
    const auto path = (std::filesystem::temp_directory_path() / "clickseg_flow.bin").string();
    write_flow(f, path);
    EXPECT_EQ(std::filesystem::file_size(path), 8u + 33u * 21u * 8u);
    const auto g = read_flow(path);
    ASSERT_EQ(g.vectors.size(), f.vectors.size());
    EXPECT_EQ(cv::norm(f.vectors, g.vectors, cv::NORM_INF), 0.0);
    std::filesystem::remove(path);
    EXPECT_THROW(read_flow(path), Error);
}

TEST(TemporalLinks, ZeroFlowLinksOverlappingSuperpixels)
{
    const auto a = superpixel_map_from_labels(grid_labels(20, 10, 2, 1));
    const auto b = superpixel_map_from_labels(grid_labels(20, 10, 2, 1));
    FlowField zero{cv::Mat2f(10, 20, cv::Vec2f(0, 0))};
    const auto links = temporal_links(a, b, zero);
    EXPECT_EQ(links.pairs, (std::vector<std::pair<int, int>>{{0, 0}, {1, 1}}));
}

TEST(TemporalLinks, ShiftedFlowCrossesBoundaryAndDropsOutOfFrame)
{
    const auto a = superpixel_map_from_labels(grid_labels(20, 10, 2, 1));
    const auto b = superpixel_map_from_labels(grid_labels(20, 10, 2, 1));
    FlowField right{cv::Mat2f(10, 20, cv::Vec2f(4.4f, 0))};
    const auto links = temporal_links(a, b, right);
    // left cell reaches both cells; right cell keeps only in-frame pixels
    EXPECT_EQ(links.pairs, (std::vector<std::pair<int, int>>{{0, 0}, {0, 1}, {1, 1}}));

    FlowField away{cv::Mat2f(10, 20, cv::Vec2f(100, 0))};
    EXPECT_TRUE(temporal_links(a, b, away).pairs.empty());
}

TEST(TemporalLinks, MatchesPerPixelOracle)
{
    const auto a = superpixel_map_from_labels(grid_labels(30, 24, 3, 4));
    const auto b = superpixel_map_from_labels(grid_labels(30, 24, 4, 3));
    cv::Mat2f v(24, 30);
    cv::RNG rng(3);
    rng.fill(v, cv::RNG::UNIFORM, -6, 6);
    const FlowField f{v};
    std::set<std::pair<int, int>> expected;
    for (int y = 0; y < 24; ++y) {
        for (int x = 0; x < 30; ++x) {
            const double qx = std::floor(x + v(y, x)[0] + 0.5);
            const double qy = std::floor(y + v(y, x)[1] + 0.5);
            if (qx >= 0 && qy >= 0 && qx < 30 && qy < 24)
                expected.insert({a.at(x, y), b.at(int(qx), int(qy))});
        }
    }
    const auto links = temporal_links(a, b, f);
    EXPECT_EQ((std::set<std::pair<int, int>>(links.pairs.begin(), links.pairs.end())), expected);
    EXPECT_TRUE(std::is_sorted(links.pairs.begin(), links.pairs.end()));
}
