#pragma once

// Synthetic video: textured objects moving over a static cluttered
// background, with exact ground-truth masks.

#include <clickseg/media.hpp>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace clickseg {

struct SceneOptions {
    int width = 160;
    int height = 120;
    int frames = 30;
    int objects = 3;
    int clutter = 24;         // background shapes
    double min_radius = 10.0;
    double max_radius = 20.0;
    double max_speed = 2.5;   // px per frame
    double texture = 0.1;     // relative brightness jitter of object texture
    std::uint64_t seed = 1;
};

struct SyntheticScene {
    FrameSequence frames;
    MaskSequence gt;
    std::vector<MaskSequence> object_gt; // one sequence per object
};

namespace detail {

inline cv::Vec3b hsv_to_bgr(double h, double s, double v)
{
    cv::Mat3b px(1, 1, cv::Vec3b(static_cast<unsigned char>(h / 2.0), static_cast<unsigned char>(s * 255),
                                 static_cast<unsigned char>(v * 255)));
    cv::cvtColor(px, px, cv::COLOR_HSV2BGR);
    return px(0, 0);
}

inline cv::Mat3b noise_texture(int w, int h, double sigma, std::mt19937_64& rng)
{
    std::uniform_int_distribution<int> d(-40, 40);
    cv::Mat3f n(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            n(y, x) = cv::Vec3f(static_cast<float>(d(rng)), static_cast<float>(d(rng)), static_cast<float>(d(rng)));
    cv::GaussianBlur(n, n, cv::Size(0, 0), sigma);
    cv::Mat3b out;
    n.convertTo(out, CV_8UC3, 2.0, 128.0);
    return out;
}

struct MovingObject {
    cv::Point2d center;
    cv::Point2d velocity;
    cv::Size2d radii;
    double angle = 0;
    cv::Vec3b color;
    cv::Mat1f pattern; // brightness factors in object coordinates
};

} // namespace detail

inline SyntheticScene make_scene(const SceneOptions& opt)
{
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int w = opt.width, h = opt.height;

    // low-saturation cluttered background
    cv::Mat3b background(h, w, detail::hsv_to_bgr(360 * u(rng), 0.15, 0.45));
    cv::Mat3b tex = detail::noise_texture(w, h, 3.0, rng);
    cv::addWeighted(background, 0.7, tex, 0.3, 0.0, background);
    for (int i = 0; i < opt.clutter; ++i) {
        const cv::Vec3b c = detail::hsv_to_bgr(360 * u(rng), 0.1 + 0.25 * u(rng), 0.25 + 0.5 * u(rng));
        const cv::Point p(static_cast<int>(u(rng) * w), static_cast<int>(u(rng) * h));
        const int a = 4 + static_cast<int>(u(rng) * w / 8);
        const int b = 4 + static_cast<int>(u(rng) * h / 8);
        if (u(rng) < 0.5)
            cv::rectangle(background, cv::Rect(p.x - a, p.y - b, 2 * a, 2 * b), cv::Scalar(c[0], c[1], c[2]),
                          cv::FILLED);
        else
            cv::ellipse(background, p, cv::Size(a, b), 360 * u(rng), 0, 360, cv::Scalar(c[0], c[1], c[2]),
                        cv::FILLED);
    }
    cv::GaussianBlur(background, background, cv::Size(3, 3), 0.7);

    // saturated objects with evenly spread hues
    std::vector<detail::MovingObject> objs(opt.objects);
    const double hue0 = 360 * u(rng);
    for (int i = 0; i < opt.objects; ++i) {
        auto& o = objs[i];
        const double r1 = opt.min_radius + (opt.max_radius - opt.min_radius) * u(rng);
        const double r2 = opt.min_radius + (opt.max_radius - opt.min_radius) * u(rng);
        o.radii = {r1, r2};
        o.center = {r1 + u(rng) * (w - 2 * r1), r2 + u(rng) * (h - 2 * r2)};
        const double speed = opt.max_speed * (0.4 + 0.6 * u(rng));
        const double dir = 2 * CV_PI * u(rng);
        o.velocity = {speed * std::cos(dir), speed * std::sin(dir)};
        o.angle = 180 * u(rng);
        const double hue = std::fmod(hue0 + 360.0 * i / std::max(1, opt.objects), 360.0);
        o.color = detail::hsv_to_bgr(hue, 0.85, 0.85);
        const int side = 2 * static_cast<int>(std::ceil(std::max(r1, r2))) + 3;
        o.pattern = cv::Mat1f(side, side);
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x)
                o.pattern(y, x) = static_cast<float>(u(rng) - 0.5);
        cv::GaussianBlur(o.pattern, o.pattern, cv::Size(0, 0), 0.8);
        double lo, hi;
        cv::minMaxLoc(o.pattern, &lo, &hi);
        o.pattern = 1.0 + (o.pattern - (lo + hi) / 2) * (2 * opt.texture / std::max(hi - lo, 1e-9));
    }

    SyntheticScene scene;
    std::vector<cv::Mat3b> frames;
    scene.gt.masks.resize(opt.frames);
    scene.object_gt.assign(opt.objects, MaskSequence{});
    for (int t = 0; t < opt.frames; ++t) {
        cv::Mat3b f = background.clone();
        cv::Mat1b all = cv::Mat1b::zeros(h, w);
        for (int i = 0; i < opt.objects; ++i) {
            auto& o = objs[i];
            cv::Mat1b m = cv::Mat1b::zeros(h, w);
            cv::ellipse(m, cv::Point(static_cast<int>(std::lround(o.center.x)), static_cast<int>(std::lround(o.center.y))),
                        cv::Size(static_cast<int>(o.radii.width), static_cast<int>(o.radii.height)), o.angle, 0, 360,
                        cv::Scalar(255), cv::FILLED);
            // the texture moves with the object
            const int half = o.pattern.rows / 2;
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    if (!m(y, x))
                        continue;
                    const int px = std::clamp(x - static_cast<int>(std::lround(o.center.x)) + half, 0, o.pattern.cols - 1);
                    const int py = std::clamp(y - static_cast<int>(std::lround(o.center.y)) + half, 0, o.pattern.rows - 1);
                    const float k = o.pattern(py, px);
                    for (int c = 0; c < 3; ++c)
                        f(y, x)[c] = cv::saturate_cast<unsigned char>(o.color[c] * k);
                }
            }
            // later objects occlude earlier ones
            for (int j = 0; j < i; ++j)
                scene.object_gt[j].masks[t].setTo(0, m);
            scene.object_gt[i].masks.push_back(m);
            all |= m;

            o.center += o.velocity;
            if (o.center.x < o.radii.width || o.center.x > w - o.radii.width)
                o.velocity.x = -o.velocity.x;
            if (o.center.y < o.radii.height || o.center.y > h - o.radii.height)
                o.velocity.y = -o.velocity.y;
        }
        scene.gt[t] = all;
        frames.push_back(f);
    }
    scene.frames = FrameSequence(std::move(frames));
    return scene;
}

} // namespace clickseg
