#pragma once

// Dense coarse-to-fine Lucas-Kanade flow and superpixel temporal links.

#include <clickseg/error.hpp>
#include <clickseg/superpix.hpp>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

namespace clickseg {

/// Per-pixel motion from frame t to t+1, channel 0 = dx, channel 1 = dy.
struct FlowField {
    cv::Mat2f vectors;

    int width() const { return vectors.cols; }
    int height() const { return vectors.rows; }
    cv::Vec2f at(int x, int y) const { return vectors(y, x); }
};

struct FlowOptions {
    int levels = 3;
    int window = 5;
    int iterations = 8;
    float max_magnitude = 48.0f;
};

inline cv::Mat1f luminance(const cv::Mat3b& frame)
{
    cv::Mat1f out(frame.size());
    for (int y = 0; y < frame.rows; ++y) {
        const cv::Vec3b* row = frame.ptr<cv::Vec3b>(y);
        float* o = out.ptr<float>(y);
        for (int x = 0; x < frame.cols; ++x)
            o[x] = 0.299f * row[x][2] + 0.587f * row[x][1] + 0.114f * row[x][0];
    }
    return out;
}

namespace detail {

inline float bilinear(const cv::Mat1f& img, float x, float y)
{
    x = std::clamp(x, 0.0f, static_cast<float>(img.cols - 1));
    y = std::clamp(y, 0.0f, static_cast<float>(img.rows - 1));
    const int x0 = std::min(static_cast<int>(x), img.cols - 2 < 0 ? 0 : img.cols - 2);
    const int y0 = std::min(static_cast<int>(y), img.rows - 2 < 0 ? 0 : img.rows - 2);
    const int x1 = std::min(x0 + 1, img.cols - 1);
    const int y1 = std::min(y0 + 1, img.rows - 1);
    const float ax = x - x0;
    const float ay = y - y0;
    const float top = img(y0, x0) + ax * (img(y0, x1) - img(y0, x0));
    const float bottom = img(y1, x0) + ax * (img(y1, x1) - img(y1, x0));
    return top + ay * (bottom - top);
}

// Per-pixel Lucas-Kanade: the whole window is warped with the center's
// flow, so every pixel is an independent 2x2 problem.
inline void lk_refine(const cv::Mat1f& i0, const cv::Mat1f& i1, cv::Mat1f& u, cv::Mat1f& v, const FlowOptions& opt,
                      float max_mag)
{
    const int r = opt.window / 2;
    cv::Mat1f ix, iy;
    cv::Sobel(i0, ix, CV_32F, 1, 0, 3, 1.0 / 8.0, 0, cv::BORDER_REPLICATE);
    cv::Sobel(i0, iy, CV_32F, 0, 1, 3, 1.0 / 8.0, 0, cv::BORDER_REPLICATE);

    for (int y = 0; y < i0.rows; ++y) {
        for (int x = 0; x < i0.cols; ++x) {
            const int ya = std::max(0, y - r), yb = std::min(i0.rows - 1, y + r);
            const int xa = std::max(0, x - r), xb = std::min(i0.cols - 1, x + r);
            float a = 0, b = 0, c = 0;
            for (int yy = ya; yy <= yb; ++yy)
                for (int xx = xa; xx <= xb; ++xx) {
                    a += ix(yy, xx) * ix(yy, xx);
                    b += ix(yy, xx) * iy(yy, xx);
                    c += iy(yy, xx) * iy(yy, xx);
                }
            const float n = static_cast<float>((yb - ya + 1) * (xb - xa + 1));
            const float det = a * c - b * b;
            // smaller eigenvalue of the normalized structure tensor
            const float tr = 0.5f * (a + c) / n;
            const float min_eig = tr - std::sqrt(std::max(0.0f, tr * tr - det / (n * n)));
            if (min_eig < 1e-2f || det <= 0)
                continue;
            float fu = u(y, x), fv = v(y, x);
            for (int iter = 0; iter < opt.iterations; ++iter) {
                float bx = 0, by = 0;
                for (int yy = ya; yy <= yb; ++yy)
                    for (int xx = xa; xx <= xb; ++xx) {
                        const float it = bilinear(i1, xx + fu, yy + fv) - i0(yy, xx);
                        bx += ix(yy, xx) * it;
                        by += iy(yy, xx) * it;
                    }
                const float du = (-c * bx + b * by) / det;
                const float dv = (b * bx - a * by) / det;
                if (!std::isfinite(du) || !std::isfinite(dv))
                    break;
                fu += du;
                fv += dv;
                if (du * du + dv * dv < 1e-4f)
                    break;
            }
            const float mag = std::hypot(fu, fv);
            if (!std::isfinite(mag))
                continue;
            if (mag > max_mag) {
                fu *= max_mag / mag;
                fv *= max_mag / mag;
            }
            u(y, x) = fu;
            v(y, x) = fv;
        }
    }
}

} // namespace detail

/// Flow is computed on luminance with an image pyramid, a fixed-size
/// window and a few warping iterations per level.
inline FlowField estimate_flow(const cv::Mat3b& frame_t, const cv::Mat3b& frame_t1, const FlowOptions& opt = {})
{
    if (frame_t.size() != frame_t1.size())
        throw Error(Errc::dimension_mismatch, "flow frames differ in size");
    if (opt.levels < 1 || opt.window < 1 || opt.iterations < 0)
        throw Error(Errc::invalid_argument, "invalid flow options");

    std::vector<cv::Mat1f> pyr0, pyr1;
    cv::Mat1f g0 = luminance(frame_t);
    cv::Mat1f g1 = luminance(frame_t1);
    cv::GaussianBlur(g0, g0, cv::Size(3, 3), 0.8, 0.8, cv::BORDER_REPLICATE);
    cv::GaussianBlur(g1, g1, cv::Size(3, 3), 0.8, 0.8, cv::BORDER_REPLICATE);
    pyr0.push_back(g0);
    pyr1.push_back(g1);
    for (int l = 1; l < opt.levels; ++l) {
        if (pyr0.back().cols < 2 * opt.window || pyr0.back().rows < 2 * opt.window)
            break;
        cv::Mat1f d0, d1;
        cv::pyrDown(pyr0.back(), d0);
        cv::pyrDown(pyr1.back(), d1);
        pyr0.push_back(d0);
        pyr1.push_back(d1);
    }

    cv::Mat1f u, v;
    for (int l = static_cast<int>(pyr0.size()) - 1; l >= 0; --l) {
        const cv::Size sz = pyr0[l].size();
        if (u.empty()) {
            u = cv::Mat1f::zeros(sz);
            v = cv::Mat1f::zeros(sz);
        } else {
            cv::Mat1f uu, vv;
            cv::resize(u, uu, sz, 0, 0, cv::INTER_LINEAR);
            cv::resize(v, vv, sz, 0, 0, cv::INTER_LINEAR);
            u = uu * 2.0f;
            v = vv * 2.0f;
        }
        const float max_mag = opt.max_magnitude / static_cast<float>(1 << l);
        detail::lk_refine(pyr0[l], pyr1[l], u, v, opt, max_mag);
        cv::medianBlur(u, u, 3);
        cv::medianBlur(v, v, 3);
    }

    FlowField flow;
    cv::Mat channels[] = {u, v};
    cv::merge(channels, 2, flow.vectors);
    return flow;
}

/// Superpixel pairs (s_t, s_t1) such that some pixel of s_t lands in s_t1
/// when moved by its flow vector (rounded to the nearest pixel). Sorted.
struct TemporalLinks {
    std::vector<std::pair<int, int>> pairs;
};

inline cv::Point project_pixel(int x, int y, const cv::Vec2f& d)
{
    return {static_cast<int>(std::lround(x + d[0])), static_cast<int>(std::lround(y + d[1]))};
}

inline TemporalLinks temporal_links(const SuperpixelMap& map_t, const SuperpixelMap& map_t1, const FlowField& flow)
{
    if (map_t.labels.size() != map_t1.labels.size() || map_t.labels.size() != flow.vectors.size())
        throw Error(Errc::dimension_mismatch, "maps and flow differ in size");
    const int w = map_t.width();
    const int h = map_t.height();
    const std::uint64_t n1 = static_cast<std::uint64_t>(map_t1.size());
    std::vector<std::uint64_t> keys;
    keys.reserve(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const cv::Point q = project_pixel(x, y, flow.vectors(y, x));
            if (q.x < 0 || q.y < 0 || q.x >= w || q.y >= h)
                continue;
            keys.push_back(static_cast<std::uint64_t>(map_t.labels(y, x)) * n1 +
                           static_cast<std::uint64_t>(map_t1.labels(q.y, q.x)));
        }
    }
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    TemporalLinks links;
    links.pairs.reserve(keys.size());
    for (auto k : keys)
        links.pairs.emplace_back(static_cast<int>(k / n1), static_cast<int>(k % n1));
    return links;
}

/// Little-endian dump: int32 width, int32 height, then (dx, dy) float32
/// pairs in row-major order.
inline void write_flow(const FlowField& flow, const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(Errc::write_error, "cannot open " + path);
    auto put_u32 = [&](std::uint32_t v) {
        const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                    static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
        out.write(reinterpret_cast<const char*>(b), 4);
    };
    put_u32(static_cast<std::uint32_t>(flow.width()));
    put_u32(static_cast<std::uint32_t>(flow.height()));
    for (int y = 0; y < flow.height(); ++y) {
        for (int x = 0; x < flow.width(); ++x) {
            for (int c = 0; c < 2; ++c) {
                std::uint32_t bits;
                const float f = flow.vectors(y, x)[c];
                std::memcpy(&bits, &f, 4);
                put_u32(bits);
            }
        }
    }
    if (!out)
        throw Error(Errc::write_error, "short write to " + path);
}

inline FlowField read_flow(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(Errc::decode_error, "cannot open " + path);
    auto get_u32 = [&]() {
        unsigned char b[4];
        if (!in.read(reinterpret_cast<char*>(b), 4))
            throw Error(Errc::decode_error, "truncated flow file " + path);
        return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
               (std::uint32_t(b[3]) << 24);
    };
    const int w = static_cast<int>(get_u32());
    const int h = static_cast<int>(get_u32());
    if (w <= 0 || h <= 0 || static_cast<long long>(w) * h > (1LL << 28))
        throw Error(Errc::decode_error, "bad flow header in " + path);
    FlowField flow{cv::Mat2f(h, w)};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 2; ++c) {
                const std::uint32_t bits = get_u32();
                float f;
                std::memcpy(&f, &bits, 4);
                flow.vectors(y, x)[c] = f;
            }
        }
    }
    return flow;
}

} // namespace clickseg
