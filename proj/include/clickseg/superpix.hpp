#pragma once

#include <clickseg/error.hpp>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace clickseg {

struct Superpixel {
    int id = 0;
    int pixel_count = 0;
    cv::Point2d centroid;
    cv::Rect bbox;
};

/// Partition of a frame into 4-connected regions with contiguous ids.
struct SuperpixelMap {
    cv::Mat1i labels;
    std::vector<Superpixel> superpixels;

    int width() const { return labels.cols; }
    int height() const { return labels.rows; }
    int size() const { return static_cast<int>(superpixels.size()); }
    int at(int x, int y) const { return labels(y, x); }
};

/// Symmetric, irreflexive neighbor sets; each list sorted ascending.
struct AdjacencyGraph {
    std::vector<std::vector<int>> neighbors;

    int size() const { return static_cast<int>(neighbors.size()); }

    /// Each undirected edge once, as (smaller id, larger id).
    std::vector<std::pair<int, int>> edges() const
    {
        std::vector<std::pair<int, int>> out;
        for (int i = 0; i < size(); ++i) {
            for (int j : neighbors[i]) {
                if (i < j)
                    out.emplace_back(i, j);
            }
        }
        return out;
    }
};

/// Per-channel normalized RGB histogram, channels concatenated R, G, B.
struct Histogram {
    int bins_per_channel = 0;
    std::vector<double> values;
};

struct SlicOptions {
    int target_count = 0; // 0 means pixel_count / 40
    double compactness = 10.0;
    int iterations = 10;
};

inline int default_superpixel_count(int width, int height)
{
    return std::max(1, width * height / 40);
}

namespace detail {

inline SuperpixelMap finalize_labels(cv::Mat1i labels)
{
    const int w = labels.cols;
    const int h = labels.rows;

    std::map<int, int> remap;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            int& l = labels(y, x);
            auto [it, inserted] = remap.try_emplace(l, static_cast<int>(remap.size()));
            l = it->second;
        }
    }

    SuperpixelMap map;
    map.labels = labels;
    const int n = static_cast<int>(remap.size());
    map.superpixels.resize(n);
    std::vector<double> sx(n, 0.0), sy(n, 0.0);
    std::vector<int> x0(n, w), y0(n, h), x1(n, -1), y1(n, -1);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int l = labels(y, x);
            auto& s = map.superpixels[l];
            ++s.pixel_count;
            sx[l] += x;
            sy[l] += y;
            x0[l] = std::min(x0[l], x);
            y0[l] = std::min(y0[l], y);
            x1[l] = std::max(x1[l], x);
            y1[l] = std::max(y1[l], y);
        }
    }
    for (int i = 0; i < n; ++i) {
        auto& s = map.superpixels[i];
        s.id = i;
        s.centroid = {sx[i] / s.pixel_count, sy[i] / s.pixel_count};
        s.bbox = cv::Rect(x0[i], y0[i], x1[i] - x0[i] + 1, y1[i] - y0[i] + 1);
    }
    return map;
}

/// Keeps the largest 4-connected piece of every label and merges the other
/// pieces into the neighbor label they share the most boundary with.
inline void enforce_connectivity(cv::Mat1i& labels)
{
    const int w = labels.cols;
    const int h = labels.rows;
    const int n = w * h;
    std::vector<int> comp(n);
    std::vector<int> stack;

    for (;;) {
        std::fill(comp.begin(), comp.end(), -1);
        std::vector<int> comp_label;
        std::vector<int> comp_size;
        for (int start = 0; start < n; ++start) {
            if (comp[start] >= 0)
                continue;
            const int c = static_cast<int>(comp_label.size());
            const int l = labels(start / w, start % w);
            comp_label.push_back(l);
            comp_size.push_back(0);
            comp[start] = c;
            stack.assign(1, start);
            while (!stack.empty()) {
                const int p = stack.back();
                stack.pop_back();
                ++comp_size[c];
                const int px = p % w;
                const int py = p / w;
                const int nb[4][2] = {{px - 1, py}, {px + 1, py}, {px, py - 1}, {px, py + 1}};
                for (const auto& q : nb) {
                    if (q[0] < 0 || q[1] < 0 || q[0] >= w || q[1] >= h)
                        continue;
                    const int qi = q[1] * w + q[0];
                    if (comp[qi] < 0 && labels(q[1], q[0]) == l) {
                        comp[qi] = c;
                        stack.push_back(qi);
                    }
                }
            }
        }

        std::map<int, int> largest; // label -> component
        for (int c = 0; c < static_cast<int>(comp_label.size()); ++c) {
            auto it = largest.find(comp_label[c]);
            if (it == largest.end() || comp_size[c] > comp_size[it->second])
                largest[comp_label[c]] = c;
        }
        std::vector<char> kept(comp_label.size(), 0);
        for (const auto& [l, c] : largest)
            kept[c] = 1;
        if (largest.size() == comp_label.size())
            return;

        // boundary counts from orphan components toward kept components
        std::vector<std::map<int, int>> contact(comp_label.size());
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const int c = comp[y * w + x];
                if (kept[c])
                    continue;
                const int nb[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
                for (const auto& q : nb) {
                    if (q[0] < 0 || q[1] < 0 || q[0] >= w || q[1] >= h)
                        continue;
                    const int d = comp[q[1] * w + q[0]];
                    if (kept[d])
                        ++contact[c][comp_label[d]];
                }
            }
        }
        std::vector<int> target(comp_label.size(), -1);
        for (std::size_t c = 0; c < comp_label.size(); ++c) {
            int best = -1;
            for (const auto& [l, count] : contact[c]) {
                if (best < 0 || count > contact[c][best])
                    best = l;
            }
            target[c] = best;
        }
        for (int p = 0; p < n; ++p) {
            const int t = target[comp[p]];
            if (t >= 0)
                labels(p / w, p % w) = t;
        }
    }
}

} // namespace detail

/// SLIC clustering in RGB+xy with seeds on a regular grid.
inline SuperpixelMap slic_segment(const cv::Mat3b& frame, const SlicOptions& options)
{
    const int w = frame.cols;
    const int h = frame.rows;
    if (w <= 0 || h <= 0)
        throw Error(Errc::invalid_argument, "empty frame");
    const int target = options.target_count > 0 ? options.target_count : default_superpixel_count(w, h);
    if (options.target_count < 0)
        throw Error(Errc::invalid_argument, "target_count must be >= 1");
    if (!(options.compactness > 0.0))
        throw Error(Errc::invalid_argument, "compactness must be > 0");
    if (target > w * h)
        throw Error(Errc::too_many_superpixels, "target count exceeds pixel count");

    const double step = std::sqrt(static_cast<double>(w) * h / target);
    const int nx = std::clamp(static_cast<int>(std::lround(w / step)), 1, w);
    const int ny = std::clamp(static_cast<int>(std::lround(h / step)), 1, h);
    const double cell_w = static_cast<double>(w) / nx;
    const double cell_h = static_cast<double>(h) / ny;
    const double s = std::sqrt(cell_w * cell_h);
    const double spatial_weight = (options.compactness / s) * (options.compactness / s);

    struct Center {
        double r, g, b, x, y;
    };
    std::vector<Center> centers;
    centers.reserve(static_cast<std::size_t>(nx) * ny);
    cv::Mat1i labels(h, w);
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const double cx = (i + 0.5) * cell_w;
            const double cy = (j + 0.5) * cell_h;
            const auto& px = frame(std::min(h - 1, static_cast<int>(cy)), std::min(w - 1, static_cast<int>(cx)));
            centers.push_back({double(px[2]), double(px[1]), double(px[0]), cx, cy});
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int i = std::min(nx - 1, static_cast<int>((x + 0.5) / cell_w));
            const int j = std::min(ny - 1, static_cast<int>((y + 0.5) / cell_h));
            labels(y, x) = j * nx + i;
        }
    }

    cv::Mat1d dist(h, w);
    const int k = static_cast<int>(centers.size());
    std::vector<double> acc(static_cast<std::size_t>(k) * 6);
    for (int iter = 0; iter < options.iterations; ++iter) {
        dist.setTo(std::numeric_limits<double>::infinity());
        for (int c = 0; c < k; ++c) {
            const Center& ct = centers[c];
            const int xa = std::max(0, static_cast<int>(std::floor(ct.x - cell_w)));
            const int xb = std::min(w - 1, static_cast<int>(std::ceil(ct.x + cell_w)));
            const int ya = std::max(0, static_cast<int>(std::floor(ct.y - cell_h)));
            const int yb = std::min(h - 1, static_cast<int>(std::ceil(ct.y + cell_h)));
            for (int y = ya; y <= yb; ++y) {
                const cv::Vec3b* row = frame.ptr<cv::Vec3b>(y);
                double* drow = dist.ptr<double>(y);
                int* lrow = labels.ptr<int>(y);
                const double dy = (y + 0.5) - ct.y;
                for (int x = xa; x <= xb; ++x) {
                    const double dr = row[x][2] - ct.r;
                    const double dg = row[x][1] - ct.g;
                    const double db = row[x][0] - ct.b;
                    const double dx = (x + 0.5) - ct.x;
                    const double d = dr * dr + dg * dg + db * db + spatial_weight * (dx * dx + dy * dy);
                    if (d < drow[x]) {
                        drow[x] = d;
                        lrow[x] = c;
                    }
                }
            }
        }

        std::fill(acc.begin(), acc.end(), 0.0);
        for (int y = 0; y < h; ++y) {
            const cv::Vec3b* row = frame.ptr<cv::Vec3b>(y);
            const int* lrow = labels.ptr<int>(y);
            for (int x = 0; x < w; ++x) {
                double* a = &acc[static_cast<std::size_t>(lrow[x]) * 6];
                a[0] += row[x][2];
                a[1] += row[x][1];
                a[2] += row[x][0];
                a[3] += x + 0.5;
                a[4] += y + 0.5;
                a[5] += 1.0;
            }
        }
        for (int c = 0; c < k; ++c) {
            const double* a = &acc[static_cast<std::size_t>(c) * 6];
            if (a[5] > 0)
                centers[c] = {a[0] / a[5], a[1] / a[5], a[2] / a[5], a[3] / a[5], a[4] / a[5]};
        }
    }

    detail::enforce_connectivity(labels);
    return detail::finalize_labels(std::move(labels));
}

inline SuperpixelMap slic_segment(const cv::Mat3b& frame, int target_count, double compactness = 10.0)
{
    if (target_count < 1)
        throw Error(Errc::invalid_argument, "target_count must be >= 1");
    return slic_segment(frame, SlicOptions{target_count, compactness, 10});
}

/// Wraps an existing label image (ids need not be contiguous) as a map.
/// Connectivity is not checked.
inline SuperpixelMap superpixel_map_from_labels(cv::Mat1i labels)
{
    return detail::finalize_labels(labels.clone());
}

inline AdjacencyGraph build_adjacency(const SuperpixelMap& map)
{
    AdjacencyGraph g;
    g.neighbors.resize(map.size());
    const int w = map.width();
    const int h = map.height();
    auto link = [&](int a, int b) {
        if (a != b) {
            g.neighbors[a].push_back(b);
            g.neighbors[b].push_back(a);
        }
    };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int l = map.labels(y, x);
            if (x + 1 < w)
                link(l, map.labels(y, x + 1));
            if (y + 1 < h)
                link(l, map.labels(y + 1, x));
        }
    }
    for (auto& n : g.neighbors) {
        std::sort(n.begin(), n.end());
        n.erase(std::unique(n.begin(), n.end()), n.end());
    }
    return g;
}

namespace detail {

inline int bin_of(unsigned char v, int bins) { return v * bins / 256; }

inline void normalize_histogram(Histogram& h, int count)
{
    for (double& v : h.values)
        v /= count;
}

} // namespace detail

inline Histogram rgb_histogram(const cv::Mat3b& frame, const SuperpixelMap& map, int superpixel, int bins_per_channel)
{
    if (bins_per_channel < 1)
        throw Error(Errc::invalid_argument, "bins_per_channel must be >= 1");
    if (frame.size() != map.labels.size())
        throw Error(Errc::dimension_mismatch, "frame and superpixel map differ in size");
    if (superpixel < 0 || superpixel >= map.size() || map.superpixels[superpixel].pixel_count == 0)
        throw Error(Errc::empty_region, "superpixel has no pixels");

    Histogram hist{bins_per_channel, std::vector<double>(3 * bins_per_channel, 0.0)};
    const cv::Rect box = map.superpixels[superpixel].bbox;
    int count = 0;
    for (int y = box.y; y < box.y + box.height; ++y) {
        for (int x = box.x; x < box.x + box.width; ++x) {
            if (map.labels(y, x) != superpixel)
                continue;
            const cv::Vec3b& px = frame(y, x);
            hist.values[detail::bin_of(px[2], bins_per_channel)] += 1.0;
            hist.values[bins_per_channel + detail::bin_of(px[1], bins_per_channel)] += 1.0;
            hist.values[2 * bins_per_channel + detail::bin_of(px[0], bins_per_channel)] += 1.0;
            ++count;
        }
    }
    detail::normalize_histogram(hist, count);
    return hist;
}

/// Histograms of every superpixel in one pass over the frame.
inline std::vector<Histogram> rgb_histograms(const cv::Mat3b& frame, const SuperpixelMap& map, int bins_per_channel)
{
    if (bins_per_channel < 1)
        throw Error(Errc::invalid_argument, "bins_per_channel must be >= 1");
    if (frame.size() != map.labels.size())
        throw Error(Errc::dimension_mismatch, "frame and superpixel map differ in size");
    std::vector<Histogram> out(map.size(), Histogram{bins_per_channel, std::vector<double>(3 * bins_per_channel, 0.0)});
    for (int y = 0; y < frame.rows; ++y) {
        const cv::Vec3b* row = frame.ptr<cv::Vec3b>(y);
        const int* lrow = map.labels.ptr<int>(y);
        for (int x = 0; x < frame.cols; ++x) {
            auto& v = out[lrow[x]].values;
            v[detail::bin_of(row[x][2], bins_per_channel)] += 1.0;
            v[bins_per_channel + detail::bin_of(row[x][1], bins_per_channel)] += 1.0;
            v[2 * bins_per_channel + detail::bin_of(row[x][0], bins_per_channel)] += 1.0;
        }
    }
    for (int i = 0; i < map.size(); ++i) {
        if (map.superpixels[i].pixel_count == 0)
            throw Error(Errc::empty_region, "superpixel has no pixels");
        detail::normalize_histogram(out[i], map.superpixels[i].pixel_count);
    }
    return out;
}

/// 0.5 * sum (a-b)^2 / (a+b), with empty bins contributing nothing.
inline double chi_square(const Histogram& a, const Histogram& b)
{
    if (a.values.size() != b.values.size())
        throw Error(Errc::shape_mismatch, "histogram bin counts differ");
    double d = 0.0;
    for (std::size_t k = 0; k < a.values.size(); ++k) {
        const double sum = a.values[k] + b.values[k];
        if (sum > 0.0) {
            const double diff = a.values[k] - b.values[k];
            d += diff * diff / sum;
        }
    }
    return 0.5 * d;
}

/// Debug export of the label image as a 16-bit grayscale PNG.
inline void write_label_png(const SuperpixelMap& map, const std::string& path)
{
    if (map.size() > 65536)
        throw Error(Errc::invalid_argument, "too many superpixels for a 16-bit label image");
    cv::Mat1w out;
    map.labels.convertTo(out, CV_16U);
    if (!cv::imwrite(path, out))
        throw Error(Errc::write_error, "cannot write " + path);
}

} // namespace clickseg
