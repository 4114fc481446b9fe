#pragma once

// Frame/mask directories and newline-delimited JSON click logs.

#include <clickseg/error.hpp>

#include <json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

namespace clickseg {

namespace fs = std::filesystem;

/// Frames in OpenCV's BGR channel order; index i is the i-th frame.
struct FrameSequence {
    std::vector<cv::Mat3b> frames;
    double frame_rate = 10.0;

    FrameSequence() = default;
    explicit FrameSequence(std::vector<cv::Mat3b> f, double rate = 10.0) : frames(std::move(f)), frame_rate(rate)
    {
        for (const auto& m : frames) {
            if (m.size() != frames.front().size())
                throw Error(Errc::dimension_mismatch, "frames differ in size");
        }
    }

    int size() const { return static_cast<int>(frames.size()); }
    bool empty() const { return frames.empty(); }
    int width() const { return frames.empty() ? 0 : frames.front().cols; }
    int height() const { return frames.empty() ? 0 : frames.front().rows; }
    const cv::Mat3b& operator[](int i) const { return frames[i]; }
};

/// Binary masks, 0 = background, 255 = foreground.
struct MaskSequence {
    std::vector<cv::Mat1b> masks;

    int size() const { return static_cast<int>(masks.size()); }
    bool empty() const { return masks.empty(); }
    const cv::Mat1b& operator[](int i) const { return masks[i]; }
    cv::Mat1b& operator[](int i) { return masks[i]; }
};

inline bool masks_equal(const cv::Mat1b& a, const cv::Mat1b& b)
{
    return a.size() == b.size() && cv::countNonZero(a != b) == 0;
}

inline bool operator==(const MaskSequence& a, const MaskSequence& b)
{
    if (a.size() != b.size())
        return false;
    for (int i = 0; i < a.size(); ++i) {
        if (!masks_equal(a[i], b[i]))
            return false;
    }
    return true;
}

struct Click {
    int frame_index = 0;
    int x = 0;
    int y = 0;
    std::string user_id;
    std::string level_id;
    std::optional<double> quality_score;    // absent until computed per user and level
    std::optional<std::int64_t> t_ms;       // client timestamp, informational
    nlohmann::json extra = nlohmann::json::object(); // unknown fields, kept on rewrite

    double quality() const { return quality_score.value_or(1.0); }

    friend bool operator==(const Click& a, const Click& b)
    {
        return a.frame_index == b.frame_index && a.x == b.x && a.y == b.y && a.user_id == b.user_id &&
               a.level_id == b.level_id && a.quality_score == b.quality_score && a.t_ms == b.t_ms &&
               a.extra == b.extra;
    }
};

struct ClickLog {
    std::vector<Click> clicks;
    std::string provenance;

    std::size_t size() const { return clicks.size(); }

    void sort_by_frame_and_user()
    {
        std::stable_sort(clicks.begin(), clicks.end(), [](const Click& a, const Click& b) {
            return std::tie(a.frame_index, a.user_id) < std::tie(b.frame_index, b.user_id);
        });
    }
};

inline nlohmann::json to_json(const Click& c)
{
    nlohmann::json j = c.extra.is_object() ? c.extra : nlohmann::json::object();
    j["user"] = c.user_id;
    j["level"] = c.level_id;
    j["frame"] = c.frame_index;
    j["x"] = c.x;
    j["y"] = c.y;
    if (c.quality_score)
        j["quality"] = *c.quality_score;
    if (c.t_ms)
        j["t_ms"] = *c.t_ms;
    return j;
}

inline std::string to_record(const Click& c) { return to_json(c).dump() + "\n"; }

/// Parses one record; `line` is used for error reporting only.
inline Click parse_click(const std::string& text, std::size_t line)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(Errc::parse_error, "line " + std::to_string(line) + ": " + e.what(), line);
    }
    if (!j.is_object())
        throw Error(Errc::parse_error, "line " + std::to_string(line) + ": record is not an object", line);

    auto fail = [&](const std::string& what) {
        throw Error(Errc::parse_error, "line " + std::to_string(line) + ": " + what, line);
    };
    auto take_int = [&](const char* key) -> long long {
        auto it = j.find(key);
        if (it == j.end())
            fail(std::string("missing field '") + key + "'");
        if (!it->is_number_integer())
            fail(std::string("field '") + key + "' is not an integer");
        return it->get<long long>();
    };
    auto take_string = [&](const char* key) -> std::string {
        auto it = j.find(key);
        if (it == j.end())
            fail(std::string("missing field '") + key + "'");
        if (!it->is_string())
            fail(std::string("field '") + key + "' is not a string");
        return it->get<std::string>();
    };

    Click c;
    c.user_id = take_string("user");
    c.level_id = take_string("level");
    const long long frame = take_int("frame");
    if (frame < 0 || frame > INT32_MAX)
        fail("frame index out of range");
    c.frame_index = static_cast<int>(frame);
    const long long x = take_int("x");
    const long long y = take_int("y");
    if (x < INT32_MIN || x > INT32_MAX || y < INT32_MIN || y > INT32_MAX)
        fail("coordinate overflow");
    c.x = static_cast<int>(x);
    c.y = static_cast<int>(y);
    if (auto it = j.find("quality"); it != j.end()) {
        if (!it->is_number())
            fail("field 'quality' is not a number");
        const double q = it->get<double>();
        if (!(q >= 0.0 && q <= 1.0))
            fail("quality outside [0, 1]");
        c.quality_score = q;
    }
    if (auto it = j.find("t_ms"); it != j.end()) {
        if (!it->is_number_integer())
            fail("field 't_ms' is not an integer");
        c.t_ms = it->get<std::int64_t>();
    }
    for (const char* key : {"user", "level", "frame", "x", "y", "quality", "t_ms"})
        j.erase(key);
    c.extra = std::move(j);
    return c;
}

inline ClickLog read_click_log(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(Errc::decode_error, "cannot open click log " + path);
    ClickLog log;
    log.provenance = path;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        log.clicks.push_back(parse_click(text, line));
    }
    return log;
}

/// Throws RangeError for clicks outside a width x height x n_frames volume.
inline void check_click_bounds(const ClickLog& log, int width, int height, int n_frames)
{
    for (std::size_t i = 0; i < log.clicks.size(); ++i) {
        const Click& c = log.clicks[i];
        if (c.x < 0 || c.y < 0 || c.x >= width || c.y >= height || c.frame_index >= n_frames)
            throw Error(Errc::range_error, "click " + std::to_string(i) + " outside the sequence");
    }
}

namespace detail {

struct FileDescriptor {
    int fd = -1;
    explicit FileDescriptor(int f) : fd(f) {}
    FileDescriptor(const FileDescriptor&) = delete;
    FileDescriptor& operator=(const FileDescriptor&) = delete;
    ~FileDescriptor()
    {
        if (fd >= 0)
            ::close(fd);
    }
};

} // namespace detail

/// Appends records with one write() and an fsync. On failure the file is
/// truncated back to its previous length, so no partial record survives.
/// Callers serialize appends to the same file.
inline std::size_t append_clicks(const std::string& path, const std::vector<Click>& clicks)
{
    if (clicks.empty())
        return 0;
    std::string buffer;
    for (const auto& c : clicks)
        buffer += to_record(c);

    detail::FileDescriptor f(::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644));
    if (f.fd < 0)
        throw Error(Errc::write_error, "cannot open " + path + ": " + std::strerror(errno));
    struct stat st{};
    if (::fstat(f.fd, &st) != 0)
        throw Error(Errc::write_error, "cannot stat " + path);
    const off_t before = st.st_size;

    std::size_t written = 0;
    while (written < buffer.size()) {
        const ssize_t n = ::write(f.fd, buffer.data() + written, buffer.size() - written);
        if (n < 0 && errno == EINTR)
            continue;
        if (n <= 0) {
            const int err = errno;
            if (::ftruncate(f.fd, before) != 0) {
                // nothing more to do; the error below reports the original failure
            }
            throw Error(Errc::write_error, "write to " + path + " failed: " + std::strerror(err));
        }
        written += static_cast<std::size_t>(n);
    }
    if (::fsync(f.fd) != 0)
        throw Error(Errc::write_error, "fsync of " + path + " failed");
    return clicks.size();
}

/// Replaces the whole log atomically (temp file + rename).
inline void write_click_log(const std::string& path, const ClickLog& log)
{
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out)
            throw Error(Errc::write_error, "cannot open " + tmp);
        for (const auto& c : log.clicks)
            out << to_record(c);
        out.flush();
        if (!out)
            throw Error(Errc::write_error, "short write to " + tmp);
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec)
        throw Error(Errc::write_error, "cannot replace " + path + ": " + ec.message());
}

/// Stamps every click of (user, level) with its computed quality.
inline std::size_t stamp_quality(ClickLog& log, const std::string& user, const std::string& level, double quality)
{
    std::size_t n = 0;
    for (auto& c : log.clicks) {
        if (c.user_id == user && c.level_id == level) {
            c.quality_score = quality;
            ++n;
        }
    }
    return n;
}

namespace detail {

inline std::vector<std::pair<long long, fs::path>> numbered_images(const std::string& dir)
{
    std::error_code ec;
    if (!fs::is_directory(dir, ec))
        throw Error(Errc::no_frames, "not a directory: " + dir);
    std::vector<std::pair<long long, fs::path>> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file())
            continue;
        const auto stem = entry.path().stem().string();
        auto ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
        if (stem.empty() || stem.size() > 12 || !std::all_of(stem.begin(), stem.end(), ::isdigit))
            continue;
        if (ext != ".png" && ext != ".jpg" && ext != ".jpeg" && ext != ".bmp" && ext != ".ppm" && ext != ".pgm")
            continue;
        files.emplace_back(std::stoll(stem), entry.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

inline std::string frame_filename(int index, int count)
{
    const int digits = std::max(3, static_cast<int>(std::to_string(std::max(0, count - 1)).size()));
    std::string s = std::to_string(index);
    return std::string(static_cast<std::size_t>(std::max(0, digits - static_cast<int>(s.size()))), '0') + s + ".png";
}

} // namespace detail

inline FrameSequence load_frame_sequence(const std::string& dir, double frame_rate = 10.0)
{
    const auto files = detail::numbered_images(dir);
    if (files.empty())
        throw Error(Errc::no_frames, "no numbered frames in " + dir);
    std::vector<cv::Mat3b> frames;
    frames.reserve(files.size());
    for (const auto& [index, path] : files) {
        cv::Mat img = cv::imread(path.string(), cv::IMREAD_COLOR);
        if (img.empty())
            throw Error(Errc::decode_error, "cannot decode " + path.string());
        if (!frames.empty() && img.size() != frames.front().size())
            throw Error(Errc::dimension_mismatch, path.string() + " differs in size from the first frame");
        frames.emplace_back(img);
    }
    return FrameSequence(std::move(frames), frame_rate);
}

inline void write_frame_sequence(const FrameSequence& seq, const std::string& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw Error(Errc::write_error, "cannot create " + dir + ": " + ec.message());
    for (int i = 0; i < seq.size(); ++i) {
        const auto path = (fs::path(dir) / detail::frame_filename(i, seq.size())).string();
        if (!cv::imwrite(path, seq[i]))
            throw Error(Errc::write_error, "cannot write " + path);
    }
}

/// Any non-zero pixel reads back as foreground.
inline MaskSequence read_mask_sequence(const std::string& dir)
{
    const auto files = detail::numbered_images(dir);
    if (files.empty())
        throw Error(Errc::no_frames, "no numbered masks in " + dir);
    MaskSequence out;
    for (const auto& [index, path] : files) {
        cv::Mat img = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
        if (img.empty())
            throw Error(Errc::decode_error, "cannot decode " + path.string());
        if (!out.empty() && img.size() != out[0].size())
            throw Error(Errc::dimension_mismatch, path.string() + " differs in size from the first mask");
        cv::Mat1b m = img != 0;
        out.masks.push_back(m);
    }
    return out;
}

inline void write_mask_sequence(const MaskSequence& masks, const std::string& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw Error(Errc::write_error, "cannot create " + dir + ": " + ec.message());
    for (int i = 0; i < masks.size(); ++i) {
        if (!masks.empty() && masks[i].size() != masks[0].size())
            throw Error(Errc::dimension_mismatch, "masks differ in size");
        cv::Mat1b binary = masks[i] != 0;
        const auto path = (fs::path(dir) / detail::frame_filename(i, masks.size())).string();
        if (!cv::imwrite(path, binary))
            throw Error(Errc::write_error, "cannot write " + path);
    }
}

} // namespace clickseg
