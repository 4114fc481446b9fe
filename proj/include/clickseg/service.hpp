#pragma once

// HTTP game service: levels, sessions, blurred frames, click ingestion,
// scoring, leaderboard and score segmentations.

#include <clickseg/error.hpp>
#include <clickseg/game.hpp>
#include <clickseg/media.hpp>
#include <clickseg/temporal.hpp>

#include <httplib.h>
#include <json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace clickseg {

/// Milliseconds on a monotonic clock; replaceable in tests.
using Clock = std::function<std::int64_t()>;

inline std::int64_t steady_now_ms()
{
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

struct ServiceConfig {
    std::string click_log = "clicks.jsonl";
    std::string static_dir;                 // webgame bundle, optional
    std::int64_t level_duration_ms = level_duration_s * 1000;
    std::int64_t session_ttl_ms = 3600 * 1000;
    double max_blur_radius = 8.0;
    std::uint64_t seed = 0;                 // level-order permutations
    std::optional<std::uint64_t> token_seed; // fixed token stream, tests only
    Clock clock = steady_now_ms;
    Params params;                          // used by segmentation refresh
};

struct LevelInfo {
    std::string id;
    std::shared_ptr<const FrameSequence> frames;
    std::shared_ptr<const ScoreSegmentation> segmentation;
};

struct Session {
    std::string token;
    std::string session_id; // public id written to the click log
    std::string user;
    std::string level;
    std::string game;
    int level_index = 1;
    std::int64_t started_ms = 0;
    bool completed = false;
    SessionState state;
};

struct LeaderboardEntry {
    std::string user;
    std::int64_t best = 0;
    int games = 0;
    std::uint64_t achieved_at = 0; // order in which the best score was reached
};

struct HttpReply {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

namespace detail {

inline std::string random_hex(std::mt19937_64& rng, int bytes)
{
    static const char* digits = "0123456789abcdef";
    std::string s;
    for (int i = 0; i < bytes; ++i) {
        const auto b = static_cast<unsigned>(rng() & 0xff);
        s += digits[b >> 4];
        s += digits[b & 15];
    }
    return s;
}

inline HttpReply json_reply(int status, const nlohmann::json& j)
{
    return {status, j.dump(), "application/json"};
}

inline HttpReply error_reply(int status, const std::string& message)
{
    return {status, nlohmann::json{{"error", message}}.dump(), "application/json"};
}

inline std::string encode_png(const cv::Mat& img)
{
    std::vector<unsigned char> buf;
    if (!cv::imencode(".png", img, buf))
        throw Error(Errc::write_error, "png encoding failed");
    return {buf.begin(), buf.end()};
}

/// Box blur of radius r applied three times (a Gaussian approximation).
inline cv::Mat3b triple_box_blur(const cv::Mat3b& img, int r)
{
    if (r <= 0)
        return img.clone();
    cv::Mat3b out = img.clone();
    for (int i = 0; i < 3; ++i)
        cv::blur(out, out, cv::Size(2 * r + 1, 2 * r + 1), cv::Point(-1, -1), cv::BORDER_REFLECT);
    return out;
}

} // namespace detail

/// Per-pixel blur with radius max_radius * weight, interpolated between
/// integer-radius triple box blurs.
inline cv::Mat3b modulated_blur(const cv::Mat3b& frame, const cv::Mat1d& weight, double max_radius)
{
    if (weight.size() != frame.size())
        throw Error(Errc::dimension_mismatch, "blur map and frame differ in size");
    const int levels = static_cast<int>(std::ceil(max_radius));
    std::vector<cv::Mat3b> blurred;
    for (int r = 0; r <= levels; ++r)
        blurred.push_back(detail::triple_box_blur(frame, r));
    cv::Mat3b out(frame.size());
    for (int y = 0; y < frame.rows; ++y) {
        for (int x = 0; x < frame.cols; ++x) {
            const double r = std::clamp(weight(y, x), 0.0, 1.0) * max_radius;
            const int r0 = std::min(levels, static_cast<int>(std::floor(r)));
            const int r1 = std::min(levels, r0 + 1);
            const double f = r - r0;
            const cv::Vec3b a = blurred[r0](y, x);
            const cv::Vec3b b = blurred[r1](y, x);
            for (int c = 0; c < 3; ++c)
                out(y, x)[c] = cv::saturate_cast<unsigned char>((1.0 - f) * a[c] + f * b[c]);
        }
    }
    return out;
}

/// Replays a session's clicks from a fresh state.
inline SessionState replay_session(const std::vector<Click>& clicks, const ScoreSegmentation& seg,
                                   const std::string& user = "")
{
    SessionState s;
    s.user_id = user;
    for (const auto& c : clicks)
        s = apply_click(s, c, seg).state;
    return s;
}

/// All service state; the HTTP layer below is a thin adapter.
class GameService {
public:
    explicit GameService(ServiceConfig config)
        : config_(std::move(config)), rng_(config_.token_seed ? *config_.token_seed : std::random_device{}())
    {
        if (!config_.clock)
            config_.clock = steady_now_ms;
    }

    ~GameService()
    {
        std::lock_guard lock(refresh_mutex_);
        for (auto& t : refreshers_) {
            if (t.joinable())
                t.join();
        }
    }

    GameService(const GameService&) = delete;
    GameService& operator=(const GameService&) = delete;

    const ServiceConfig& config() const { return config_; }

    /// Score segmentation defaults to the motion bootstrap.
    void add_level(const std::string& id, FrameSequence frames, std::optional<ScoreSegmentation> seg = std::nullopt)
    {
        if (frames.empty())
            throw Error(Errc::no_frames, "level " + id + " has no frames");
        auto f = std::make_shared<const FrameSequence>(std::move(frames));
        auto s = seg ? std::make_shared<const ScoreSegmentation>(std::move(*seg))
                     : std::make_shared<const ScoreSegmentation>(bootstrap_segmentation(*f));
        if (s->size() != f->size() || s->width() != f->width() || s->height() != f->height())
            throw Error(Errc::shape_mismatch, "segmentation of level " + id + " does not match its frames");
        std::lock_guard lock(mutex_);
        if (levels_.count(id))
            throw Error(Errc::invalid_argument, "duplicate level " + id);
        levels_[id] = LevelInfo{id, std::move(f), std::move(s)};
        level_order_.push_back(id);
    }

    /// Levels from <root>/<id>/frames, with <root>/<id>/segmentation used as
    /// the score segmentation when present.
    void load_levels(const std::string& root)
    {
        std::vector<fs::path> dirs;
        for (const auto& e : fs::directory_iterator(root)) {
            if (e.is_directory() && fs::is_directory(e.path() / "frames"))
                dirs.push_back(e.path());
        }
        std::sort(dirs.begin(), dirs.end());
        for (const auto& d : dirs) {
            auto frames = load_frame_sequence((d / "frames").string());
            std::optional<ScoreSegmentation> seg;
            if (fs::is_directory(d / "segmentation"))
                seg = ScoreSegmentation(read_mask_sequence((d / "segmentation").string()));
            add_level(d.filename().string(), std::move(frames), std::move(seg));
        }
    }

    /// Previously persisted clicks feed the inhibition-of-return maps.
    void load_click_history()
    {
        if (!fs::exists(config_.click_log))
            return;
        const ClickLog log = read_click_log(config_.click_log);
        std::lock_guard lock(mutex_);
        for (const auto& c : log.clicks)
            level_clicks_[c.level_id].push_back(c);
    }

    std::shared_ptr<const ScoreSegmentation> segmentation(const std::string& level) const
    {
        std::lock_guard lock(mutex_);
        auto it = levels_.find(level);
        return it == levels_.end() ? nullptr : it->second.segmentation;
    }

    void publish_segmentation(const std::string& level, ScoreSegmentation seg)
    {
        auto s = std::make_shared<const ScoreSegmentation>(std::move(seg));
        std::lock_guard lock(mutex_);
        auto it = levels_.find(level);
        if (it == levels_.end())
            throw Error(Errc::invalid_argument, "unknown level " + level);
        if (s->size() != it->second.frames->size())
            throw Error(Errc::shape_mismatch, "segmentation length does not match level " + level);
        it->second.segmentation = std::move(s);
    }

    /// Runs the segmentation pipeline on every click of the level and swaps
    /// the result in.
    void refresh_segmentation(const std::string& level)
    {
        std::shared_ptr<const FrameSequence> frames;
        ClickLog log;
        {
            std::lock_guard lock(mutex_);
            auto it = levels_.find(level);
            if (it == levels_.end())
                throw Error(Errc::invalid_argument, "unknown level " + level);
            frames = it->second.frames;
            auto c = level_clicks_.find(level);
            if (c != level_clicks_.end())
                log.clicks = c->second;
        }
        PipelineOptions opt;
        opt.params = config_.params;
        publish_segmentation(level, ScoreSegmentation(segment_sequence(*frames, log, opt).masks));
    }

    void refresh_segmentation_async(const std::string& level)
    {
        std::lock_guard lock(refresh_mutex_);
        refreshers_.emplace_back([this, level] {
            try {
                refresh_segmentation(level);
            } catch (const std::exception&) {
                // the previous segmentation stays published
            }
        });
    }

    HttpReply list_levels(const std::optional<std::string>& token) const
    {
        std::lock_guard lock(mutex_);
        std::vector<std::string> order = level_order_;
        if (token) {
            auto it = sessions_.find(*token);
            if (it == sessions_.end())
                return detail::error_reply(401, "unknown session");
            std::mt19937_64 rng(config_.seed ^ std::hash<std::string>{}(it->second.session_id));
            std::shuffle(order.begin(), order.end(), rng);
        }
        nlohmann::json out = nlohmann::json::array();
        for (const auto& id : order) {
            const auto& l = levels_.at(id);
            out.push_back({{"id", id},
                           {"frames", l.frames->size()},
                           {"width", l.frames->width()},
                           {"height", l.frames->height()},
                           {"frame_rate", l.frames->frame_rate},
                           {"duration_s", config_.level_duration_ms / 1000.0}});
        }
        return detail::json_reply(200, out);
    }

    HttpReply create_session(const nlohmann::json& body)
    {
        if (!body.is_object() || !body.contains("user") || !body["user"].is_string() || body["user"].get<std::string>().empty())
            return detail::error_reply(400, "user is required");
        if (!body.contains("level") || !body["level"].is_string())
            return detail::error_reply(400, "level is required");
        int level_index = 1;
        if (body.contains("level_index")) {
            if (!body["level_index"].is_number_integer() || body["level_index"].get<int>() < 1)
                return detail::error_reply(400, "level_index must be an integer >= 1");
            level_index = body["level_index"].get<int>();
        }
        std::lock_guard lock(mutex_);
        const std::string level = body["level"].get<std::string>();
        if (!levels_.count(level))
            return detail::error_reply(404, "unknown level " + level);
        Session s;
        s.token = detail::random_hex(rng_, 16);
        s.session_id = detail::random_hex(rng_, 8);
        s.user = body["user"].get<std::string>();
        s.level = level;
        s.level_index = level_index;
        s.game = body.contains("game") && body["game"].is_string() ? body["game"].get<std::string>() : s.session_id;
        s.started_ms = config_.clock();
        s.state.user_id = s.user;
        sessions_[s.token] = s;
        return detail::json_reply(200, {{"token", s.token},
                                        {"session", s.session_id},
                                        {"game", s.game},
                                        {"level", level},
                                        {"level_index", level_index},
                                        {"required", required_points(level_index)}});
    }

    HttpReply get_frame(const std::string& level, int index, const std::optional<std::string>& token) const
    {
        std::shared_ptr<const FrameSequence> frames;
        std::vector<Click> clicks;
        {
            std::lock_guard lock(mutex_);
            if (!token || !valid_token(*token))
                return detail::error_reply(401, "unknown or expired session");
            auto it = levels_.find(level);
            if (it == levels_.end())
                return detail::error_reply(404, "unknown level " + level);
            frames = it->second.frames;
            if (index < 0 || index >= frames->size())
                return detail::error_reply(404, "no frame " + std::to_string(index));
            auto c = level_clicks_.find(level);
            if (c != level_clicks_.end()) {
                for (const auto& k : c->second) {
                    if (k.frame_index == index)
                        clicks.push_back(k);
                }
            }
        }
        const cv::Mat3b& frame = (*frames)[index];
        if (clicks.empty())
            return {200, detail::encode_png(frame), "image/png"};
        const cv::Mat1d w = ior_blur_map(clicks, index, frame.cols, frame.rows);
        return {200, detail::encode_png(modulated_blur(frame, w, config_.max_blur_radius)), "image/png"};
    }

    /// Scores a click and persists it before answering.
    HttpReply post_click(const std::optional<std::string>& token, const nlohmann::json& body)
    {
        std::lock_guard write(writer_mutex_);
        std::unique_lock lock(mutex_);
        if (!token)
            return detail::error_reply(401, "missing session");
        auto it = sessions_.find(*token);
        if (it == sessions_.end() || expired(it->second))
            return detail::error_reply(401, "unknown or expired session");
        Session& s = it->second;
        for (const char* f : {"frame", "x", "y"}) {
            if (!body.is_object() || !body.contains(f) || !body[f].is_number_integer())
                return detail::error_reply(400, std::string("integer field '") + f + "' is required");
        }
        const auto& level = levels_.at(s.level);
        const int frame = body["frame"].get<int>();
        const int x = body["x"].get<int>();
        const int y = body["y"].get<int>();
        if (frame < 0 || frame >= level.frames->size() || x < 0 || y < 0 || x >= level.frames->width() ||
            y >= level.frames->height())
            return detail::error_reply(400, "click outside the level");
        const std::int64_t now = config_.clock();
        if (s.completed || now - s.started_ms > config_.level_duration_ms)
            return detail::error_reply(409, "level time is over");

        Click c;
        c.frame_index = frame;
        c.x = x;
        c.y = y;
        c.user_id = s.user;
        c.level_id = s.level;
        if (body.contains("t_ms") && body["t_ms"].is_number_integer())
            c.t_ms = body["t_ms"].get<std::int64_t>();
        c.extra["session"] = s.session_id;
        const auto seg = level.segmentation;
        const ClickResult r = apply_click(s.state, c, *seg);

        lock.unlock();
        try {
            append_clicks(config_.click_log, {c});
        } catch (const Error& e) {
            return detail::error_reply(503, std::string("click not stored: ") + e.what());
        }
        lock.lock();
        auto again = sessions_.find(*token);
        if (again != sessions_.end())
            again->second.state = r.state;
        level_clicks_[c.level_id].push_back(c);
        return detail::json_reply(200, {{"delta", r.delta},
                                        {"score", r.state.score},
                                        {"hit", r.outcome.kind == HitKind::hit},
                                        {"outcome", r.outcome.kind == HitKind::hit         ? "hit"
                                                    : r.outcome.kind == HitKind::near_miss ? "near_miss"
                                                                                           : "far_miss"}});
    }

    HttpReply complete_level(const std::string& level, const std::optional<std::string>& token)
    {
        std::lock_guard write(writer_mutex_);
        std::unique_lock lock(mutex_);
        if (!token)
            return detail::error_reply(401, "missing session");
        auto it = sessions_.find(*token);
        if (it == sessions_.end() || expired(it->second))
            return detail::error_reply(401, "unknown or expired session");
        Session& s = it->second;
        if (s.level != level)
            return detail::error_reply(404, "session is not playing level " + level);
        const std::int64_t required = required_points(s.level_index);
        const std::int64_t achieved = s.state.score;
        if (!s.completed) {
            s.completed = true;
            game_scores_[s.game] += achieved;
            record_score(s.user, s.game, game_scores_[s.game]);
        }
        const auto seg = levels_.at(level).segmentation;
        const std::string user = s.user;
        lock.unlock();

        // rewrite the log with this user's quality for the level
        double quality = 1.0;
        try {
            if (fs::exists(config_.click_log)) {
                ClickLog log = read_click_log(config_.click_log);
                quality = restamp_quality(log, user, level, *seg);
                write_click_log(config_.click_log, log);
            }
        } catch (const Error& e) {
            return detail::error_reply(503, std::string("quality update failed: ") + e.what());
        }
        return detail::json_reply(200, {{"passed", achieved >= required},
                                        {"required", required},
                                        {"achieved", achieved},
                                        {"quality", quality}});
    }

    std::vector<LeaderboardEntry> leaderboard() const
    {
        std::lock_guard lock(mutex_);
        std::vector<LeaderboardEntry> out;
        for (const auto& [user, e] : board_)
            out.push_back(e);
        std::sort(out.begin(), out.end(), [](const LeaderboardEntry& a, const LeaderboardEntry& b) {
            return a.best != b.best ? a.best > b.best : a.achieved_at < b.achieved_at;
        });
        return out;
    }

    HttpReply leaderboard_reply(bool csv) const
    {
        const auto board = leaderboard();
        if (csv) {
            std::ostringstream s;
            s << "user,best_score,games_played\n";
            for (const auto& e : board)
                s << e.user << ',' << e.best << ',' << e.games << '\n';
            return {200, s.str(), "text/csv"};
        }
        nlohmann::json out = nlohmann::json::array();
        for (const auto& e : board)
            out.push_back({{"user", e.user}, {"best", e.best}, {"games", e.games}});
        return detail::json_reply(200, out);
    }

    HttpReply get_segmentation(const std::string& level, int index) const
    {
        const auto seg = segmentation(level);
        if (!seg)
            return detail::error_reply(404, "unknown level " + level);
        if (index < 0 || index >= seg->size())
            return detail::error_reply(404, "no frame " + std::to_string(index));
        return {200, detail::encode_png(seg->mask(index)), "image/png"};
    }

    std::optional<Session> session(const std::string& token) const
    {
        std::lock_guard lock(mutex_);
        auto it = sessions_.find(token);
        if (it == sessions_.end())
            return std::nullopt;
        return it->second;
    }

private:
    bool expired(const Session& s) const { return config_.clock() - s.started_ms > config_.session_ttl_ms; }

    bool valid_token(const std::string& token) const
    {
        auto it = sessions_.find(token);
        return it != sessions_.end() && !expired(it->second);
    }

    void record_score(const std::string& user, const std::string& game, std::int64_t total)
    {
        auto& e = board_[user];
        e.user = user;
        auto& games = user_games_[user];
        if (std::find(games.begin(), games.end(), game) == games.end())
            games.push_back(game);
        e.games = static_cast<int>(games.size());
        if (e.achieved_at == 0 || total > e.best) {
            e.best = total;
            e.achieved_at = ++achievement_counter_;
        }
    }

    ServiceConfig config_;
    mutable std::mutex mutex_;
    std::mutex writer_mutex_; // single writer of the click log
    std::mt19937_64 rng_;
    std::map<std::string, LevelInfo> levels_;
    std::vector<std::string> level_order_;
    std::map<std::string, Session> sessions_;
    std::map<std::string, std::vector<Click>> level_clicks_;
    std::map<std::string, std::int64_t> game_scores_;
    std::map<std::string, LeaderboardEntry> board_;
    std::map<std::string, std::vector<std::string>> user_games_;
    std::uint64_t achievement_counter_ = 0;
    std::mutex refresh_mutex_;
    std::vector<std::thread> refreshers_;
};

namespace detail {

inline std::optional<std::string> session_token(const httplib::Request& req, const nlohmann::json& body)
{
    if (req.has_header("X-Session"))
        return req.get_header_value("X-Session");
    if (req.has_param("session"))
        return req.get_param_value("session");
    if (body.is_object() && body.contains("session") && body["session"].is_string())
        return body["session"].get<std::string>();
    return std::nullopt;
}

inline void send(httplib::Response& res, const HttpReply& r)
{
    res.status = r.status;
    res.set_content(r.body, r.content_type);
}

inline std::optional<int> parse_index(const std::string& s)
{
    try {
        std::size_t used = 0;
        const int v = std::stoi(s, &used);
        if (used != s.size())
            return std::nullopt;
        return v;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

} // namespace detail

/// Registers the /api/v1 routes (and the static mount) on `server`.
inline void install_routes(httplib::Server& server, GameService& service)
{
    using detail::send;
    const auto parse_body = [](const httplib::Request& req) -> std::optional<nlohmann::json> {
        if (req.body.empty())
            return nlohmann::json::object();
        try {
            return nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::exception&) {
            return std::nullopt;
        }
    };

    server.Get("/api/v1/levels", [&](const httplib::Request& req, httplib::Response& res) {
        send(res, service.list_levels(detail::session_token(req, nlohmann::json())));
    });
    server.Post("/api/v1/sessions", [&, parse_body](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        send(res, body ? service.create_session(*body) : detail::error_reply(400, "malformed JSON"));
    });
    server.Get(R"(/api/v1/levels/([^/]+)/frames/([^/]+))", [&](const httplib::Request& req, httplib::Response& res) {
        const auto n = detail::parse_index(req.matches[2]);
        if (!n)
            return send(res, detail::error_reply(404, "bad frame index"));
        send(res, service.get_frame(req.matches[1], *n, detail::session_token(req, nlohmann::json())));
    });
    server.Post("/api/v1/clicks", [&, parse_body](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        if (!body)
            return send(res, detail::error_reply(400, "malformed JSON"));
        send(res, service.post_click(detail::session_token(req, *body), *body));
    });
    server.Post(R"(/api/v1/levels/([^/]+)/complete)",
                [&, parse_body](const httplib::Request& req, httplib::Response& res) {
                    const auto body = parse_body(req);
                    if (!body)
                        return send(res, detail::error_reply(400, "malformed JSON"));
                    send(res, service.complete_level(req.matches[1], detail::session_token(req, *body)));
                });
    server.Get("/api/v1/leaderboard", [&](const httplib::Request& req, httplib::Response& res) {
        send(res, service.leaderboard_reply(req.get_param_value("format") == "csv"));
    });
    server.Get(R"(/api/v1/levels/([^/]+)/segmentation/([^/]+))",
               [&](const httplib::Request& req, httplib::Response& res) {
                   const auto n = detail::parse_index(req.matches[2]);
                   if (!n)
                       return send(res, detail::error_reply(404, "bad frame index"));
                   send(res, service.get_segmentation(req.matches[1], *n));
               });
    server.Post(R"(/api/v1/levels/([^/]+)/segmentation/refresh)",
                [&](const httplib::Request& req, httplib::Response& res) {
                    if (!service.segmentation(req.matches[1]))
                        return send(res, detail::error_reply(404, "unknown level"));
                    service.refresh_segmentation_async(req.matches[1]);
                    send(res, detail::json_reply(202, {{"refreshing", std::string(req.matches[1])}}));
                });
    if (!service.config().static_dir.empty() && fs::is_directory(service.config().static_dir))
        server.set_mount_point("/", service.config().static_dir);
}

} // namespace clickseg
