#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace clickseg {

enum class Errc {
    no_frames,
    dimension_mismatch,
    decode_error,
    parse_error,
    range_error,
    write_error,
    too_many_superpixels,
    empty_region,
    shape_mismatch,
    not_submodular,
    negative_cost,
    need_more_frames,
    invalid_argument,
};

inline const char* to_string(Errc code)
{
    switch (code) {
    case Errc::no_frames: return "NoFrames";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::decode_error: return "DecodeError";
    case Errc::parse_error: return "ParseError";
    case Errc::range_error: return "RangeError";
    case Errc::write_error: return "WriteError";
    case Errc::too_many_superpixels: return "TooManySuperpixels";
    case Errc::empty_region: return "EmptyRegion";
    case Errc::shape_mismatch: return "ShapeMismatch";
    case Errc::not_submodular: return "NotSubmodular";
    case Errc::negative_cost: return "NegativeCost";
    case Errc::need_more_frames: return "NeedMoreFrames";
    case Errc::invalid_argument: return "InvalidArgument";
    }
    return "Unknown";
}

/// Every failure in the library surfaces as this exception. `line()` is set
/// for parse errors (1-based).
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what, std::optional<std::size_t> line = std::nullopt)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), line_(line)
    {
    }

    Errc code() const noexcept { return code_; }
    std::optional<std::size_t> line() const noexcept { return line_; }

private:
    Errc code_;
    std::optional<std::size_t> line_;
};

} // namespace clickseg
