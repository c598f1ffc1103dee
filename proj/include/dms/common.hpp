#pragma once

#include <charconv>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>

namespace dms {

using VehicleId = std::uint32_t;

enum class TurnSignal : std::uint8_t { off = 0, left = 1, right = 2 };
enum class Direction : std::uint8_t { left = 1, right = 2 };

inline TurnSignal to_signal(Direction d) {
  return d == Direction::left ? TurnSignal::left : TurnSignal::right;
}

inline const char* to_string(TurnSignal s) {
  switch (s) {
    case TurnSignal::off: return "off";
    case TurnSignal::left: return "left";
    case TurnSignal::right: return "right";
  }
  return "?";
}

inline const char* to_string(Direction d) { return d == Direction::left ? "left" : "right"; }

inline std::optional<TurnSignal> parse_turn_signal(std::string_view s) {
  if (s == "off") return TurnSignal::off;
  if (s == "left") return TurnSignal::left;
  if (s == "right") return TurnSignal::right;
  return std::nullopt;
}

// Lane-change intent raised from the HV turn signal.
struct LaneChangeIntent {
  VehicleId hv_id{};
  Direction direction{Direction::left};
  std::uint64_t detected_at_ms{};
};

// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
  double v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

template <class Int>
std::optional<Int> parse_int(std::string_view s) {
  Int v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// Portable uniform [0, 1) from 53 random bits; std distributions differ across stdlibs.
template <class Engine>
double uniform01(Engine& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

}  // namespace dms
