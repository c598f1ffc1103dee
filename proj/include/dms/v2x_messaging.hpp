#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dms/common.hpp"

namespace dms {

class MalformedMessage : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Basic Safety Message; field set follows the J2735 core data frame loosely.
struct Bsm {
  VehicleId sender_id{};
  std::uint64_t timestamp_ms{};
  double x{};
  double y{};
  double heading{};
  double speed{};
  double yaw_rate{};
  double accel{};
  TurnSignal turn_signal{TurnSignal::off};

  friend bool operator==(const Bsm&, const Bsm&) = default;
};

enum class AppType : std::uint8_t {
  lane_change = 0,
  stop_sign_row = 1,
  slow_traffic = 2,
  tailgating = 3,
  late_green = 4,
};

// Driver Intent Message, unicast from the HV to one target.
struct Dim {
  VehicleId sender_id{};
  VehicleId target_id{};
  AppType app_type{AppType::lane_change};
  Direction direction{Direction::left};
  std::uint64_t timestamp_ms{};

  friend bool operator==(const Dim&, const Dim&) = default;
};

constexpr std::size_t kBsmWireSize = 4 + 8 + 6 * 8 + 1;
constexpr std::size_t kDimWireSize = 4 + 4 + 1 + 1 + 8;

namespace wire {

template <class UInt>
void put(std::vector<std::uint8_t>& out, UInt v) {
  for (std::size_t i = 0; i < sizeof(UInt); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) { put(out, std::bit_cast<std::uint64_t>(v)); }

template <class UInt>
UInt get(std::span<const std::uint8_t> in, std::size_t& off) {
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(static_cast<UInt>(in[off + i]) << (8 * i));
  off += sizeof(UInt);
  return v;
}

inline double get_f64(std::span<const std::uint8_t> in, std::size_t& off) {
  return std::bit_cast<double>(get<std::uint64_t>(in, off));
}

}  // namespace wire

// Little-endian: id u32, timestamp u64, x y heading speed yaw_rate accel f64, signal u8.
inline std::vector<std::uint8_t> encode_bsm(const Bsm& b) {
  for (double f : {b.x, b.y, b.heading, b.speed, b.yaw_rate, b.accel}) {
    if (!std::isfinite(f)) throw std::invalid_argument("BSM fields must be finite");
  }
  std::vector<std::uint8_t> out;
  out.reserve(kBsmWireSize);
  wire::put(out, b.sender_id);
  wire::put(out, b.timestamp_ms);
  for (double f : {b.x, b.y, b.heading, b.speed, b.yaw_rate, b.accel}) wire::put_f64(out, f);
  out.push_back(static_cast<std::uint8_t>(b.turn_signal));
  return out;
}

inline Bsm decode_bsm(std::span<const std::uint8_t> in) {
  if (in.size() != kBsmWireSize) {
    throw MalformedMessage("BSM length " + std::to_string(in.size()) + ", expected " +
                           std::to_string(kBsmWireSize));
  }
  std::size_t off = 0;
  Bsm b;
  b.sender_id = wire::get<std::uint32_t>(in, off);
  b.timestamp_ms = wire::get<std::uint64_t>(in, off);
  b.x = wire::get_f64(in, off);
  b.y = wire::get_f64(in, off);
  b.heading = wire::get_f64(in, off);
  b.speed = wire::get_f64(in, off);
  b.yaw_rate = wire::get_f64(in, off);
  b.accel = wire::get_f64(in, off);
  const std::uint8_t sig = in[off];
  if (sig > 2) throw MalformedMessage("BSM turn signal byte " + std::to_string(sig));
  b.turn_signal = static_cast<TurnSignal>(sig);
  return b;
}

// Little-endian: sender u32, target u32, app_type u8, direction u8, timestamp u64.
inline std::vector<std::uint8_t> encode_dim(const Dim& d) {
  std::vector<std::uint8_t> out;
  out.reserve(kDimWireSize);
  wire::put(out, d.sender_id);
  wire::put(out, d.target_id);
  out.push_back(static_cast<std::uint8_t>(d.app_type));
  out.push_back(static_cast<std::uint8_t>(d.direction));
  wire::put(out, d.timestamp_ms);
  return out;
}

inline Dim decode_dim(std::span<const std::uint8_t> in) {
  if (in.size() != kDimWireSize) {
    throw MalformedMessage("DIM length " + std::to_string(in.size()) + ", expected " +
                           std::to_string(kDimWireSize));
  }
  std::size_t off = 0;
  Dim d;
  d.sender_id = wire::get<std::uint32_t>(in, off);
  d.target_id = wire::get<std::uint32_t>(in, off);
  const std::uint8_t app = in[off++];
  const std::uint8_t dir = in[off++];
  if (app > static_cast<std::uint8_t>(AppType::late_green)) {
    throw MalformedMessage("DIM app_type byte " + std::to_string(app));
  }
  if (dir != 1 && dir != 2) throw MalformedMessage("DIM direction byte " + std::to_string(dir));
  d.app_type = static_cast<AppType>(app);
  d.direction = static_cast<Direction>(dir);
  d.timestamp_ms = wire::get<std::uint64_t>(in, off);
  return d;
}

// Lossy broadcast/unicast medium. Owns its own RNG stream so delivery draws
// never perturb vehicle dynamics.
class Channel {
 public:
  Channel(double loss_prob, std::uint64_t seed) : loss_prob_(loss_prob), rng_(seed) {
    if (!(loss_prob >= 0.0 && loss_prob <= 1.0)) throw std::invalid_argument("loss_prob outside [0, 1]");
  }

  bool deliver() {
    ++offered_;
    bool ok;
    if (loss_prob_ <= 0.0) {
      ok = true;
    } else if (loss_prob_ >= 1.0) {
      ok = false;
    } else {
      ok = uniform01(rng_) >= loss_prob_;
    }
    if (ok) ++delivered_;
    return ok;
  }

  double loss_prob() const { return loss_prob_; }
  std::uint64_t offered() const { return offered_; }
  std::uint64_t delivered() const { return delivered_; }

 private:
  double loss_prob_;
  std::mt19937_64 rng_;
  std::uint64_t offered_{0};
  std::uint64_t delivered_{0};
};

// Offers every BSM to every other vehicle; sink(receiver_index, bsm) is called per delivery.
template <class Sink>
std::size_t broadcast_bsms(std::span<const Bsm> bsms, Channel& channel, Sink&& sink) {
  std::size_t delivered = 0;
  for (std::size_t s = 0; s < bsms.size(); ++s) {
    for (std::size_t r = 0; r < bsms.size(); ++r) {
      if (r == s) continue;
      if (channel.deliver()) {
        sink(r, bsms[s]);
        ++delivered;
      }
    }
  }
  return delivered;
}

// The HV's view of nearby vehicles, fused from received BSMs.
class LocalObjectMap {
 public:
  struct Entry {
    Bsm bsm;
    std::uint64_t receipt_ms{};
  };

  explicit LocalObjectMap(std::uint64_t staleness_timeout_ms = 1000)
      : staleness_timeout_ms_(staleness_timeout_ms) {}

  // Returns false when the message is older than the stored one.
  bool update(const Bsm& bsm, std::uint64_t now_ms) {
    auto it = entries_.find(bsm.sender_id);
    if (it != entries_.end() && bsm.timestamp_ms < it->second.bsm.timestamp_ms) {
      ++dropped_out_of_order_;
      return false;
    }
    entries_[bsm.sender_id] = Entry{bsm, now_ms};
    return true;
  }

  void expire_stale(std::uint64_t now_ms) {
    std::erase_if(entries_, [&](const auto& kv) {
      return now_ms > kv.second.receipt_ms && now_ms - kv.second.receipt_ms > staleness_timeout_ms_;
    });
  }

  void set_own_state(const Bsm& hv) { own_ = hv; }
  const std::optional<Bsm>& own_state() const { return own_; }

  const Entry* find(VehicleId id) const {
    auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : &it->second;
  }

  const std::map<VehicleId, Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::uint64_t dropped_out_of_order() const { return dropped_out_of_order_; }
  std::uint64_t staleness_timeout_ms() const { return staleness_timeout_ms_; }

 private:
  std::map<VehicleId, Entry> entries_;
  std::optional<Bsm> own_;
  std::uint64_t staleness_timeout_ms_;
  std::uint64_t dropped_out_of_order_{0};
};

inline bool update_map(LocalObjectMap& map, const Bsm& bsm, std::uint64_t now_ms) {
  return map.update(bsm, now_ms);
}

inline void expire_stale(LocalObjectMap& map, std::uint64_t now_ms) { map.expire_stale(now_ms); }

// --- Trace files -----------------------------------------------------------

class TraceError : public std::runtime_error {
 public:
  TraceError(std::size_t record, const std::string& what)
      : std::runtime_error("trace record " + std::to_string(record) + ": " + what),
        record_(record) {}
  std::size_t record() const { return record_; }

 private:
  std::size_t record_;
};

constexpr const char* kBsmCsvHeader =
    "sender_id,timestamp_ms,x,y,heading,speed,yaw_rate,accel,turn_signal";

// Binary trace: each record is a u32 little-endian length followed by an encoded BSM.
inline void write_bsm_trace_binary(std::ostream& os, std::span<const Bsm> bsms) {
  for (const Bsm& b : bsms) {
    std::vector<std::uint8_t> len;
    wire::put(len, static_cast<std::uint32_t>(kBsmWireSize));
    const auto body = encode_bsm(b);
    os.write(reinterpret_cast<const char*>(len.data()), static_cast<std::streamsize>(len.size()));
    os.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
  }
}

inline std::vector<Bsm> read_bsm_trace_binary(std::istream& is) {
  std::vector<Bsm> out;
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  std::size_t off = 0;
  while (off < data.size()) {
    const std::size_t index = out.size();
    if (data.size() - off < 4) throw TraceError(index, "truncated length prefix");
    std::span<const std::uint8_t> all(data);
    std::size_t p = off;
    const std::uint32_t len = wire::get<std::uint32_t>(all, p);
    if (data.size() - p < len) throw TraceError(index, "truncated record body");
    try {
      out.push_back(decode_bsm(all.subspan(p, len)));
    } catch (const MalformedMessage& e) {
      throw TraceError(index, e.what());
    }
    off = p + len;
  }
  return out;
}

inline void write_bsm_trace_csv(std::ostream& os, std::span<const Bsm> bsms) {
  os << kBsmCsvHeader << '\n';
  for (const Bsm& b : bsms) {
    os << b.sender_id << ',' << b.timestamp_ms << ',' << format_double(b.x) << ','
       << format_double(b.y) << ',' << format_double(b.heading) << ',' << format_double(b.speed)
       << ',' << format_double(b.yaw_rate) << ',' << format_double(b.accel) << ','
       << to_string(b.turn_signal) << '\n';
  }
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cols.push_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cols;
}

inline std::vector<Bsm> read_bsm_trace_csv(std::istream& is) {
  std::vector<Bsm> out;
  std::string line;
  if (!std::getline(is, line)) return out;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kBsmCsvHeader) throw TraceError(0, "unexpected CSV header");
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t index = out.size();
    const auto cols = split_csv(line);
    if (cols.size() != 9) throw TraceError(index, "expected 9 columns");
    Bsm b;
    auto id = parse_int<std::uint32_t>(cols[0]);
    auto ts = parse_int<std::uint64_t>(cols[1]);
    if (!id || !ts) throw TraceError(index, "bad sender_id or timestamp");
    b.sender_id = *id;
    b.timestamp_ms = *ts;
    double* fields[] = {&b.x, &b.y, &b.heading, &b.speed, &b.yaw_rate, &b.accel};
    for (std::size_t k = 0; k < 6; ++k) {
      auto v = parse_double(cols[2 + k]);
      if (!v || !std::isfinite(*v)) throw TraceError(index, "bad numeric field");
      *fields[k] = *v;
    }
    auto sig = parse_turn_signal(cols[8]);
    if (!sig) throw TraceError(index, "bad turn_signal");
    b.turn_signal = *sig;
    out.push_back(b);
  }
  return out;
}

// Picks the reader by file extension: ".csv" for text, anything else binary.
inline std::vector<Bsm> read_bsm_trace(const std::string& path) {
  const bool csv = path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
  std::ifstream f(path, csv ? std::ios::in : std::ios::binary);
  if (!f) throw std::runtime_error("cannot open trace " + path);
  return csv ? read_bsm_trace_csv(f) : read_bsm_trace_binary(f);
}

inline void write_bsm_trace(const std::string& path, std::span<const Bsm> bsms) {
  const bool csv = path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
  std::ofstream f(path, csv ? std::ios::out : std::ios::binary);
  if (!f) throw std::runtime_error("cannot write trace " + path);
  if (csv) {
    write_bsm_trace_csv(f, bsms);
  } else {
    write_bsm_trace_binary(f, bsms);
  }
}

}  // namespace dms
