#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "travelrule/messages.hpp"

namespace travelrule {

// ---------------------------------------------------------------------------
// Frame codec: 4-byte big-endian length prefix, canonical-JSON payload.

constexpr std::size_t kMaxFramePayload = 1'048'576;

enum class FrameError { OVERSIZE, TRUNCATED, MALFORMED };

inline std::string to_string(FrameError e) {
  switch (e) {
    case FrameError::OVERSIZE: return "OVERSIZE";
    case FrameError::TRUNCATED: return "TRUNCATED";
    case FrameError::MALFORMED: return "MALFORMED";
  }
  return "?";
}

struct FrameDecodeError : std::runtime_error {
  explicit FrameDecodeError(FrameError code, const std::string& detail = "")
      : std::runtime_error("frame decode: " + travelrule::to_string(code) +
                           (detail.empty() ? "" : " (" + detail + ")")),
        code(code) {}
  FrameError code;
};

inline std::string encode_frame_payload(const std::string& payload) {
  if (payload.size() > kMaxFramePayload)
    throw FrameDecodeError(FrameError::OVERSIZE, "encode");
  std::string out;
  out.reserve(4 + payload.size());
  const std::uint32_t n = static_cast<std::uint32_t>(payload.size());
  out.push_back(static_cast<char>((n >> 24) & 0xff));
  out.push_back(static_cast<char>((n >> 16) & 0xff));
  out.push_back(static_cast<char>((n >> 8) & 0xff));
  out.push_back(static_cast<char>(n & 0xff));
  out += payload;
  return out;
}

inline std::string encode_frame(const Message& m) {
  return encode_frame_payload(canonical_bytes(json(m)));
}

// Incremental decoder for a byte stream; yields complete payloads.
class FrameDecoder {
 public:
  void feed(const char* data, std::size_t len) { buf_.append(data, len); }
  void feed(const std::string& bytes) { buf_ += bytes; }

  // nullopt: need more bytes. Throws OVERSIZE on a hostile length prefix
  // before any payload byte is consumed.
  std::optional<std::string> next() {
    if (buf_.size() < 4) return std::nullopt;
    const std::uint32_t n =
        (static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[0])) << 24) |
        (static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[1])) << 16) |
        (static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[2])) << 8) |
        static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[3]));
    if (n > kMaxFramePayload)
      throw FrameDecodeError(FrameError::OVERSIZE,
                             "declared length " + std::to_string(n));
    if (buf_.size() < 4 + static_cast<std::size_t>(n)) return std::nullopt;
    std::string payload = buf_.substr(4, n);
    buf_.erase(0, 4 + n);
    return payload;
  }

  std::size_t buffered() const { return buf_.size(); }

 private:
  std::string buf_;
};

// One-shot decode of a complete frame into a verified-shape Message.
// The payload must be in canonical form byte-for-byte.
inline Message decode_frame(const std::string& bytes) {
  FrameDecoder dec;
  dec.feed(bytes);
  std::optional<std::string> payload;
  payload = dec.next();  // may throw OVERSIZE
  if (!payload) throw FrameDecodeError(FrameError::TRUNCATED);
  if (dec.buffered() != 0)
    throw FrameDecodeError(FrameError::MALFORMED, "trailing bytes");
  Message m;
  try {
    json j = json::parse(*payload);
    m = j.get<Message>();
    if (canonical_bytes(j) != *payload)
      throw FrameDecodeError(FrameError::MALFORMED, "payload not canonical");
  } catch (const FrameDecodeError&) {
    throw;
  } catch (const std::exception& e) {
    throw FrameDecodeError(FrameError::MALFORMED, e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Deterministic in-memory network. Strictly single threaded, tick driven.
// One tick is one second of simulated time.

struct PartitionSpec {
  std::int64_t start = 0;  // inclusive tick
  std::int64_t end = 0;    // exclusive tick
  std::set<std::string> side_a;
  std::set<std::string> side_b;

  bool separates(const std::string& from, const std::string& to,
                 std::int64_t tick) const {
    if (tick < start || tick >= end) return false;
    return (side_a.contains(from) && side_b.contains(to)) ||
           (side_b.contains(from) && side_a.contains(to));
  }
};

inline void from_json(const json& j, PartitionSpec& p) {
  j.at("start").get_to(p.start);
  j.at("end").get_to(p.end);
  for (const auto& v : j.at("side_a")) p.side_a.insert(v.get<std::string>());
  for (const auto& v : j.at("side_b")) p.side_b.insert(v.get<std::string>());
}

struct SimConfig {
  std::uint64_t seed = 0;
  double drop_probability = 0.0;
  std::int64_t latency_min = 1;
  std::int64_t latency_max = 1;
  std::vector<PartitionSpec> partitions;
};

inline void from_json(const json& j, SimConfig& c) {
  c.seed = j.value("seed", std::uint64_t{0});
  c.drop_probability = j.value("drop_probability", 0.0);
  c.latency_min = j.value("latency_min", std::int64_t{1});
  c.latency_max = j.value("latency_max", std::int64_t{1});
  if (j.contains("partitions"))
    j.at("partitions").get_to(c.partitions);
}

class SimNetwork {
 public:
  using Handler = std::function<void(const std::string& frame)>;

  explicit SimNetwork(SimConfig config)
      : config_(config), rng_(config.seed) {}

  void register_node(const VaspId& id, Handler handler) {
    nodes_[id.value] = std::move(handler);
  }
  void unregister_node(const VaspId& id) { nodes_.erase(id.value); }

  std::int64_t tick() const { return tick_; }

  void set_observer(std::function<void(const json&)> obs) {
    observer_ = std::move(obs);
  }

  // Next message on this ordered link is discarded at delivery time.
  void drop_next(const VaspId& from, const VaspId& to) {
    forced_drops_.insert({from.value, to.value});
  }

  // Re-enqueues the last frame delivered on the link, as a wire-level
  // duplicate.
  bool replay_last(const VaspId& from, const VaspId& to) {
    auto it = last_delivered_.find({from.value, to.value});
    if (it == last_delivered_.end()) return false;
    enqueue(from.value, to.value, it->second);
    return true;
  }

  void send(const VaspId& from, const VaspId& to, const std::string& frame) {
    if (frame.size() > 4 + kMaxFramePayload) return;
    if (config_.drop_probability > 0.0 &&
        std::uniform_real_distribution<double>(0.0, 1.0)(rng_) <
            config_.drop_probability) {
      note({{"event", "net_drop"},
            {"tick", tick_},
            {"from", from.value},
            {"to", to.value},
            {"reason", "random loss"}});
      return;
    }
    enqueue(from.value, to.value, frame);
  }

  // Advances one tick and delivers everything due. FIFO per ordered link.
  void step() {
    ++tick_;
    std::vector<InFlight> due;
    for (auto it = queue_.begin(); it != queue_.end();) {
      if (it->deliver_at <= tick_) {
        due.push_back(*it);
        it = queue_.erase(it);
      } else {
        ++it;
      }
    }
    std::stable_sort(due.begin(), due.end(),
                     [](const InFlight& a, const InFlight& b) {
                       return a.seq < b.seq;
                     });
    for (const auto& msg : due) {
      if (forced_drops_.erase({msg.from, msg.to}) > 0) {
        note({{"event", "net_drop"},
              {"tick", tick_},
              {"from", msg.from},
              {"to", msg.to},
              {"reason", "injected loss"}});
        continue;
      }
      bool cut = false;
      for (const auto& p : config_.partitions)
        if (p.separates(msg.from, msg.to, tick_)) cut = true;
      if (cut) {
        note({{"event", "net_drop"},
              {"tick", tick_},
              {"from", msg.from},
              {"to", msg.to},
              {"reason", "partition"}});
        continue;
      }
      auto it = nodes_.find(msg.to);
      if (it == nodes_.end()) {
        note({{"event", "net_drop"},
              {"tick", tick_},
              {"from", msg.from},
              {"to", msg.to},
              {"reason", "node offline"}});
        continue;
      }
      note({{"event", "deliver"},
            {"tick", tick_},
            {"from", msg.from},
            {"to", msg.to},
            {"bytes", msg.frame.size()}});
      last_delivered_[{msg.from, msg.to}] = msg.frame;
      it->second(msg.frame);
    }
  }

  bool idle() const { return queue_.empty(); }

 private:
  struct InFlight {
    std::int64_t deliver_at;
    std::uint64_t seq;
    std::string from;
    std::string to;
    std::string frame;
  };

  void enqueue(const std::string& from, const std::string& to,
               const std::string& frame) {
    std::int64_t latency =
        config_.latency_min == config_.latency_max
            ? config_.latency_min
            : std::uniform_int_distribution<std::int64_t>(
                  config_.latency_min, config_.latency_max)(rng_);
    std::int64_t deliver_at = tick_ + std::max<std::int64_t>(1, latency);
    // per-link FIFO: never schedule ahead of an earlier message on the link
    auto& floor = link_floor_[{from, to}];
    deliver_at = std::max(deliver_at, floor);
    floor = deliver_at;
    queue_.push_back({deliver_at, next_seq_++, from, to, frame});
  }

  void note(const json& event) {
    if (observer_) observer_(event);
  }

  SimConfig config_;
  std::mt19937_64 rng_;
  std::int64_t tick_ = 0;
  std::uint64_t next_seq_ = 0;
  std::map<std::string, Handler> nodes_;
  std::vector<InFlight> queue_;
  std::map<std::pair<std::string, std::string>, std::int64_t> link_floor_;
  std::map<std::pair<std::string, std::string>, std::string> last_delivered_;
  std::set<std::pair<std::string, std::string>> forced_drops_;
  std::function<void(const json&)> observer_;
};

}  // namespace travelrule
