#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rtvc/bytes.hpp"
#include "rtvc/result.hpp"
#include "rtvc/sensor_sim.hpp"
#include "rtvc/telemetry.hpp"

namespace rtvc {

// Five logical channels, one server port each.
enum class ChannelId : std::uint8_t {
  control = 0,
  vehicle_video_in = 1,
  vehicle_data_in = 2,
  user_video_out = 3,
  user_data_out = 4,
};

constexpr std::size_t kChannelCount = 5;

enum class MsgType : std::uint8_t {
  login = 0x01,
  running = 0x02,
  stream_request = 0x03,
  terminate_report = 0x04,
  accident_notify = 0x05,
  user_enable = 0x06,
  user_disable = 0x07,
  ack = 0x08,
  reject = 0x09,
  video = 0x10,
  data = 0x11,
};

enum class RejectReason : std::uint8_t {
  not_registered = 1,
  bad_credentials = 2,
  malformed = 3,
  not_available = 4,
};

// Datagram layout (bit-exact, all integers big-endian):
//   magic "RTVC" | version u8=1 | msg_type u8 | channel u8
//   | vehicle_id u32 | seq u64 | t u64 | payload_len u32 | payload
// The fixed header is exactly 31 bytes. user_id for the user-originated
// control kinds travels in the message body, not the header.
constexpr std::size_t kWireHeaderSize = 31;
constexpr std::uint8_t kWireVersion = 1;
constexpr std::size_t kMaxPayload = 60 * 1024;

// Body layouts by type:
//   login        credentials bytes
//   user_enable  user_id u32 | credentials bytes   (header vehicle_id = target)
//   user_disable user_id u32 | credentials bytes
//   accident_notify  kind u8 (1 turnover, 2 crash) | lat f64 | lon f64
//   ack          acked msg_type u8
//   reject       reason u8 | detail utf-8
//   video        raw frame bytes
//   data         one telemetry CSV line
//   running / stream_request / terminate_report   empty
struct Message {
  MsgType type = MsgType::login;
  ChannelId channel = ChannelId::control;
  std::uint32_t vehicle_id = 0;
  std::uint64_t seq = 0;
  TimeMs t = 0;

  std::string credentials;                              // login, user_enable/disable
  std::uint32_t user_id = 0;                            // user_enable/disable
  AccidentKind accident_kind = AccidentKind::turnover;  // accident_notify
  double lat = 0.0;                                     // accident_notify
  double lon = 0.0;                                     // accident_notify
  std::uint8_t ack_type = 0;                            // ack
  RejectReason reject_reason = RejectReason::malformed; // reject
  std::string reject_detail;                            // reject
  Bytes payload;                                        // video / data
};

Message make_video_chunk(std::uint32_t vehicle_id, std::uint64_t seq, TimeMs t,
                         Bytes payload);
Message make_data_chunk(std::uint32_t vehicle_id, std::uint64_t seq, TimeMs t,
                        std::string csv_line);

// encode is total over valid messages; the only error is an oversized
// payload ("payload-too-large").
Result<Bytes> encode(const Message& msg);

// decode never throws on arbitrary bytes. Errors: "bad-magic",
// "bad-version", "truncated", "unknown-type".
Result<Message> decode(std::span<const std::uint8_t> datagram);

// Telemetry CSV grammar (one line, LF-terminated):
//   t_ms,vehicle_id,lat,lon,speed_kmh,angle_deg,airbag,brake,turn\n
// floats printed with 6 decimals, booleans as 0/1, turn in {0,1,2}.
std::string telemetry_csv(const TelemetrySample& s, std::uint32_t vehicle_id);

struct ParsedTelemetry {
  TelemetrySample sample;
  std::uint32_t vehicle_id = 0;
};

// Exact inverse of telemetry_csv over 6-decimal-quantized samples.
// Errors: "missing-field", "bad-field" (detail names the field).
Result<ParsedTelemetry> parse_telemetry_csv(const std::string& line);

// Video or data payload travelling through a reorder buffer.
struct StreamChunk {
  std::uint64_t seq = 0;
  TimeMs t = 0;
  Bytes payload;
};

// Restores send order over UDP within a bounded window. Sequence numbers
// are 1-based per stream. A gap is waited on until `window` chunks are
// held or `max_hold_ms` passes, then it is declared lost and delivery
// resumes. Duplicates and already-released sequence numbers are dropped.
// A receiver that joins mid-stream pays one window/hold delay before the
// first release; that initial jump is not counted as loss.
class ReorderBuffer {
 public:
  ReorderBuffer(std::uint32_t window, TimeMs max_hold_ms)
      : window_(window), max_hold_ms_(max_hold_ms) {}

  std::vector<StreamChunk> push(StreamChunk chunk, TimeMs now);

  // Releases across any gap that has been waiting max_hold_ms by `now`.
  std::vector<StreamChunk> expire(TimeMs now);

  // Releases everything still held, in sequence order (stream teardown).
  std::vector<StreamChunk> flush();

  std::optional<TimeMs> next_deadline() const;

  // Timestamp of the lowest-sequence chunk currently held; releases only
  // ever happen at or after it (stream timestamps rise with seq).
  std::optional<TimeMs> oldest_held_t() const;

  std::uint64_t gaps() const { return gaps_; }
  std::uint64_t duplicates_dropped() const { return duplicates_; }
  std::size_t held() const { return held_.size(); }

 private:
  std::vector<StreamChunk> release_ready();
  void adopt_lowest();

  std::uint32_t window_;
  TimeMs max_hold_ms_;
  std::uint64_t next_expected_ = 1;
  bool anchored_ = false;  // set once something has been released
  std::uint64_t gaps_ = 0;
  std::uint64_t duplicates_ = 0;
  std::map<std::uint64_t, std::pair<StreamChunk, TimeMs>> held_;  // seq -> (chunk, arrival)
};

constexpr std::uint32_t kDefaultReorderWindow = 32;
constexpr TimeMs kDefaultReorderHoldMs = 200;

const char* channel_name(ChannelId ch);
const char* msg_type_name(MsgType t);

}  // namespace rtvc
