#include "rtvc/protocol.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace rtvc {

namespace {

constexpr std::uint8_t kMagic[4] = {'R', 'T', 'V', 'C'};

bool known_type(std::uint8_t v) {
  switch (static_cast<MsgType>(v)) {
    case MsgType::login:
    case MsgType::running:
    case MsgType::stream_request:
    case MsgType::terminate_report:
    case MsgType::accident_notify:
    case MsgType::user_enable:
    case MsgType::user_disable:
    case MsgType::ack:
    case MsgType::reject:
    case MsgType::video:
    case MsgType::data:
      return true;
  }
  return false;
}

Bytes body_of(const Message& msg) {
  Bytes body;
  switch (msg.type) {
    case MsgType::login:
      body.insert(body.end(), msg.credentials.begin(), msg.credentials.end());
      break;
    case MsgType::user_enable:
    case MsgType::user_disable:
      put_u32be(body, msg.user_id);
      body.insert(body.end(), msg.credentials.begin(), msg.credentials.end());
      break;
    case MsgType::accident_notify:
      put_u8(body, static_cast<std::uint8_t>(msg.accident_kind));
      put_f64be(body, msg.lat);
      put_f64be(body, msg.lon);
      break;
    case MsgType::ack:
      put_u8(body, msg.ack_type);
      break;
    case MsgType::reject:
      put_u8(body, static_cast<std::uint8_t>(msg.reject_reason));
      body.insert(body.end(), msg.reject_detail.begin(), msg.reject_detail.end());
      break;
    case MsgType::video:
    case MsgType::data:
      body = msg.payload;
      break;
    case MsgType::running:
    case MsgType::stream_request:
    case MsgType::terminate_report:
      break;
  }
  return body;
}

}  // namespace

Message make_video_chunk(std::uint32_t vehicle_id, std::uint64_t seq, TimeMs t,
                         Bytes payload) {
  Message m;
  m.type = MsgType::video;
  m.channel = ChannelId::vehicle_video_in;
  m.vehicle_id = vehicle_id;
  m.seq = seq;
  m.t = t;
  m.payload = std::move(payload);
  return m;
}

Message make_data_chunk(std::uint32_t vehicle_id, std::uint64_t seq, TimeMs t,
                        std::string csv_line) {
  Message m;
  m.type = MsgType::data;
  m.channel = ChannelId::vehicle_data_in;
  m.vehicle_id = vehicle_id;
  m.seq = seq;
  m.t = t;
  m.payload.assign(csv_line.begin(), csv_line.end());
  return m;
}

Result<Bytes> encode(const Message& msg) {
  Bytes body = body_of(msg);
  if (body.size() > kMaxPayload) {
    return make_error("payload-too-large",
                      std::to_string(body.size()) + " > " + std::to_string(kMaxPayload));
  }
  Bytes out;
  out.reserve(kWireHeaderSize + body.size());
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u8(out, kWireVersion);
  put_u8(out, static_cast<std::uint8_t>(msg.type));
  put_u8(out, static_cast<std::uint8_t>(msg.channel));
  put_u32be(out, msg.vehicle_id);
  put_u64be(out, msg.seq);
  put_u64be(out, msg.t);
  put_u32be(out, static_cast<std::uint32_t>(body.size()));
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

Result<Message> decode(std::span<const std::uint8_t> d) {
  if (d.size() < 4) return make_error("truncated", "no magic");
  for (std::size_t i = 0; i < 4; ++i) {
    if (d[i] != kMagic[i]) return make_error("bad-magic");
  }
  if (d.size() < kWireHeaderSize) return make_error("truncated", "header");
  if (d[4] != kWireVersion) return make_error("bad-version");
  if (!known_type(d[5])) return make_error("unknown-type", "msg_type");
  if (d[6] >= kChannelCount) return make_error("unknown-type", "channel");

  Message m;
  m.type = static_cast<MsgType>(d[5]);
  m.channel = static_cast<ChannelId>(d[6]);
  m.vehicle_id = get_u32be(d, 7);
  m.seq = get_u64be(d, 11);
  m.t = get_u64be(d, 19);
  std::uint32_t len = get_u32be(d, 27);
  if (d.size() - kWireHeaderSize != len) {
    return make_error("truncated", "payload_len mismatch");
  }
  std::span<const std::uint8_t> body = d.subspan(kWireHeaderSize);

  switch (m.type) {
    case MsgType::login:
      m.credentials.assign(body.begin(), body.end());
      break;
    case MsgType::user_enable:
    case MsgType::user_disable:
      if (body.size() < 4) return make_error("truncated", "user_id");
      m.user_id = get_u32be(body, 0);
      m.credentials.assign(body.begin() + 4, body.end());
      break;
    case MsgType::accident_notify: {
      if (body.size() != 17) return make_error("truncated", "accident body");
      std::uint8_t kind = get_u8(body, 0);
      if (kind != 1 && kind != 2) return make_error("unknown-type", "accident kind");
      m.accident_kind = static_cast<AccidentKind>(kind);
      m.lat = get_f64be(body, 1);
      m.lon = get_f64be(body, 9);
      break;
    }
    case MsgType::ack:
      if (body.size() != 1) return make_error("truncated", "ack body");
      m.ack_type = get_u8(body, 0);
      break;
    case MsgType::reject: {
      if (body.empty()) return make_error("truncated", "reject body");
      std::uint8_t reason = get_u8(body, 0);
      if (reason < 1 || reason > 4) return make_error("unknown-type", "reject reason");
      m.reject_reason = static_cast<RejectReason>(reason);
      m.reject_detail.assign(body.begin() + 1, body.end());
      break;
    }
    case MsgType::video:
    case MsgType::data:
      m.payload.assign(body.begin(), body.end());
      break;
    case MsgType::running:
    case MsgType::stream_request:
    case MsgType::terminate_report:
      if (!body.empty()) return make_error("truncated", "unexpected body");
      break;
  }
  return m;
}

std::string telemetry_csv(const TelemetrySample& s, std::uint32_t vehicle_id) {
  char buf[256];
  int n = std::snprintf(buf, sizeof(buf), "%" PRIu64 ",%u,%.6f,%.6f,%.6f,%.6f,%d,%d,%d\n",
                        s.t, vehicle_id, s.lat, s.lon, s.speed_kmh, s.angle_deg,
                        s.airbag_deployed ? 1 : 0, s.brake ? 1 : 0,
                        static_cast<int>(s.turn_signal));
  return std::string(buf, static_cast<std::size_t>(n));
}

namespace {

bool parse_double_field(const std::string& f, double& out) {
  if (f.empty()) return false;
  char* end = nullptr;
  out = std::strtod(f.c_str(), &end);
  return end == f.c_str() + f.size() && std::isfinite(out);
}

bool parse_u64_field(const std::string& f, std::uint64_t& out) {
  if (f.empty()) return false;
  char* end = nullptr;
  out = std::strtoull(f.c_str(), &end, 10);
  return end == f.c_str() + f.size();
}

}  // namespace

Result<ParsedTelemetry> parse_telemetry_csv(const std::string& line) {
  std::string body = line;
  while (!body.empty() && (body.back() == '\n' || body.back() == '\r')) body.pop_back();

  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = body.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(body.substr(start));
      break;
    }
    fields.push_back(body.substr(start, comma - start));
    start = comma + 1;
  }
  if (fields.size() != 9) {
    return make_error("missing-field", "expected 9 fields, got " + std::to_string(fields.size()));
  }

  ParsedTelemetry out;
  std::uint64_t u = 0;
  if (!parse_u64_field(fields[0], u)) return make_error("bad-field", "t_ms");
  out.sample.t = u;
  if (!parse_u64_field(fields[1], u) || u > 0xffffffffull) {
    return make_error("bad-field", "vehicle_id");
  }
  out.vehicle_id = static_cast<std::uint32_t>(u);
  if (!parse_double_field(fields[2], out.sample.lat) || std::abs(out.sample.lat) > 90.0) {
    return make_error("bad-field", "lat");
  }
  if (!parse_double_field(fields[3], out.sample.lon) || std::abs(out.sample.lon) > 180.0) {
    return make_error("bad-field", "lon");
  }
  if (!parse_double_field(fields[4], out.sample.speed_kmh) || out.sample.speed_kmh < 0.0) {
    return make_error("bad-field", "speed_kmh");
  }
  if (!parse_double_field(fields[5], out.sample.angle_deg) ||
      std::abs(out.sample.angle_deg) > 180.0) {
    return make_error("bad-field", "angle_deg");
  }
  if (fields[6] != "0" && fields[6] != "1") return make_error("bad-field", "airbag");
  out.sample.airbag_deployed = fields[6] == "1";
  if (fields[7] != "0" && fields[7] != "1") return make_error("bad-field", "brake");
  out.sample.brake = fields[7] == "1";
  if (fields[8] != "0" && fields[8] != "1" && fields[8] != "2") {
    return make_error("bad-field", "turn");
  }
  out.sample.turn_signal = static_cast<TurnSignal>(fields[8][0] - '0');
  return out;
}

std::vector<StreamChunk> ReorderBuffer::release_ready() {
  std::vector<StreamChunk> out;
  while (!held_.empty() && held_.begin()->first == next_expected_) {
    out.push_back(std::move(held_.begin()->second.first));
    held_.erase(held_.begin());
    ++next_expected_;
    anchored_ = true;
  }
  return out;
}

void ReorderBuffer::adopt_lowest() {
  // Give up on the gap below the lowest held sequence number.
  std::uint64_t lowest = held_.begin()->first;
  if (anchored_) {
    gaps_ += lowest - next_expected_;
  }
  next_expected_ = lowest;
}

std::vector<StreamChunk> ReorderBuffer::push(StreamChunk chunk, TimeMs now) {
  if (chunk.seq < next_expected_ || held_.count(chunk.seq) != 0) {
    ++duplicates_;
    return {};
  }
  held_.emplace(chunk.seq, std::make_pair(std::move(chunk), now));

  std::vector<StreamChunk> out = release_ready();
  while (held_.size() >= window_) {
    adopt_lowest();
    auto more = release_ready();
    out.insert(out.end(), std::make_move_iterator(more.begin()),
               std::make_move_iterator(more.end()));
  }
  return out;
}

std::vector<StreamChunk> ReorderBuffer::expire(TimeMs now) {
  std::vector<StreamChunk> out;
  while (!held_.empty() && now >= held_.begin()->second.second &&
         now - held_.begin()->second.second >= max_hold_ms_) {
    adopt_lowest();
    auto more = release_ready();
    out.insert(out.end(), std::make_move_iterator(more.begin()),
               std::make_move_iterator(more.end()));
  }
  return out;
}

std::vector<StreamChunk> ReorderBuffer::flush() {
  std::vector<StreamChunk> out;
  while (!held_.empty()) {
    adopt_lowest();
    auto more = release_ready();
    out.insert(out.end(), std::make_move_iterator(more.begin()),
               std::make_move_iterator(more.end()));
  }
  return out;
}

std::optional<TimeMs> ReorderBuffer::next_deadline() const {
  if (held_.empty()) return std::nullopt;
  return held_.begin()->second.second + max_hold_ms_;
}

std::optional<TimeMs> ReorderBuffer::oldest_held_t() const {
  if (held_.empty()) return std::nullopt;
  return held_.begin()->second.first.t;
}

const char* channel_name(ChannelId ch) {
  switch (ch) {
    case ChannelId::control: return "control";
    case ChannelId::vehicle_video_in: return "vehicle_video_in";
    case ChannelId::vehicle_data_in: return "vehicle_data_in";
    case ChannelId::user_video_out: return "user_video_out";
    case ChannelId::user_data_out: return "user_data_out";
  }
  return "?";
}

const char* msg_type_name(MsgType t) {
  switch (t) {
    case MsgType::login: return "login";
    case MsgType::running: return "running";
    case MsgType::stream_request: return "stream_request";
    case MsgType::terminate_report: return "terminate_report";
    case MsgType::accident_notify: return "accident_notify";
    case MsgType::user_enable: return "user_enable";
    case MsgType::user_disable: return "user_disable";
    case MsgType::ack: return "ack";
    case MsgType::reject: return "reject";
    case MsgType::video: return "video";
    case MsgType::data: return "data";
  }
  return "?";
}

}  // namespace rtvc
