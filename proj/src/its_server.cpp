#include "rtvc/its_server.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rtvc/container.hpp"

namespace rtvc {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kMetersPerDegLat = 111320.0;

double fix_distance_m(const GpsFix& a, const GpsFix& b) {
  double mid_lat = (a.lat + b.lat) * 0.5;
  double dx = (b.lon - a.lon) * kMetersPerDegLat * std::cos(mid_lat * kPi / 180.0);
  double dy = (b.lat - a.lat) * kMetersPerDegLat;
  return std::sqrt(dx * dx + dy * dy);
}

std::string cred_hash(const std::string& credentials) { return to_hex(fnv1a64(credentials)); }

}  // namespace

std::string AccidentLogEntry::csv() const {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%llu,%u,%s,%.6f,%.6f",
                static_cast<unsigned long long>(t), vehicle_id,
                kind == AccidentKind::turnover ? "turnover" : "crash", lat, lon);
  return buf;
}

ItsServer::ItsServer(ServerConfig cfg, NetworkHandle* net, TraceFn trace)
    : cfg_(std::move(cfg)), net_(net), trace_fn_(std::move(trace)) {}

Result<std::unique_ptr<ItsServer>> ItsServer::create(ServerConfig cfg, NetworkHandle* net,
                                                     TraceFn trace) {
  if (cfg.segment_duration_ms == 0) {
    return make_error("bad-config", "segment_duration must be positive");
  }
  auto server = std::unique_ptr<ItsServer>(new ItsServer(std::move(cfg), net, std::move(trace)));
  if (auto r = server->load_registry(); !r.ok()) return r.error();
  return server;
}

void ItsServer::trace(TimeMs now, const std::string& what) {
  if (trace_fn_) trace_fn_("t=" + std::to_string(now) + " server " + what);
}

void ItsServer::event_log(TimeMs now, const std::string& what) {
  trace(now, what);
  if (!cfg_.store_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(cfg_.store_dir, ec);
    std::ofstream out(cfg_.store_dir + "/events.log", std::ios::app);
    out << "t=" << now << ' ' << what << '\n';
  }
}

Result<void> ItsServer::load_registry() {
  if (cfg_.registry_path.empty()) return {};
  std::ifstream in(cfg_.registry_path);
  if (!in) return {};  // no file yet; first registration creates it
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string kind, id_s, hash, vids;
    std::getline(ss, kind, ',');
    std::getline(ss, id_s, ',');
    std::getline(ss, hash, ',');
    std::getline(ss, vids, ',');
    std::uint32_t id = static_cast<std::uint32_t>(std::stoul(id_s));
    if (kind == "vehicle") {
      VehicleRegistryEntry e;
      e.vehicle_id = id;
      e.credentials_hash = hash;
      vehicles_.emplace(id, std::move(e));
    } else if (kind == "user") {
      UserRegistryEntry e;
      e.user_id = id;
      e.credentials_hash = hash;
      std::stringstream vs(vids);
      std::string v;
      while (std::getline(vs, v, ';')) {
        if (!v.empty()) e.vehicle_ids.push_back(static_cast<std::uint32_t>(std::stoul(v)));
      }
      users_.emplace(id, std::move(e));
    }
  }
  // Rebuild owner links; running state intentionally resets across restarts.
  for (auto& [uid, u] : users_) {
    for (std::uint32_t vid : u.vehicle_ids) {
      auto it = vehicles_.find(vid);
      if (it != vehicles_.end()) it->second.owner_user_ids.push_back(uid);
    }
  }
  return {};
}

Result<void> ItsServer::persist_line(const std::string& line) {
  if (cfg_.registry_path.empty()) return {};
  auto parent = std::filesystem::path(cfg_.registry_path).parent_path();
  if (!parent.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(parent, ec);
  }
  std::ofstream out(cfg_.registry_path, std::ios::app);
  if (!out) return make_error("io-error", "cannot append to " + cfg_.registry_path);
  out << line << '\n';
  return {};
}

Result<void> ItsServer::register_vehicle(std::uint32_t vehicle_id,
                                         const std::string& credentials) {
  if (vehicles_.count(vehicle_id)) return make_error("already-registered");
  VehicleRegistryEntry e;
  e.vehicle_id = vehicle_id;
  e.credentials_hash = cred_hash(credentials);
  vehicles_.emplace(vehicle_id, std::move(e));
  return persist_line("vehicle," + std::to_string(vehicle_id) + "," +
                      vehicles_[vehicle_id].credentials_hash);
}

Result<void> ItsServer::register_user(std::uint32_t user_id, const std::string& credentials,
                                      std::vector<std::uint32_t> vehicle_ids) {
  if (users_.count(user_id)) return make_error("already-registered");
  UserRegistryEntry e;
  e.user_id = user_id;
  e.credentials_hash = cred_hash(credentials);
  e.vehicle_ids = vehicle_ids;
  users_.emplace(user_id, std::move(e));
  std::string vids;
  for (std::uint32_t v : vehicle_ids) {
    if (!vids.empty()) vids += ';';
    vids += std::to_string(v);
    auto it = vehicles_.find(v);
    if (it != vehicles_.end()) it->second.owner_user_ids.push_back(user_id);
  }
  return persist_line("user," + std::to_string(user_id) + "," +
                      users_[user_id].credentials_hash + "," + vids);
}

void ItsServer::send_to(Addr to, ChannelId ch, Message m, TimeMs now) {
  m.channel = ch;
  m.seq = m.seq ? m.seq : ++control_seq_;
  m.t = m.t ? m.t : now;
  auto encoded = encode(m);
  if (encoded.ok()) net_->send(ch, to, encoded.take(), now);
}

void ItsServer::send_ack(Addr to, MsgType acked, std::uint32_t vehicle_id, TimeMs now) {
  Message m;
  m.type = MsgType::ack;
  m.vehicle_id = vehicle_id;
  m.ack_type = static_cast<std::uint8_t>(acked);
  m.seq = ++control_seq_;
  m.t = now;
  send_to(to, ChannelId::control, std::move(m), now);
}

void ItsServer::send_reject(Addr to, RejectReason reason, const std::string& detail,
                            std::uint32_t vehicle_id, TimeMs now) {
  Message m;
  m.type = MsgType::reject;
  m.vehicle_id = vehicle_id;
  m.reject_reason = reason;
  m.reject_detail = detail;
  m.seq = ++control_seq_;
  m.t = now;
  send_to(to, ChannelId::control, std::move(m), now);
}

void ItsServer::deliver(ChannelId ch, const Bytes& datagram, Addr from, TimeMs now) {
  auto decoded = decode(datagram);
  if (!decoded.ok()) {
    ++malformed_;
    event_log(now, "malformed datagram: " + decoded.error().code);
    return;
  }
  const Message& m = decoded.value();
  switch (ch) {
    case ChannelId::control:
      on_control(m, from, now);
      break;
    case ChannelId::vehicle_video_in:
    case ChannelId::vehicle_data_in:
      ingest(m, now);
      break;
    default:
      // user_*_out are server->user only; anything arriving here is noise
      ++malformed_;
      break;
  }
}

void ItsServer::on_control(const Message& m, Addr from, TimeMs now) {
  switch (m.type) {
    case MsgType::login:
      on_login(m, from, now);
      break;
    case MsgType::running:
      on_running(m, from, now);
      break;
    case MsgType::terminate_report:
      on_terminate(m, now);
      break;
    case MsgType::accident_notify:
      on_accident_notify(m, now);
      break;
    case MsgType::user_enable:
      on_user_enable(m, from, now);
      break;
    case MsgType::user_disable:
      on_user_disable(m, from, now);
      break;
    default:
      ++malformed_;
      break;
  }
}

void ItsServer::on_login(const Message& m, Addr from, TimeMs now) {
  auto it = vehicles_.find(m.vehicle_id);
  if (it == vehicles_.end()) {
    send_reject(from, RejectReason::not_registered, "not-registered", m.vehicle_id, now);
    event_log(now, "login rejected vehicle=" + std::to_string(m.vehicle_id));
    return;
  }
  if (it->second.credentials_hash != cred_hash(m.credentials)) {
    send_reject(from, RejectReason::bad_credentials, "bad-credentials", m.vehicle_id, now);
    return;
  }
  it->second.peer = from;
  send_ack(from, MsgType::login, m.vehicle_id, now);
  event_log(now, "login vehicle=" + std::to_string(m.vehicle_id));
}

void ItsServer::on_running(const Message& m, Addr from, TimeMs now) {
  auto it = vehicles_.find(m.vehicle_id);
  if (it == vehicles_.end()) {
    send_reject(from, RejectReason::not_registered, "not-registered", m.vehicle_id, now);
    return;
  }
  VehicleRegistryEntry& v = it->second;
  v.peer = from;
  if (v.status != VehicleStatus::running || !v.recorder) {
    RecorderConfig rc;
    rc.segment_duration_ms = cfg_.segment_duration_ms;
    rc.fps = cfg_.fps;
    rc.frame_bytes = cfg_.frame_bytes;
    rc.vehicle_id = m.vehicle_id;
    // The server recorder is clocked by stream timestamps; starting it at
    // the vehicle's reported time keeps segment boundaries aligned.
    Result<SegmentRecorder> rec = [&]() {
      if (cfg_.store_dir.empty()) {
        return SegmentRecorder::create_in_memory(rc, m.t);
      }
      std::string dir = cfg_.store_dir + "/" + std::to_string(m.vehicle_id);
      rc.segment_paths[0] = dir + "/segment1.ivsg";
      rc.segment_paths[1] = dir + "/segment2.ivsg";
      return SegmentRecorder::create_with_files(rc, m.t);
    }();
    if (!rec.ok()) {
      event_log(now, "recorder init failed vehicle=" + std::to_string(m.vehicle_id) + ": " +
                         rec.error().detail);
      return;
    }
    v.recorder.emplace(rec.take());
    v.video_buf = std::make_unique<ReorderBuffer>(cfg_.reorder_window, cfg_.reorder_hold_ms);
    v.data_buf = std::make_unique<ReorderBuffer>(cfg_.reorder_window, cfg_.reorder_hold_ms);
    v.frames_recorded = 0;
    v.telemetry_recorded = 0;
    v.status = VehicleStatus::running;
    event_log(now, "vehicle running id=" + std::to_string(m.vehicle_id));
  }
  Message req;
  req.type = MsgType::stream_request;
  req.vehicle_id = m.vehicle_id;
  send_to(from, ChannelId::control, std::move(req), now);
}

void ItsServer::on_terminate(const Message& m, TimeMs now) {
  auto it = vehicles_.find(m.vehicle_id);
  if (it == vehicles_.end()) return;
  VehicleRegistryEntry& v = it->second;
  if (v.status != VehicleStatus::running && v.status != VehicleStatus::accident) return;
  if (v.recorder) {
    // Drain the reorder buffers before sealing; the stream is over.
    if (v.video_buf) record_released(v, true, v.video_buf->flush(), now);
    if (v.data_buf) record_released(v, false, v.data_buf->flush(), now);
    v.recorder->stop(m.t);
    (void)v.recorder->sync();
  }
  v.status = VehicleStatus::stopped;
  event_log(now, "terminate vehicle=" + std::to_string(m.vehicle_id));
}

void ItsServer::on_accident_notify(const Message& m, TimeMs now) {
  auto it = vehicles_.find(m.vehicle_id);
  if (it == vehicles_.end()) return;
  it->second.status = VehicleStatus::accident;
  AccidentLogEntry entry{m.t, m.vehicle_id, m.accident_kind, m.lat, m.lon};
  accident_log_.push_back(entry);
  if (!cfg_.store_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(cfg_.store_dir, ec);
    std::ofstream out(cfg_.store_dir + "/accidents.csv", std::ios::app);
    out << entry.csv() << '\n';
  }
  event_log(now, "accident vehicle=" + std::to_string(m.vehicle_id) + " " + entry.csv());
}

void ItsServer::on_user_enable(const Message& m, Addr from, TimeMs now) {
  auto it = users_.find(m.user_id);
  if (it == users_.end() || it->second.credentials_hash != cred_hash(m.credentials)) {
    send_reject(from, RejectReason::not_registered, "not-registered", m.vehicle_id, now);
    return;
  }
  UserRegistryEntry& u = it->second;
  u.peer = from;
  if (std::find(u.vehicle_ids.begin(), u.vehicle_ids.end(), m.vehicle_id) ==
      u.vehicle_ids.end()) {
    send_reject(from, RejectReason::not_available, "vehicle not bound to user",
                m.vehicle_id, now);
    return;
  }
  auto vit = vehicles_.find(m.vehicle_id);
  if (vit == vehicles_.end()) {
    send_reject(from, RejectReason::not_registered, "vehicle not registered", m.vehicle_id,
                now);
    return;
  }
  send_ack(from, MsgType::user_enable, m.vehicle_id, now);
  bool vehicle_live = vit->second.status == VehicleStatus::running ||
                      vit->second.status == VehicleStatus::accident;
  if (vehicle_live) {
    u.enabled = true;
    u.enabled_vehicle = m.vehicle_id;
    event_log(now, "user enabled user=" + std::to_string(m.user_id) +
                       " vehicle=" + std::to_string(m.vehicle_id));
  } else {
    // Vehicle not running: stream the last recorded video and data.
    event_log(now, "replay user=" + std::to_string(m.user_id) +
                       " vehicle=" + std::to_string(m.vehicle_id));
    replay_last_segments(u, m.vehicle_id, now);
  }
}

void ItsServer::on_user_disable(const Message& m, Addr from, TimeMs now) {
  auto it = users_.find(m.user_id);
  if (it == users_.end() || it->second.credentials_hash != cred_hash(m.credentials)) {
    send_reject(from, RejectReason::not_registered, "not-registered", 0, now);
    return;
  }
  UserRegistryEntry& u = it->second;
  u.peer = from;
  u.enabled = false;
  u.enabled_vehicle = 0;
  send_ack(from, MsgType::user_disable, 0, now);
  event_log(now, "user disabled user=" + std::to_string(m.user_id));
}

void ItsServer::ingest(const Message& m, TimeMs now) {
  auto it = vehicles_.find(m.vehicle_id);
  if (it == vehicles_.end()) return;
  VehicleRegistryEntry& v = it->second;
  bool active = v.status == VehicleStatus::running || v.status == VehicleStatus::accident;
  if (!active || !v.recorder) {
    ++v.chunks_dropped;
    return;
  }
  bool video = m.type == MsgType::video;
  StreamChunk chunk{m.seq, m.t, m.payload};
  ReorderBuffer& buf = video ? *v.video_buf : *v.data_buf;
  record_released(v, video, buf.push(std::move(chunk), now), now);
}

void ItsServer::record_released(VehicleRegistryEntry& v, bool video,
                                std::vector<StreamChunk> chunks, TimeMs now) {
  for (StreamChunk& c : chunks) {
    if (!v.recorder->stopped()) {
      // EDVRS: run the same tick alternation, clocked by stream time.
      while (v.recorder->timer_enabled() && v.recorder->next_tick_at() <= c.t) {
        v.recorder->on_tick(c.t);
      }
      if (video) {
        FrameChunk f{c.seq, c.t, c.payload};
        if (v.recorder->append_frame(f).ok()) ++v.frames_recorded;
      } else {
        if (v.recorder->append_telemetry_raw(c.t, c.payload).ok()) ++v.telemetry_recorded;
      }
    }
    if (!video) {
      auto parsed = parse_telemetry_csv(std::string(c.payload.begin(), c.payload.end()));
      if (parsed.ok()) {
        v.last_fix = GpsFix{parsed.value().sample.t, parsed.value().sample.lat,
                            parsed.value().sample.lon};
        check_proximity(v, now);
      }
    }
    forward_chunk(v, video, c, now);
  }
}

void ItsServer::forward_chunk(const VehicleRegistryEntry& v, bool video,
                              const StreamChunk& c, TimeMs now) {
  for (std::uint32_t uid : v.owner_user_ids) {
    auto it = users_.find(uid);
    if (it == users_.end()) continue;
    UserRegistryEntry& u = it->second;
    if (!u.enabled || u.enabled_vehicle != v.vehicle_id) continue;
    Message m;
    m.type = video ? MsgType::video : MsgType::data;
    m.vehicle_id = v.vehicle_id;
    m.seq = c.seq;  // original stream numbering survives forwarding
    m.t = c.t;
    m.payload = c.payload;
    send_to(u.peer, video ? ChannelId::user_video_out : ChannelId::user_data_out,
            std::move(m), now);
    if (video) {
      ++u.forwarded_video;
    } else {
      ++u.forwarded_data;
    }
  }
}

void ItsServer::replay_last_segments(UserRegistryEntry& u, std::uint32_t vehicle_id,
                                     TimeMs now) {
  auto it = vehicles_.find(vehicle_id);
  if (it == vehicles_.end() || !it->second.recorder) {
    send_reject(u.peer, RejectReason::not_available, "no recorded segments", vehicle_id, now);
    return;
  }
  // Merge both segment files by record timestamp and re-stream them with
  // fresh sequence numbers; payloads and timestamps are preserved.
  std::vector<ContainerRecord> records;
  for (int index = 1; index <= 2; ++index) {
    auto bytes = it->second.recorder->segment_bytes(index);
    if (!bytes.ok()) continue;
    auto parsed = parse_container(bytes.value());
    if (!parsed.ok()) continue;
    for (auto& r : parsed.value().records) records.push_back(std::move(r));
  }
  std::stable_sort(records.begin(), records.end(),
                   [](const ContainerRecord& a, const ContainerRecord& b) { return a.t < b.t; });
  std::uint64_t video_seq = 0;
  std::uint64_t data_seq = 0;
  for (ContainerRecord& r : records) {
    bool video = r.type == kRecordFrame;
    Message m;
    m.type = video ? MsgType::video : MsgType::data;
    m.vehicle_id = vehicle_id;
    m.seq = video ? ++video_seq : ++data_seq;
    m.t = r.t;
    m.payload = std::move(r.payload);
    send_to(u.peer, video ? ChannelId::user_video_out : ChannelId::user_data_out,
            std::move(m), now);
    if (video) {
      ++u.forwarded_video;
    } else {
      ++u.forwarded_data;
    }
  }
}

void ItsServer::check_proximity(const VehicleRegistryEntry& just_updated, TimeMs now) {
  if (!just_updated.last_fix) return;
  for (const auto& [id, other] : vehicles_) {
    if (id == just_updated.vehicle_id || !other.last_fix) continue;
    bool other_active =
        other.status == VehicleStatus::running || other.status == VehicleStatus::accident;
    if (!other_active) continue;
    const GpsFix& a = *just_updated.last_fix;
    const GpsFix& b = *other.last_fix;
    TimeMs skew = a.t > b.t ? a.t - b.t : b.t - a.t;
    if (skew > cfg_.proximity_max_skew_ms) continue;

    auto key = std::minmax(just_updated.vehicle_id, id);
    double d = fix_distance_m(a, b);
    bool& near = proximity_near_[{key.first, key.second}];
    if (d <= cfg_.proximity_dcrit_m) {
      if (!near) {
        near = true;  // one warning per crossing window
        warnings_.push_back(ProximityWarning{now, key.first, key.second, d});
        event_log(now, "proximity warning " + std::to_string(key.first) + "<->" +
                           std::to_string(key.second) + " d=" + std::to_string(d));
      }
    } else {
      near = false;
    }
  }
}

void ItsServer::advance_to(TimeMs now) {
  // Gap timers: release anything whose hold window has expired.
  for (auto& [id, v] : vehicles_) {
    if (!v.recorder) continue;
    if (v.video_buf) record_released(v, true, v.video_buf->expire(now), now);
    if (v.data_buf) record_released(v, false, v.data_buf->expire(now), now);
  }
}

std::optional<TimeMs> ItsServer::next_wakeup() const {
  std::optional<TimeMs> t;
  for (const auto& [id, v] : vehicles_) {
    for (const ReorderBuffer* buf : {v.video_buf.get(), v.data_buf.get()}) {
      if (!buf) continue;
      auto d = buf->next_deadline();
      if (d && (!t || *d < *t)) t = d;
    }
  }
  return t;
}

const VehicleRegistryEntry* ItsServer::vehicle(std::uint32_t id) const {
  auto it = vehicles_.find(id);
  return it == vehicles_.end() ? nullptr : &it->second;
}

const UserRegistryEntry* ItsServer::user(std::uint32_t id) const {
  auto it = users_.find(id);
  return it == users_.end() ? nullptr : &it->second;
}

std::vector<std::uint32_t> ItsServer::active_vehicles() const {
  std::vector<std::uint32_t> out;
  for (const auto& [id, v] : vehicles_) {
    if (v.status == VehicleStatus::running || v.status == VehicleStatus::accident) {
      out.push_back(id);
    }
  }
  return out;
}

Result<Bytes> ItsServer::vehicle_segment_bytes(std::uint32_t id, int index) const {
  auto it = vehicles_.find(id);
  if (it == vehicles_.end() || !it->second.recorder) {
    return make_error("not-available", "no recorder for vehicle " + std::to_string(id));
  }
  return it->second.recorder->segment_bytes(index);
}

}  // namespace rtvc
