#include "rtvc/user_client.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "rtvc/container.hpp"

namespace rtvc {

UserClient::UserClient(UserConfig cfg, NetworkHandle* net, TraceFn trace)
    : cfg_(std::move(cfg)),
      net_(net),
      trace_fn_(std::move(trace)),
      video_buf_(cfg_.reorder_window, cfg_.reorder_hold_ms),
      data_buf_(cfg_.reorder_window, cfg_.reorder_hold_ms) {}

Result<std::unique_ptr<UserClient>> UserClient::create(UserConfig cfg, NetworkHandle* net,
                                                       TraceFn trace) {
  if (cfg.reorder_window == 0) {
    return make_error("bad-config", "reorder_window must be positive");
  }
  return std::unique_ptr<UserClient>(new UserClient(std::move(cfg), net, std::move(trace)));
}

void UserClient::trace(TimeMs now, const std::string& what) {
  if (trace_fn_) {
    trace_fn_("t=" + std::to_string(now) + " user=" + std::to_string(cfg_.user_id) + " " + what);
  }
}

std::string UserClient::container_path() const {
  return cfg_.out_dir + "/user_" + std::to_string(cfg_.user_id) + "_vehicle_" +
         std::to_string(cfg_.vehicle_id) + ".ivsg";
}

Result<void> UserClient::enable(TimeMs now) {
  if (!session_open_) {
    Result<std::unique_ptr<SegmentStorage>> storage = [&]() -> Result<std::unique_ptr<SegmentStorage>> {
      if (cfg_.out_dir.empty()) {
        return std::unique_ptr<SegmentStorage>(std::make_unique<MemorySegmentStorage>());
      }
      return FileSegmentStorage::open(container_path());
    }();
    if (!storage.ok()) return storage.error();
    storage_ = storage.take();
    ContainerHeader h{cfg_.vehicle_id, now};
    if (auto r = storage_->reset(encode_container_header(h)); !r.ok()) return r;
    if (!cfg_.out_dir.empty()) {
      csv_path_ = cfg_.out_dir + "/user_" + std::to_string(cfg_.user_id) + "_vehicle_" +
                  std::to_string(cfg_.vehicle_id) + ".csv";
      std::ofstream truncate(csv_path_, std::ios::trunc);
    }
    session_open_ = true;
    enabled_at_ = now;
  }
  disabled_ = false;
  reject_.reset();

  Message m;
  m.type = MsgType::user_enable;
  m.channel = ChannelId::control;
  m.vehicle_id = cfg_.vehicle_id;
  m.user_id = cfg_.user_id;
  m.credentials = cfg_.credentials;
  m.seq = ++control_seq_;
  m.t = now;
  auto encoded = encode(m);
  if (!encoded.ok()) return encoded.error();
  net_->send(ChannelId::control, cfg_.server, encoded.take(), now);
  trace(now, "enable vehicle=" + std::to_string(cfg_.vehicle_id));
  return {};
}

void UserClient::disable(TimeMs now) {
  if (!session_open_ || disabled_) return;
  Message m;
  m.type = MsgType::user_disable;
  m.channel = ChannelId::control;
  m.user_id = cfg_.user_id;
  m.credentials = cfg_.credentials;
  m.seq = ++control_seq_;
  m.t = now;
  auto encoded = encode(m);
  if (encoded.ok()) net_->send(ChannelId::control, cfg_.server, encoded.take(), now);

  // Drain: whatever is still held in the reorder buffers goes out now.
  on_released(true, video_buf_.flush());
  on_released(false, data_buf_.flush());
  flush_merged(true);
  (void)storage_->sync();
  enabled_ = false;
  disabled_ = true;
  disabled_at_ = now;
  trace(now, "disable summary " + summary_csv());
}

void UserClient::deliver(ChannelId ch, const Bytes& datagram, Addr, TimeMs now) {
  auto decoded = decode(datagram);
  if (!decoded.ok()) return;
  const Message& m = decoded.value();

  if (ch == ChannelId::control) {
    if (m.type == MsgType::ack &&
        m.ack_type == static_cast<std::uint8_t>(MsgType::user_enable)) {
      enabled_ = true;
    } else if (m.type == MsgType::reject) {
      reject_ = m.reject_detail.empty() ? std::string("rejected") : m.reject_detail;
      trace(now, "rejected: " + *reject_);
    }
    return;
  }
  if (!session_open_ || disabled_) return;
  if (ch == ChannelId::user_video_out && m.type == MsgType::video) {
    on_released(true, video_buf_.push(StreamChunk{m.seq, m.t, m.payload}, now));
  } else if (ch == ChannelId::user_data_out && m.type == MsgType::data) {
    on_released(false, data_buf_.push(StreamChunk{m.seq, m.t, m.payload}, now));
  }
}

void UserClient::on_released(bool video, std::vector<StreamChunk> chunks) {
  for (StreamChunk& c : chunks) {
    if (video) {
      ++counters_.video_chunks;
      video_frontier_ = c.t;
      video_seen_ = true;
    } else {
      ++counters_.data_lines;
      data_frontier_ = c.t;
      data_seen_ = true;
    }
    counters_.bytes += c.payload.size();
    merge_.push_back(PendingRecord{video ? kRecordFrame : kRecordTelemetry, c.t,
                                   merge_order_++, std::move(c.payload)});
  }
  flush_merged(false);
}

void UserClient::flush_merged(bool final_flush) {
  if (merge_.empty()) return;
  TimeMs watermark;
  if (final_flush) {
    watermark = ~TimeMs{0};
  } else {
    // A record is safe to write once neither stream can still deliver an
    // older one: each stream gates at its released frontier, or just
    // below its oldest held chunk while it is still catching up. Before
    // a stream has shown any traffic at all, everything waits (the
    // closing flush on disable writes whatever is left).
    auto gate = [](bool seen, const std::optional<TimeMs>& frontier,
                   std::optional<TimeMs> held) -> std::optional<TimeMs> {
      if (held) return *held == 0 ? 0 : *held - 1;
      if (seen) return frontier;
      return std::nullopt;  // silent so far: blocks all writes
    };
    std::optional<TimeMs> gv = gate(video_seen_, video_frontier_, video_buf_.oldest_held_t());
    std::optional<TimeMs> gd = gate(data_seen_, data_frontier_, data_buf_.oldest_held_t());
    if (!gv || !gd) return;
    watermark = std::min(*gv, *gd);
  }

  auto due = [&](const PendingRecord& r) { return r.t <= watermark; };
  std::stable_sort(merge_.begin(), merge_.end(), [](const PendingRecord& a,
                                                    const PendingRecord& b) {
    return a.t != b.t ? a.t < b.t : a.order < b.order;
  });
  std::size_t n = 0;
  while (n < merge_.size() && due(merge_[n])) ++n;
  for (std::size_t i = 0; i < n; ++i) write_record(merge_[i]);
  merge_.erase(merge_.begin(), merge_.begin() + static_cast<std::ptrdiff_t>(n));
}

void UserClient::write_record(const PendingRecord& r) {
  (void)storage_->append(encode_record(r.type, r.t, r.payload));
  if (r.type == kRecordTelemetry) {
    std::string line(r.payload.begin(), r.payload.end());
    csv_lines_.push_back(line);
    if (!csv_path_.empty()) {
      std::ofstream out(csv_path_, std::ios::app);
      out << line;
    }
  }
}

void UserClient::advance_to(TimeMs now) {
  if (!session_open_ || disabled_) return;
  on_released(true, video_buf_.expire(now));
  on_released(false, data_buf_.expire(now));
}

std::optional<TimeMs> UserClient::next_wakeup() const {
  if (!session_open_ || disabled_) return std::nullopt;
  auto v = video_buf_.next_deadline();
  auto d = data_buf_.next_deadline();
  if (v && d) return std::min(*v, *d);
  return v ? v : d;
}

UserCounters UserClient::counters() const {
  UserCounters c = counters_;
  c.gaps = video_buf_.gaps() + data_buf_.gaps();
  return c;
}

std::string UserClient::summary_csv() const {
  UserCounters c = counters();
  TimeMs duration = disabled_ ? disabled_at_ - enabled_at_ : 0;
  return std::to_string(cfg_.user_id) + "," + std::to_string(cfg_.vehicle_id) + "," +
         std::to_string(c.video_chunks) + "," + std::to_string(c.data_lines) + "," +
         std::to_string(c.bytes) + "," + std::to_string(c.gaps) + "," +
         std::to_string(duration);
}

Result<Bytes> UserClient::container_bytes() const {
  if (!storage_) return make_error("not-available", "session never enabled");
  return storage_->read_all();
}

}  // namespace rtvc
