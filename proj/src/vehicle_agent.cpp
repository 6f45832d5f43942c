#include "rtvc/vehicle_agent.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

namespace rtvc {

namespace {
constexpr TimeMs kLoginBackoffStartMs = 1000;
constexpr TimeMs kLoginBackoffCapMs = 32000;
}  // namespace

VehicleAgent::VehicleAgent(AgentConfig cfg, NetworkHandle* net, TraceFn trace)
    : cfg_(std::move(cfg)),
      net_(net),
      trace_fn_(std::move(trace)),
      sim_(cfg_.sim, cfg_.start_at) {}

Result<std::unique_ptr<VehicleAgent>> VehicleAgent::create(AgentConfig cfg,
                                                           NetworkHandle* net,
                                                           TraceFn trace) {
  if (cfg.video_send_period_ms == 0) {
    return make_error("bad-config", "video_send_period must be positive");
  }
  if (cfg.sim.sample_period_ms == 0 || cfg.sim.sigma_speed_kmh < 0 ||
      cfg.sim.theta_crit_deg <= 0) {
    return make_error("bad-config", "invalid sim parameters");
  }
  if (cfg.data_send_period_ms == 0) cfg.data_send_period_ms = cfg.sim.sample_period_ms;
  cfg.recorder.vehicle_id = cfg.vehicle_id;
  return std::unique_ptr<VehicleAgent>(new VehicleAgent(std::move(cfg), net, std::move(trace)));
}

void VehicleAgent::trace(TimeMs now, const std::string& what) {
  if (trace_fn_) {
    trace_fn_("t=" + std::to_string(now) + " vehicle=" + std::to_string(cfg_.vehicle_id) +
              " " + what);
  }
}

Result<void> VehicleAgent::start(TimeMs now) {
  if (started_) return make_error("already-started");

  RecorderConfig rc = cfg_.recorder;
  Result<SegmentRecorder> rec = [&]() {
    if (cfg_.out_dir.empty()) {
      return SegmentRecorder::create_in_memory(rc, now);
    }
    rc.segment_paths[0] = cfg_.out_dir + "/segment1.ivsg";
    rc.segment_paths[1] = cfg_.out_dir + "/segment2.ivsg";
    return SegmentRecorder::create_with_files(rc, now);
  }();
  if (!rec.ok()) return rec.error();
  recorder_.emplace(rec.take());

  started_ = true;
  clock_ = now;
  phase_ = AgentPhase::awaiting_request;
  send_login(now);
  login_backoff_ms_ = kLoginBackoffStartMs;
  next_login_retry_ = now + login_backoff_ms_;
  trace(now, "started");
  return {};
}

void VehicleAgent::send_control(MsgType type, TimeMs now) {
  Message m;
  m.type = type;
  m.channel = ChannelId::control;
  m.vehicle_id = cfg_.vehicle_id;
  m.seq = ++control_seq_;
  m.t = now;
  if (type == MsgType::login) m.credentials = cfg_.credentials;
  if (type == MsgType::accident_notify && last_gps_) {
    m.lat = last_gps_->lat;
    m.lon = last_gps_->lon;
  }
  auto encoded = encode(m);
  if (encoded.ok()) {
    net_->send(ChannelId::control, cfg_.server, encoded.take(), now);
  }
}

void VehicleAgent::send_login(TimeMs now) {
  send_control(MsgType::login, now);
  send_control(MsgType::running, now);
}

void VehicleAgent::on_stream_request(TimeMs now) {
  next_login_retry_.reset();
  if (phase_ != AgentPhase::awaiting_request) {
    // Single session; acknowledge the repeat and change nothing.
    Message m;
    m.type = MsgType::ack;
    m.channel = ChannelId::control;
    m.vehicle_id = cfg_.vehicle_id;
    m.seq = ++control_seq_;
    m.t = now;
    m.ack_type = static_cast<std::uint8_t>(MsgType::stream_request);
    if (auto encoded = encode(m); encoded.ok()) {
      net_->send(ChannelId::control, cfg_.server, encoded.take(), now);
    }
    return;
  }
  phase_ = AgentPhase::streaming;
  next_video_send_ = now + cfg_.video_send_period_ms;
  next_data_send_ = now + cfg_.data_send_period_ms;
  trace(now, "streaming");
}

void VehicleAgent::deliver(ChannelId ch, const Bytes& datagram, Addr, TimeMs now) {
  if (phase_ == AgentPhase::terminated || !started_) return;
  auto decoded = decode(datagram);
  if (!decoded.ok()) {
    trace(now, "malformed datagram: " + decoded.error().code);
    return;
  }
  const Message& m = decoded.value();
  if (ch != ChannelId::control) return;
  switch (m.type) {
    case MsgType::stream_request:
      on_stream_request(now);
      break;
    case MsgType::ack:
      break;
    case MsgType::reject:
      trace(now, "rejected: " + m.reject_detail);
      next_login_retry_.reset();  // registration problems do not heal by retrying
      break;
    default:
      break;
  }
}

TimeMs VehicleAgent::next_sample_at() const {
  return sim_.now() + cfg_.sim.sample_period_ms;
}

TimeMs VehicleAgent::next_frame_at() const {
  return cfg_.start_at + (sim_.frames_made() * 1000) / cfg_.recorder.fps;
}

std::optional<TimeMs> VehicleAgent::next_wakeup() const {
  if (!started_ || phase_ == AgentPhase::terminated) return std::nullopt;
  std::optional<TimeMs> t;
  auto consider = [&t](std::optional<TimeMs> c) {
    if (c && (!t || *c < *t)) t = c;
  };
  if (sensors_running_) consider(next_sample_at());
  if (!recorder_->stopped()) consider(next_frame_at());
  if (recorder_->timer_enabled()) consider(recorder_->next_tick_at());
  if (phase_ == AgentPhase::streaming) {
    consider(next_video_send_);
    consider(next_data_send_);
  }
  consider(next_login_retry_);
  return t;
}

void VehicleAgent::fire_due_ticks(TimeMs t) {
  while (recorder_->timer_enabled() && recorder_->next_tick_at() <= t) {
    TimeMs boundary = recorder_->next_tick_at();
    recorder_->on_tick(boundary);
    trace(boundary, "tick alternat=" + std::to_string(recorder_->file_alternat()));
  }
  if (recorder_->stopped() && recorder_->accident_flag() &&
      phase_ != AgentPhase::terminated) {
    finish_terminated(t);  // record-through variant ends at its last tick
  }
}

void VehicleAgent::handle_accident(const TelemetrySample& s, AccidentKind kind) {
  // Drain anything captured before the accident so the detecting sample
  // reaches the server ahead of the notification.
  flush_video(s.t);
  flush_data(s.t);

  AccidentActions actions = recorder_->on_accident(s.t);
  sensors_running_ = false;
  accident_terminated_ = true;

  if (actions.capture_gps_fix) {
    last_gps_ = GpsFix{s.t, s.lat, s.lon};
  }
  if (actions.notify_server) {
    Message m;
    m.type = MsgType::accident_notify;
    m.channel = ChannelId::control;
    m.vehicle_id = cfg_.vehicle_id;
    m.seq = ++control_seq_;
    m.t = s.t;
    m.accident_kind = kind;
    m.lat = last_gps_->lat;
    m.lon = last_gps_->lon;
    auto encoded = encode(m);
    if (encoded.ok()) net_->send(ChannelId::control, cfg_.server, encoded.take(), s.t);
  }
  if (actions.send_help_sms) {
    SmsRecord sms{s.t, cfg_.vehicle_id, last_gps_->lat, last_gps_->lon, kind};
    sms_log_.push_back(sms);
    if (!cfg_.out_dir.empty()) {
      std::ofstream out(cfg_.out_dir + "/sms_log.csv", std::ios::app);
      out << sms.t << ',' << sms.vehicle_id << ',' << sms.lat << ',' << sms.lon << ','
          << (sms.kind == AccidentKind::turnover ? "turnover" : "crash") << '\n';
    }
  }
  trace(s.t, std::string("accident kind=") +
                 (kind == AccidentKind::turnover ? "turnover" : "crash"));

  if (recorder_->stopped()) {
    finish_terminated(s.t);  // stop-on-accident variant
  }
}

void VehicleAgent::process_sample_at(TimeMs t) {
  TelemetrySample s = sim_.next_sample();
  last_gps_ = GpsFix{s.t, s.lat, s.lon};

  std::optional<AccidentKind> kind;
  if (detect_vcd(s)) {
    kind = AccidentKind::crash;
  } else if (detect_vtd(s, cfg_.sim.theta_crit_deg)) {
    kind = AccidentKind::turnover;
  }

  if (!kind) {
    fire_due_ticks(t);
    if (phase_ == AgentPhase::terminated) return;
    if (recorder_->append_telemetry(s).ok() && phase_ == AgentPhase::streaming) {
      pending_data_.emplace_back(s.t, telemetry_csv(s, cfg_.vehicle_id));
    }
    return;
  }

  // The accident preempts a tick scheduled for this same instant; the
  // detecting sample is still recorded before sensors stop.
  if (recorder_->append_telemetry(s).ok() && phase_ == AgentPhase::streaming) {
    pending_data_.emplace_back(s.t, telemetry_csv(s, cfg_.vehicle_id));
  }
  handle_accident(s, *kind);
  fire_due_ticks(t);
}

void VehicleAgent::capture_frame_at(TimeMs t) {
  fire_due_ticks(t);
  if (recorder_->stopped()) return;
  FrameChunk f = sim_.make_frame(cfg_.recorder.frame_bytes, cfg_.recorder.fps);
  if (recorder_->append_frame(f).ok() && phase_ == AgentPhase::streaming) {
    pending_video_.push_back(std::move(f));
  }
}

void VehicleAgent::flush_video(TimeMs now) {
  while (!pending_video_.empty()) {
    FrameChunk f = std::move(pending_video_.front());
    pending_video_.pop_front();
    auto encoded = encode(make_video_chunk(cfg_.vehicle_id, f.seq, f.t, std::move(f.payload)));
    if (encoded.ok()) {
      net_->send(ChannelId::vehicle_video_in, cfg_.server, encoded.take(), now);
      ++video_sent_;
    } else {
      trace(now, "frame dropped: " + encoded.error().code);
    }
  }
}

void VehicleAgent::flush_data(TimeMs now) {
  std::uint64_t seq = data_sent_;
  while (!pending_data_.empty()) {
    auto [t, line] = std::move(pending_data_.front());
    pending_data_.pop_front();
    auto encoded = encode(make_data_chunk(cfg_.vehicle_id, ++seq, t, std::move(line)));
    if (encoded.ok()) {
      net_->send(ChannelId::vehicle_data_in, cfg_.server, encoded.take(), now);
      ++data_sent_;
    }
  }
}

void VehicleAgent::finish_terminated(TimeMs now) {
  if (phase_ == AgentPhase::terminated) return;
  flush_video(now);
  flush_data(now);
  send_control(MsgType::terminate_report, now);
  ++terminate_sent_;
  phase_ = AgentPhase::terminated;
  next_video_send_.reset();
  next_data_send_.reset();
  next_login_retry_.reset();
  (void)recorder_->sync();
  trace(now, "terminated");
}

void VehicleAgent::stop(TimeMs now) {
  if (!started_ || phase_ == AgentPhase::terminated) return;
  recorder_->stop(now);
  finish_terminated(now);
}

void VehicleAgent::advance_to(TimeMs now) {
  if (!started_) return;
  while (phase_ != AgentPhase::terminated) {
    std::optional<TimeMs> t = next_wakeup();
    if (!t || *t > now) break;

    if (sensors_running_ && next_sample_at() == *t) {
      process_sample_at(*t);
      continue;
    }
    if (recorder_->timer_enabled() && recorder_->next_tick_at() == *t) {
      fire_due_ticks(*t);
      continue;
    }
    if (!recorder_->stopped() && next_frame_at() == *t) {
      capture_frame_at(*t);
      continue;
    }
    if (phase_ == AgentPhase::streaming && next_video_send_ && *next_video_send_ == *t) {
      flush_video(*t);
      next_video_send_ = *t + cfg_.video_send_period_ms;
      continue;
    }
    if (phase_ == AgentPhase::streaming && next_data_send_ && *next_data_send_ == *t) {
      flush_data(*t);
      next_data_send_ = *t + cfg_.data_send_period_ms;
      continue;
    }
    if (next_login_retry_ && *next_login_retry_ == *t) {
      send_login(*t);
      login_backoff_ms_ = std::min<TimeMs>(login_backoff_ms_ * 2, kLoginBackoffCapMs);
      next_login_retry_ = *t + login_backoff_ms_;
      continue;
    }
    break;  // defensive: no recognized event at *t
  }
  clock_ = std::max(clock_, now);
}

}  // namespace rtvc
