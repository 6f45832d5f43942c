#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rtvc/netsim.hpp"
#include "rtvc/protocol.hpp"
#include "rtvc/segment_recorder.hpp"
#include "rtvc/sensor_sim.hpp"

namespace rtvc {

struct AgentConfig {
  std::uint32_t vehicle_id = 7;
  std::string credentials = "secret";
  Addr server = 0;
  RecorderConfig recorder;
  SimConfig sim;
  TimeMs video_send_period_ms = 33;  // per-frame at 30 fps
  TimeMs data_send_period_ms = 0;    // 0 = sample period
  std::string out_dir;               // segment files + sms log; empty = in-memory
  TimeMs start_at = 0;
  double time_scale = 1.0;  // simulated ms per real ms (UDP runtime only)
};

enum class AgentPhase : std::uint8_t {
  starting,
  awaiting_request,
  streaming,
  terminated,
};

struct SmsRecord {
  TimeMs t = 0;
  std::uint32_t vehicle_id = 0;
  double lat = 0.0;
  double lon = 0.0;
  AccidentKind kind = AccidentKind::turnover;
};

// Vehicle lifecycle: local recording starts unconditionally at start();
// the agent then logs in, waits for the server's stream request, and
// serves buffered video/data on its two timers until stop or accident.
// All mutation happens on the caller's thread through deliver()/advance_to().
class VehicleAgent : public SimParty {
 public:
  static Result<std::unique_ptr<VehicleAgent>> create(AgentConfig cfg, NetworkHandle* net,
                                                      TraceFn trace = {});

  Result<void> start(TimeMs now);
  void stop(TimeMs now);  // normal stop; idempotent

  // SimParty
  void deliver(ChannelId ch, const Bytes& datagram, Addr from, TimeMs now) override;
  void advance_to(TimeMs now) override;
  std::optional<TimeMs> next_wakeup() const override;

  AgentPhase phase() const { return phase_; }
  bool started() const { return started_; }
  bool accident_terminated() const { return accident_terminated_; }
  const SegmentRecorder& recorder() const { return *recorder_; }
  const std::vector<SmsRecord>& sms_log() const { return sms_log_; }
  std::uint64_t video_chunks_sent() const { return video_sent_; }
  std::uint64_t data_chunks_sent() const { return data_sent_; }
  std::uint64_t terminate_reports_sent() const { return terminate_sent_; }
  const AgentConfig& config() const { return cfg_; }
  std::optional<GpsFix> last_gps() const { return last_gps_; }

 private:
  VehicleAgent(AgentConfig cfg, NetworkHandle* net, TraceFn trace);

  void trace(TimeMs now, const std::string& what);
  void send_control(MsgType type, TimeMs now);
  void send_login(TimeMs now);
  void on_stream_request(TimeMs now);
  void process_sample_at(TimeMs t);
  void capture_frame_at(TimeMs t);
  void fire_due_ticks(TimeMs t);
  void handle_accident(const TelemetrySample& s, AccidentKind kind);
  void flush_video(TimeMs now);
  void flush_data(TimeMs now);
  void finish_terminated(TimeMs now);

  TimeMs next_sample_at() const;
  TimeMs next_frame_at() const;

  AgentConfig cfg_;
  NetworkHandle* net_;
  TraceFn trace_fn_;

  SensorSimulator sim_;
  std::optional<SegmentRecorder> recorder_;
  AgentPhase phase_ = AgentPhase::starting;
  bool started_ = false;
  bool sensors_running_ = true;
  bool accident_terminated_ = false;

  TimeMs clock_ = 0;
  std::uint64_t control_seq_ = 0;

  // streaming state
  std::optional<TimeMs> next_video_send_;
  std::optional<TimeMs> next_data_send_;
  std::deque<FrameChunk> pending_video_;
  std::deque<std::pair<TimeMs, std::string>> pending_data_;

  // login retry
  std::optional<TimeMs> next_login_retry_;
  TimeMs login_backoff_ms_ = 1000;

  std::optional<GpsFix> last_gps_;
  std::vector<SmsRecord> sms_log_;
  std::uint64_t video_sent_ = 0;
  std::uint64_t data_sent_ = 0;
  std::uint64_t terminate_sent_ = 0;
};

}  // namespace rtvc
