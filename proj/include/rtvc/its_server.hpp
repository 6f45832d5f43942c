#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rtvc/netsim.hpp"
#include "rtvc/protocol.hpp"
#include "rtvc/segment_recorder.hpp"

namespace rtvc {

enum class VehicleStatus : std::uint8_t { registered, running, stopped, accident };

struct ServerConfig {
  TimeMs segment_duration_ms = 300000;  // server-side T (EDVRS)
  std::uint32_t fps = 30;
  std::size_t frame_bytes = 12722;
  std::string registry_path;  // empty = in-memory registry only
  std::string store_dir;      // empty = in-memory segment storage
  std::uint32_t reorder_window = kDefaultReorderWindow;
  TimeMs reorder_hold_ms = kDefaultReorderHoldMs;
  double proximity_dcrit_m = 10.0;
  TimeMs proximity_max_skew_ms = 1000;
  double time_scale = 1.0;  // UDP runtime only
};

struct AccidentLogEntry {
  TimeMs t = 0;
  std::uint32_t vehicle_id = 0;
  AccidentKind kind = AccidentKind::turnover;
  double lat = 0.0;
  double lon = 0.0;
  std::string csv() const;
};

struct ProximityWarning {
  TimeMs t = 0;
  std::uint32_t vehicle_a = 0;
  std::uint32_t vehicle_b = 0;
  double distance_m = 0.0;
};

struct VehicleRegistryEntry {
  std::uint32_t vehicle_id = 0;
  std::string credentials_hash;
  VehicleStatus status = VehicleStatus::registered;
  Addr peer = 0;
  std::vector<std::uint32_t> owner_user_ids;

  std::optional<SegmentRecorder> recorder;  // exists while running/accident
  std::unique_ptr<ReorderBuffer> video_buf;
  std::unique_ptr<ReorderBuffer> data_buf;
  std::optional<GpsFix> last_fix;
  std::uint64_t frames_recorded = 0;
  std::uint64_t telemetry_recorded = 0;
  std::uint64_t chunks_dropped = 0;  // arrived while not active
};

struct UserRegistryEntry {
  std::uint32_t user_id = 0;
  std::string credentials_hash;
  std::vector<std::uint32_t> vehicle_ids;
  bool enabled = false;
  std::uint32_t enabled_vehicle = 0;
  Addr peer = 0;
  std::uint64_t forwarded_video = 0;
  std::uint64_t forwarded_data = 0;
  std::uint64_t forward_seq = 0;  // replay sequence numbering
};

// ITS Centre server core. Five channels arrive through deliver(); all of
// the observable behaviour is deterministic in the order of delivered
// datagrams. Per-vehicle recording runs the same dual-segment scheme as
// the vehicle, clocked by the timestamps carried in the stream itself.
// Forwarding to users happens after a chunk is recorded and never gates
// ingestion (single-threaded event loop; sends do not block).
class ItsServer : public SimParty {
 public:
  static Result<std::unique_ptr<ItsServer>> create(ServerConfig cfg, NetworkHandle* net,
                                                   TraceFn trace = {});

  // Manual registration ("already-registered" on duplicates). Entries are
  // appended to the registry file when one is configured.
  Result<void> register_vehicle(std::uint32_t vehicle_id, const std::string& credentials);
  Result<void> register_user(std::uint32_t user_id, const std::string& credentials,
                             std::vector<std::uint32_t> vehicle_ids);

  // SimParty
  void deliver(ChannelId ch, const Bytes& datagram, Addr from, TimeMs now) override;
  void advance_to(TimeMs now) override;
  std::optional<TimeMs> next_wakeup() const override;

  const VehicleRegistryEntry* vehicle(std::uint32_t id) const;
  const UserRegistryEntry* user(std::uint32_t id) const;
  std::vector<std::uint32_t> active_vehicles() const;
  const std::vector<AccidentLogEntry>& accident_log() const { return accident_log_; }
  const std::vector<ProximityWarning>& proximity_warnings() const { return warnings_; }
  std::uint64_t malformed_datagrams() const { return malformed_; }

  // Server-side segment bytes for a vehicle (live or last-sealed).
  Result<Bytes> vehicle_segment_bytes(std::uint32_t id, int index) const;

  const ServerConfig& config() const { return cfg_; }

 private:
  ItsServer(ServerConfig cfg, NetworkHandle* net, TraceFn trace);

  Result<void> load_registry();
  Result<void> persist_line(const std::string& line);
  void trace(TimeMs now, const std::string& what);
  void event_log(TimeMs now, const std::string& what);

  void on_control(const Message& m, Addr from, TimeMs now);
  void on_login(const Message& m, Addr from, TimeMs now);
  void on_running(const Message& m, Addr from, TimeMs now);
  void on_terminate(const Message& m, TimeMs now);
  void on_accident_notify(const Message& m, TimeMs now);
  void on_user_enable(const Message& m, Addr from, TimeMs now);
  void on_user_disable(const Message& m, Addr from, TimeMs now);

  void ingest(const Message& m, TimeMs now);
  void record_released(VehicleRegistryEntry& v, bool video,
                       std::vector<StreamChunk> chunks, TimeMs now);
  void forward_chunk(const VehicleRegistryEntry& v, bool video, const StreamChunk& c,
                     TimeMs now);
  void replay_last_segments(UserRegistryEntry& u, std::uint32_t vehicle_id, TimeMs now);
  void check_proximity(const VehicleRegistryEntry& just_updated, TimeMs now);

  void send_to(Addr to, ChannelId ch, Message m, TimeMs now);
  void send_ack(Addr to, MsgType acked, std::uint32_t vehicle_id, TimeMs now);
  void send_reject(Addr to, RejectReason reason, const std::string& detail,
                   std::uint32_t vehicle_id, TimeMs now);

  ServerConfig cfg_;
  NetworkHandle* net_;
  TraceFn trace_fn_;
  std::map<std::uint32_t, VehicleRegistryEntry> vehicles_;
  std::map<std::uint32_t, UserRegistryEntry> users_;
  std::vector<AccidentLogEntry> accident_log_;
  std::vector<ProximityWarning> warnings_;
  std::map<std::pair<std::uint32_t, std::uint32_t>, bool> proximity_near_;
  std::uint64_t control_seq_ = 0;
  std::uint64_t malformed_ = 0;
};

}  // namespace rtvc
