#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rtvc/netsim.hpp"
#include "rtvc/protocol.hpp"
#include "rtvc/segment_recorder.hpp"

namespace rtvc {

struct UserConfig {
  std::uint32_t user_id = 100;
  std::string credentials = "secret";
  Addr server = 0;
  std::uint32_t vehicle_id = 7;
  std::string out_dir;  // empty = in-memory container
  std::uint32_t reorder_window = kDefaultReorderWindow;
  TimeMs reorder_hold_ms = kDefaultReorderHoldMs;
  double time_scale = 1.0;  // UDP runtime only
};

struct UserCounters {
  std::uint64_t video_chunks = 0;
  std::uint64_t data_lines = 0;
  std::uint64_t bytes = 0;
  std::uint64_t gaps = 0;
};

// User endpoint: enable a vehicle's stream, persist whatever arrives on
// the two user channels into one container (frames and telemetry merged
// in timestamp order) plus a plain telemetry CSV, and report a summary.
class UserClient : public SimParty {
 public:
  static Result<std::unique_ptr<UserClient>> create(UserConfig cfg, NetworkHandle* net,
                                                    TraceFn trace = {});

  Result<void> enable(TimeMs now);
  void disable(TimeMs now);

  // SimParty
  void deliver(ChannelId ch, const Bytes& datagram, Addr from, TimeMs now) override;
  void advance_to(TimeMs now) override;
  std::optional<TimeMs> next_wakeup() const override;

  bool enabled() const { return enabled_; }
  bool rejected() const { return reject_.has_value(); }
  const std::optional<std::string>& reject_reason() const { return reject_; }
  UserCounters counters() const;
  TimeMs enabled_at() const { return enabled_at_; }
  TimeMs disabled_at() const { return disabled_at_; }

  // user_id,vehicle_id,video_chunks,data_lines,bytes,gaps,duration_ms
  std::string summary_csv() const;

  Result<Bytes> container_bytes() const;
  std::string container_path() const;
  const UserConfig& config() const { return cfg_; }

 private:
  UserClient(UserConfig cfg, NetworkHandle* net, TraceFn trace);

  struct PendingRecord {
    std::uint8_t type;
    TimeMs t;
    std::uint64_t order;
    Bytes payload;
  };

  void trace(TimeMs now, const std::string& what);
  void on_released(bool video, std::vector<StreamChunk> chunks);
  void flush_merged(bool final_flush);
  void write_record(const PendingRecord& r);

  UserConfig cfg_;
  NetworkHandle* net_;
  TraceFn trace_fn_;

  bool session_open_ = false;  // container header written
  bool enabled_ = false;
  bool disabled_ = false;
  std::optional<std::string> reject_;
  TimeMs enabled_at_ = 0;
  TimeMs disabled_at_ = 0;
  std::uint64_t control_seq_ = 0;

  ReorderBuffer video_buf_;
  ReorderBuffer data_buf_;

  // Released-but-unwritten records, merged by (t, arrival order) so the
  // container never goes backwards in time even across the two streams.
  std::vector<PendingRecord> merge_;
  std::uint64_t merge_order_ = 0;
  std::optional<TimeMs> video_frontier_;
  std::optional<TimeMs> data_frontier_;
  bool video_seen_ = false;
  bool data_seen_ = false;

  std::unique_ptr<SegmentStorage> storage_;
  std::string csv_path_;
  std::vector<std::string> csv_lines_;  // kept in memory for tests
  UserCounters counters_;
};

}  // namespace rtvc
