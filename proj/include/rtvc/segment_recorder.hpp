#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rtvc/container.hpp"
#include "rtvc/result.hpp"
#include "rtvc/sensor_sim.hpp"
#include "rtvc/telemetry.hpp"

namespace rtvc {

// Byte sink behind one segment file. reset() truncates and writes a fresh
// header; the recorder tracks sizes itself and asserts nothing about the
// medium beyond append semantics.
class SegmentStorage {
 public:
  virtual ~SegmentStorage() = default;
  virtual Result<void> reset(std::span<const std::uint8_t> header) = 0;
  virtual Result<void> append(std::span<const std::uint8_t> record) = 0;
  virtual Result<Bytes> read_all() const = 0;
  virtual Result<void> sync() = 0;
  virtual std::string describe() const = 0;
};

class MemorySegmentStorage final : public SegmentStorage {
 public:
  Result<void> reset(std::span<const std::uint8_t> header) override;
  Result<void> append(std::span<const std::uint8_t> record) override;
  Result<Bytes> read_all() const override;
  Result<void> sync() override { return {}; }
  std::string describe() const override { return "memory"; }

 private:
  Bytes buf_;
};

class FileSegmentStorage final : public SegmentStorage {
 public:
  static Result<std::unique_ptr<SegmentStorage>> open(std::string path);

  Result<void> reset(std::span<const std::uint8_t> header) override;
  Result<void> append(std::span<const std::uint8_t> record) override;
  Result<Bytes> read_all() const override;
  Result<void> sync() override;
  std::string describe() const override { return path_; }

 private:
  explicit FileSegmentStorage(std::string path) : path_(std::move(path)) {}
  std::string path_;
  mutable std::ofstream out_;  // stays open between appends
};

enum class RecorderVariant : std::uint8_t {
  stop_on_accident = 1,        // stop video at the accident instant
  record_through_accident = 2  // keep filming until the running segment ends
};

struct RecorderConfig {
  TimeMs segment_duration_ms = 300000;  // T
  RecorderVariant variant = RecorderVariant::stop_on_accident;
  std::uint32_t fps = 30;
  std::size_t frame_bytes = 12722;
  std::uint32_t vehicle_id = 0;
  std::array<std::string, 2> segment_paths{};  // used by the file-backed factory
};

enum class SegmentState : std::uint8_t { empty, active, sealed, cleared };

struct SegmentInfo {
  int index = 0;  // 1 or 2
  SegmentState state = SegmentState::empty;
  TimeMs start_t = 0;
  std::optional<TimeMs> end_t;
  std::uint64_t frame_count = 0;
  std::uint64_t telemetry_count = 0;
  std::uint64_t byte_count = 0;     // header + records, exact
  std::uint64_t payload_bytes = 0;  // record payloads only
};

// Directives handed back to the caller when an accident is first seen.
// A repeated accident call returns all-false.
struct AccidentActions {
  bool capture_gps_fix = false;
  bool notify_server = false;
  bool send_help_sms = false;
};

// Two-file alternating recorder. Recording runs in the active segment for
// T ms; each timer tick seals it, erases the other file back to its header
// and continues there, so at any instant the last T..2T ms of history are
// on disk in at most two files. Ticks are explicit events on the caller's
// clock; nothing here touches wall time.
class SegmentRecorder {
 public:
  static Result<SegmentRecorder> create(const RecorderConfig& cfg, TimeMs now,
                                        std::unique_ptr<SegmentStorage> seg1,
                                        std::unique_ptr<SegmentStorage> seg2);
  // Convenience factories.
  static Result<SegmentRecorder> create_with_files(const RecorderConfig& cfg, TimeMs now);
  static Result<SegmentRecorder> create_in_memory(const RecorderConfig& cfg, TimeMs now);

  Result<void> append_frame(const FrameChunk& frame);
  Result<void> append_telemetry(const TelemetrySample& sample);
  // Appends an already-formatted CSV line; the server uses this so its
  // copy stays byte-identical to what the vehicle sent.
  Result<void> append_telemetry_raw(TimeMs t, std::span<const std::uint8_t> csv_line);

  // Timer event. No-op unless the timer is enabled and now has reached
  // next_tick_at. Segment boundaries land on the scheduled tick times.
  void on_tick(TimeMs now);

  AccidentActions on_accident(TimeMs now);

  // Normal end of recording (vehicle stopped) - seals without the accident flow.
  void stop(TimeMs now);

  // Length of the contiguous recorded interval ending at `at` that is
  // reconstructible from non-cleared segments.
  TimeMs recoverable_history(TimeMs at) const;

  // Exact byte total of both segment files, headers included.
  std::uint64_t storage_used() const;
  std::uint64_t payload_bytes() const;

  int file_alternat() const { return file_alternat_; }
  bool accident_flag() const { return accident_flag_; }
  bool timer_enabled() const { return timer_enabled_; }
  bool stopped() const { return stopped_; }
  TimeMs next_tick_at() const { return next_tick_at_; }
  const SegmentInfo& segment(int index) const { return segments_[index - 1].info; }
  const SegmentInfo& active_segment() const { return segments_[file_alternat_ - 1].info; }
  const RecorderConfig& config() const { return cfg_; }

  Result<Bytes> segment_bytes(int index) const;
  Result<void> sync();

 private:
  struct Slot {
    SegmentInfo info;
    std::unique_ptr<SegmentStorage> storage;
  };

  SegmentRecorder(RecorderConfig cfg, TimeMs now) : cfg_(std::move(cfg)) {
    next_tick_at_ = now + cfg_.segment_duration_ms;
  }

  Result<void> reset_slot(Slot& slot, TimeMs start_t, SegmentState st);
  Result<void> append_record(std::uint8_t type, TimeMs t,
                             std::span<const std::uint8_t> payload);
  void seal_active(TimeMs end_t);

  RecorderConfig cfg_;
  std::array<Slot, 2> segments_;
  int file_alternat_ = 1;
  bool accident_flag_ = false;
  bool timer_enabled_ = true;
  bool stopped_ = false;
  TimeMs next_tick_at_ = 0;
};

// Single-file baseline: grows linearly until stop, accident or the
// configured limit; used for the scheme comparison reports.
struct StorageTracePoint {
  TimeMs t = 0;
  std::uint64_t bytes = 0;
};

struct StorageTrace {
  std::vector<StorageTracePoint> points;
  bool truncated = false;  // storage limit reached
  std::optional<TimeMs> stopped_at;
};

class FullTimeRecorder {
 public:
  FullTimeRecorder(std::uint32_t vehicle_id, std::unique_ptr<SegmentStorage> storage,
                   std::optional<std::uint64_t> storage_limit_bytes, TimeMs now);

  Result<void> append_frame(const FrameChunk& frame);
  Result<void> append_telemetry(const TelemetrySample& sample);
  // Appends an already-formatted CSV line; the server uses this so its
  // copy stays byte-identical to what the vehicle sent.
  Result<void> append_telemetry_raw(TimeMs t, std::span<const std::uint8_t> csv_line);
  void on_accident(TimeMs now);
  void stop(TimeMs now);

  bool stopped() const { return stopped_; }
  std::uint64_t storage_used() const { return byte_count_; }
  std::uint64_t payload_bytes() const { return payload_bytes_; }
  const StorageTrace& trace() const { return trace_; }

 private:
  Result<void> append_record(std::uint8_t type, TimeMs t,
                             std::span<const std::uint8_t> payload);

  std::uint32_t vehicle_id_;
  std::unique_ptr<SegmentStorage> storage_;
  std::optional<std::uint64_t> limit_;
  std::uint64_t byte_count_ = 0;
  std::uint64_t payload_bytes_ = 0;
  bool stopped_ = false;
  StorageTrace trace_;
};

}  // namespace rtvc
