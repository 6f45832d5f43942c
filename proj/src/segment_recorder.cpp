#include "rtvc/segment_recorder.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "rtvc/protocol.hpp"

namespace rtvc {

Result<void> MemorySegmentStorage::reset(std::span<const std::uint8_t> header) {
  buf_.assign(header.begin(), header.end());
  return {};
}

Result<void> MemorySegmentStorage::append(std::span<const std::uint8_t> record) {
  buf_.insert(buf_.end(), record.begin(), record.end());
  return {};
}

Result<Bytes> MemorySegmentStorage::read_all() const { return buf_; }

Result<std::unique_ptr<SegmentStorage>> FileSegmentStorage::open(std::string path) {
  std::error_code ec;
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) {
    std::filesystem::create_directories(parent, ec);
  }
  auto storage = std::unique_ptr<FileSegmentStorage>(new FileSegmentStorage(std::move(path)));
  storage->out_.open(storage->path_, std::ios::binary | std::ios::trunc);
  if (!storage->out_) {
    return make_error("io-error", "cannot create " + storage->path_);
  }
  return std::unique_ptr<SegmentStorage>(std::move(storage));
}

Result<void> FileSegmentStorage::reset(std::span<const std::uint8_t> header) {
  out_.close();
  out_.open(path_, std::ios::binary | std::ios::trunc);
  if (!out_) return make_error("io-error", "cannot truncate " + path_);
  out_.write(reinterpret_cast<const char*>(header.data()),
             static_cast<std::streamsize>(header.size()));
  if (!out_) return make_error("io-error", "short write to " + path_);
  return {};
}

Result<void> FileSegmentStorage::append(std::span<const std::uint8_t> record) {
  out_.write(reinterpret_cast<const char*>(record.data()),
             static_cast<std::streamsize>(record.size()));
  if (!out_) return make_error("io-error", "short write to " + path_);
  return {};
}

Result<Bytes> FileSegmentStorage::read_all() const {
  out_.flush();
  std::ifstream in(path_, std::ios::binary);
  if (!in) return make_error("io-error", "cannot open " + path_);
  return Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

Result<void> FileSegmentStorage::sync() {
  out_.flush();
  if (!out_) return make_error("io-error", "flush failed for " + path_);
  return {};
}

Result<SegmentRecorder> SegmentRecorder::create(const RecorderConfig& cfg, TimeMs now,
                                                std::unique_ptr<SegmentStorage> seg1,
                                                std::unique_ptr<SegmentStorage> seg2) {
  if (cfg.segment_duration_ms == 0 || cfg.fps == 0 || cfg.frame_bytes == 0) {
    return make_error("bad-config", "segment_duration, fps and frame_bytes must be positive");
  }
  SegmentRecorder rec(cfg, now);
  rec.segments_[0].storage = std::move(seg1);
  rec.segments_[1].storage = std::move(seg2);
  rec.segments_[0].info.index = 1;
  rec.segments_[1].info.index = 2;
  if (auto r = rec.reset_slot(rec.segments_[0], now, SegmentState::active); !r.ok()) {
    return r.error();
  }
  if (auto r = rec.reset_slot(rec.segments_[1], 0, SegmentState::empty); !r.ok()) {
    return r.error();
  }
  return rec;
}

Result<SegmentRecorder> SegmentRecorder::create_with_files(const RecorderConfig& cfg,
                                                           TimeMs now) {
  auto s1 = FileSegmentStorage::open(cfg.segment_paths[0]);
  if (!s1.ok()) return s1.error();
  auto s2 = FileSegmentStorage::open(cfg.segment_paths[1]);
  if (!s2.ok()) return s2.error();
  return create(cfg, now, s1.take(), s2.take());
}

Result<SegmentRecorder> SegmentRecorder::create_in_memory(const RecorderConfig& cfg,
                                                          TimeMs now) {
  return create(cfg, now, std::make_unique<MemorySegmentStorage>(),
                std::make_unique<MemorySegmentStorage>());
}

Result<void> SegmentRecorder::reset_slot(Slot& slot, TimeMs start_t, SegmentState st) {
  ContainerHeader h{cfg_.vehicle_id, start_t};
  Bytes header = encode_container_header(h);
  if (auto r = slot.storage->reset(header); !r.ok()) return r;
  slot.info.state = st;
  slot.info.start_t = start_t;
  slot.info.end_t.reset();
  slot.info.frame_count = 0;
  slot.info.telemetry_count = 0;
  slot.info.byte_count = header.size();
  slot.info.payload_bytes = 0;
  return {};
}

Result<void> SegmentRecorder::append_record(std::uint8_t type, TimeMs t,
                                            std::span<const std::uint8_t> payload) {
  Slot& slot = segments_[static_cast<std::size_t>(file_alternat_ - 1)];
  Bytes rec = encode_record(type, t, payload);
  if (auto r = slot.storage->append(rec); !r.ok()) return r;
  slot.info.byte_count += rec.size();
  slot.info.payload_bytes += payload.size();
  if (type == kRecordFrame) {
    ++slot.info.frame_count;
  } else {
    ++slot.info.telemetry_count;
  }
  return {};
}

Result<void> SegmentRecorder::append_frame(const FrameChunk& frame) {
  if (stopped_) return make_error("recorder-stopped");
  return append_record(kRecordFrame, frame.t, frame.payload);
}

Result<void> SegmentRecorder::append_telemetry(const TelemetrySample& sample) {
  std::string line = telemetry_csv(sample, cfg_.vehicle_id);
  return append_telemetry_raw(
      sample.t, std::span<const std::uint8_t>(
                    reinterpret_cast<const std::uint8_t*>(line.data()), line.size()));
}

Result<void> SegmentRecorder::append_telemetry_raw(TimeMs t,
                                                   std::span<const std::uint8_t> csv_line) {
  if (accident_flag_) return make_error("sensors-stopped");
  if (stopped_) return make_error("recorder-stopped");
  return append_record(kRecordTelemetry, t, csv_line);
}

void SegmentRecorder::seal_active(TimeMs end_t) {
  SegmentInfo& info = segments_[static_cast<std::size_t>(file_alternat_ - 1)].info;
  info.state = SegmentState::sealed;
  info.end_t = end_t;
}

void SegmentRecorder::on_tick(TimeMs now) {
  if (!timer_enabled_ || stopped_ || now < next_tick_at_) return;
  const TimeMs boundary = next_tick_at_;

  if (cfg_.variant == RecorderVariant::record_through_accident && accident_flag_) {
    timer_enabled_ = false;
    seal_active(boundary);
    stopped_ = true;
    return;
  }

  seal_active(boundary);
  Slot& other = segments_[static_cast<std::size_t>(2 - file_alternat_)];
  other.info.state = SegmentState::cleared;
  // Erase-then-reuse: the old contents go away at the tick, not earlier.
  (void)reset_slot(other, boundary, SegmentState::active);
  file_alternat_ = 3 - file_alternat_;
  next_tick_at_ = boundary + cfg_.segment_duration_ms;
}

AccidentActions SegmentRecorder::on_accident(TimeMs now) {
  if (accident_flag_ || stopped_) return {};
  accident_flag_ = true;
  if (cfg_.variant == RecorderVariant::stop_on_accident) {
    timer_enabled_ = false;
    seal_active(now);
    stopped_ = true;
  }
  return AccidentActions{true, true, true};
}

void SegmentRecorder::stop(TimeMs now) {
  if (stopped_) return;
  timer_enabled_ = false;
  seal_active(now);
  stopped_ = true;
}

TimeMs SegmentRecorder::recoverable_history(TimeMs at) const {
  struct Interval {
    TimeMs start;
    TimeMs end;
  };
  std::vector<Interval> covered;
  for (const auto& slot : segments_) {
    const SegmentInfo& info = slot.info;
    if (info.state == SegmentState::sealed) {
      covered.push_back({info.start_t, *info.end_t});
    } else if (info.state == SegmentState::active) {
      covered.push_back({info.start_t, std::max(at, info.start_t)});
    }
  }
  if (covered.empty()) return 0;
  std::sort(covered.begin(), covered.end(),
            [](const Interval& a, const Interval& b) { return a.start < b.start; });

  // Walk back from the latest covered instant while intervals abut.
  TimeMs end_point = std::min(at, covered.back().end);
  TimeMs chain_start = covered.back().start;
  for (std::size_t i = covered.size() - 1; i > 0; --i) {
    if (covered[i - 1].end == covered[i].start) {
      chain_start = covered[i - 1].start;
    } else {
      break;
    }
  }
  if (end_point < chain_start) return 0;
  return end_point - chain_start;
}

std::uint64_t SegmentRecorder::storage_used() const {
  return segments_[0].info.byte_count + segments_[1].info.byte_count;
}

std::uint64_t SegmentRecorder::payload_bytes() const {
  return segments_[0].info.payload_bytes + segments_[1].info.payload_bytes;
}

Result<Bytes> SegmentRecorder::segment_bytes(int index) const {
  return segments_[static_cast<std::size_t>(index - 1)].storage->read_all();
}

Result<void> SegmentRecorder::sync() {
  for (auto& slot : segments_) {
    if (auto r = slot.storage->sync(); !r.ok()) return r;
  }
  return {};
}

FullTimeRecorder::FullTimeRecorder(std::uint32_t vehicle_id,
                                   std::unique_ptr<SegmentStorage> storage,
                                   std::optional<std::uint64_t> storage_limit_bytes,
                                   TimeMs now)
    : vehicle_id_(vehicle_id), storage_(std::move(storage)), limit_(storage_limit_bytes) {
  ContainerHeader h{vehicle_id_, now};
  Bytes header = encode_container_header(h);
  (void)storage_->reset(header);
  byte_count_ = header.size();
  trace_.points.push_back({now, byte_count_});
}

Result<void> FullTimeRecorder::append_record(std::uint8_t type, TimeMs t,
                                             std::span<const std::uint8_t> payload) {
  if (stopped_) return make_error("recorder-stopped");
  std::uint64_t rec_size = kRecordOverhead + payload.size();
  if (limit_ && byte_count_ + rec_size > *limit_) {
    stopped_ = true;
    trace_.truncated = true;
    trace_.stopped_at = t;
    return make_error("storage-limit", "limit " + std::to_string(*limit_) + " reached");
  }
  Bytes rec = encode_record(type, t, payload);
  if (auto r = storage_->append(rec); !r.ok()) return r;
  byte_count_ += rec.size();
  payload_bytes_ += payload.size();
  trace_.points.push_back({t, byte_count_});
  return {};
}

Result<void> FullTimeRecorder::append_frame(const FrameChunk& frame) {
  return append_record(kRecordFrame, frame.t, frame.payload);
}

Result<void> FullTimeRecorder::append_telemetry(const TelemetrySample& sample) {
  std::string line = telemetry_csv(sample, vehicle_id_);
  return append_record(kRecordTelemetry, sample.t,
                       std::span<const std::uint8_t>(
                           reinterpret_cast<const std::uint8_t*>(line.data()), line.size()));
}

void FullTimeRecorder::on_accident(TimeMs now) {
  if (stopped_) return;
  stopped_ = true;
  trace_.stopped_at = now;
  trace_.points.push_back({now, byte_count_});
}

void FullTimeRecorder::stop(TimeMs now) { on_accident(now); }

}  // namespace rtvc
