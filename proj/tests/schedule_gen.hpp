#pragma once

// Randomized event schedules shared by the recorder property tests and
// the acceptance suite, plus drivers that feed one schedule to the real
// recorder and to the pseudocode oracle with identical tick ordering.

#include <random>
#include <string>
#include <vector>

#include "recorder_oracle.hpp"
#include "rtvc/segment_recorder.hpp"

namespace rtvc_test {

struct RecEvent {
  enum class Kind { frame, telemetry, accident, stop } kind;
  std::uint64_t t = 0;
  std::uint64_t seq = 0;
  std::vector<std::uint8_t> payload;  // frame bytes or telemetry line
};

struct ScheduleParams {
  std::uint64_t max_events = 200;
  std::uint64_t max_step_ms = 400;
  std::size_t max_payload = 24;
  double accident_probability = 0.5;
  bool allow_stop = true;
  bool accident_on_tick_boundary = false;  // exercised by a dedicated edge test
  std::uint64_t segment_duration_ms = 1000;
};

inline std::vector<RecEvent> random_schedule(std::mt19937_64& rng, const ScheduleParams& p) {
  std::vector<RecEvent> ev;
  std::uint64_t n = 1 + rng() % p.max_events;
  std::uint64_t t = 0;
  std::uint64_t frame_seq = 0;
  bool accident_planned = (rng() >> 20) * 0x1.0p-44 < p.accident_probability;
  std::uint64_t accident_index = accident_planned ? rng() % n : n;

  for (std::uint64_t i = 0; i < n; ++i) {
    t += 1 + rng() % p.max_step_ms;
    if (i == accident_index) {
      std::uint64_t at = t;
      if (!p.accident_on_tick_boundary && at % p.segment_duration_ms == 0) {
        ++at;  // exact boundary coincidence has its own deterministic test
        ++t;
      }
      ev.push_back(RecEvent{RecEvent::Kind::accident, at, 0, {}});
      continue;
    }
    if (rng() % 3 == 0) {
      std::string line = "s," + std::to_string(t) + "," + std::to_string(rng() % 1000) + "\n";
      ev.push_back(RecEvent{RecEvent::Kind::telemetry, t, 0,
                            std::vector<std::uint8_t>(line.begin(), line.end())});
    } else {
      std::vector<std::uint8_t> payload(1 + rng() % p.max_payload);
      for (auto& b : payload) b = static_cast<std::uint8_t>(rng());
      ev.push_back(RecEvent{RecEvent::Kind::frame, t, ++frame_seq, std::move(payload)});
    }
  }
  if (p.allow_stop && rng() % 4 == 0) {
    t += 1 + rng() % p.max_step_ms;
    ev.push_back(RecEvent{RecEvent::Kind::stop, t, 0, {}});
  }
  return ev;
}

inline void drive_impl(rtvc::SegmentRecorder& r, const std::vector<RecEvent>& events) {
  for (const RecEvent& e : events) {
    if (e.kind == RecEvent::Kind::accident) {
      while (r.timer_enabled() && r.next_tick_at() < e.t) r.on_tick(r.next_tick_at());
      (void)r.on_accident(e.t);
      while (r.timer_enabled() && r.next_tick_at() <= e.t) r.on_tick(r.next_tick_at());
      continue;
    }
    while (r.timer_enabled() && r.next_tick_at() <= e.t) r.on_tick(r.next_tick_at());
    switch (e.kind) {
      case RecEvent::Kind::frame:
        (void)r.append_frame(rtvc::FrameChunk{e.seq, e.t, e.payload});
        break;
      case RecEvent::Kind::telemetry:
        (void)r.append_telemetry_raw(e.t, e.payload);
        break;
      case RecEvent::Kind::stop:
        r.stop(e.t);
        break;
      default:
        break;
    }
  }
}

inline void drive_oracle(PseudocodeRecorder& o, const std::vector<RecEvent>& events) {
  for (const RecEvent& e : events) {
    if (e.kind == RecEvent::Kind::accident) {
      while (o.timer_enabled && o.next_tick < e.t) o.timer1_tick();
      o.on_accident(e.t);
      o.run_ticks_until(e.t);
      continue;
    }
    o.run_ticks_until(e.t);
    switch (e.kind) {
      case RecEvent::Kind::frame:
        o.frame(e.t, e.payload);
        break;
      case RecEvent::Kind::telemetry:
        o.telemetry(e.t, std::string(e.payload.begin(), e.payload.end()));
        break;
      case RecEvent::Kind::stop:
        o.vehicle_stop(e.t);
        break;
      default:
        break;
    }
  }
}

}  // namespace rtvc_test
