#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "rtvc/telemetry.hpp"

namespace rtvc {

// Synthetic stand-in for the camera: a sequence-numbered payload of
// deterministic pseudo-random bytes.
struct FrameChunk {
  std::uint64_t seq = 0;  // 1-based, strictly increasing per stream
  TimeMs t = 0;
  Bytes payload;
};

enum class AccidentKind : std::uint8_t { turnover = 1, crash = 2 };

struct AccidentScript {
  AccidentKind kind = AccidentKind::turnover;
  TimeMs at = 0;
};

struct Waypoint {
  double lat = 0.0;
  double lon = 0.0;
};

struct SimConfig {
  std::uint64_t seed = 1;
  double mu_speed_kmh = 60.0;
  double sigma_speed_kmh = 10.0;
  double theta_crit_deg = 60.0;  // critical turnover angle, strict >
  double angle_sigma_deg = 2.0;  // baseline angle noise, clamped at 3 sigma
  TimeMs sample_period_ms = 100;
  std::optional<AccidentScript> accident;
  std::vector<Waypoint> route;  // piecewise-linear; empty = default fix
};

// Deterministic sensor feed for one vehicle. For a fixed config (seed
// included) the sample and frame sequences are bit-identical across runs.
// The normal variate is generated with mt19937_64 + Box-Muller so the
// stream does not depend on the standard library's distribution internals.
class SensorSimulator {
 public:
  explicit SensorSimulator(SimConfig cfg, TimeMs start_t = 0);

  // Advances the clock by sample_period and returns the reading there.
  TelemetrySample next_sample();

  // Returns the next frame with exactly frame_bytes payload bytes. Frame
  // i (0-based) is stamped (i * 1000) / fps ms; integer arithmetic keeps
  // the frames-per-minute count exact over arbitrarily long runs.
  FrameChunk make_frame(std::size_t frame_bytes, std::uint32_t fps);

  TimeMs now() const { return t_; }
  std::uint64_t frames_made() const { return frame_seq_; }
  const SimConfig& config() const { return cfg_; }

 private:
  double normal(double mu, double sigma);
  double angle_at(TimeMs t);
  Waypoint position() const;

  SimConfig cfg_;
  std::mt19937_64 rng_;
  TimeMs t_ = 0;
  TimeMs start_t_ = 0;
  std::uint64_t frame_seq_ = 0;
  double traveled_m_ = 0.0;  // distance along the route polyline
  TimeMs last_move_t_ = 0;
  double last_speed_kmh_ = 0.0;
};

// Accident predicates. Pure; evaluated on every sample by the agents.
// Turnover fires on strict |angle| > theta, crash on airbag deployment.
bool detect_vtd(const TelemetrySample& sample, double theta_crit_deg);
bool detect_vcd(const TelemetrySample& sample);

// Deterministic frame payload shared by the simulator and tests.
Bytes frame_payload(std::uint64_t seed, std::uint64_t seq, std::size_t frame_bytes);

}  // namespace rtvc
