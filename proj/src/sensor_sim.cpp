#include "rtvc/sensor_sim.hpp"

#include <algorithm>
#include <cmath>

namespace rtvc {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kMetersPerDegLat = 111320.0;
constexpr TimeMs kTurnoverRampMs = 1000;

double uniform01(std::mt19937_64& rng) {
  // 53-bit mantissa in [0, 1); independent of std::generate_canonical.
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

SensorSimulator::SensorSimulator(SimConfig cfg, TimeMs start_t)
    : cfg_(std::move(cfg)), rng_(cfg_.seed), t_(start_t), start_t_(start_t), last_move_t_(start_t) {
  if (cfg_.route.empty()) {
    cfg_.route.push_back(Waypoint{15.3694, 44.1910});
  }
  last_speed_kmh_ = cfg_.mu_speed_kmh;
}

double SensorSimulator::normal(double mu, double sigma) {
  // Box-Muller; one draw per call keeps the stream layout simple.
  double u1 = uniform01(rng_);
  double u2 = uniform01(rng_);
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  return mu + sigma * z;
}

double SensorSimulator::angle_at(TimeMs t) {
  const double theta = cfg_.theta_crit_deg;
  if (cfg_.accident && cfg_.accident->kind == AccidentKind::turnover &&
      t >= cfg_.accident->at) {
    // Linear ramp from upright to 2*theta over one second, then held there.
    TimeMs dt = t - cfg_.accident->at;
    double frac = dt >= kTurnoverRampMs
                      ? 1.0
                      : static_cast<double>(dt) / static_cast<double>(kTurnoverRampMs);
    return std::min(2.0 * theta * frac, 180.0);
  }
  // Baseline noise clamped at 3 sigma so it can never cross theta on its own.
  double noise = normal(0.0, cfg_.angle_sigma_deg);
  double cap = 3.0 * cfg_.angle_sigma_deg;
  return std::clamp(noise, -cap, cap);
}

Waypoint SensorSimulator::position() const {
  const auto& route = cfg_.route;
  if (route.size() == 1) return route.front();

  double remaining = traveled_m_;
  for (std::size_t i = 0; i + 1 < route.size(); ++i) {
    const Waypoint& a = route[i];
    const Waypoint& b = route[i + 1];
    double mid_lat = (a.lat + b.lat) * 0.5;
    double m_per_deg_lon = kMetersPerDegLat * std::cos(mid_lat * kPi / 180.0);
    double dx = (b.lon - a.lon) * m_per_deg_lon;
    double dy = (b.lat - a.lat) * kMetersPerDegLat;
    double leg = std::sqrt(dx * dx + dy * dy);
    if (remaining <= leg || leg == 0.0) {
      double f = leg == 0.0 ? 0.0 : remaining / leg;
      return Waypoint{a.lat + (b.lat - a.lat) * f, a.lon + (b.lon - a.lon) * f};
    }
    remaining -= leg;
  }
  return route.back();
}

TelemetrySample SensorSimulator::next_sample() {
  TimeMs t = t_ + cfg_.sample_period_ms;

  // Move along the route at the previous speed before drawing a new one.
  double m_per_ms = last_speed_kmh_ * (1000.0 / 3600.0) / 1000.0;
  traveled_m_ += m_per_ms * static_cast<double>(t - last_move_t_);
  last_move_t_ = t;

  TelemetrySample s;
  s.t = t;
  s.speed_kmh = std::max(0.0, normal(cfg_.mu_speed_kmh, cfg_.sigma_speed_kmh));
  s.angle_deg = angle_at(t);
  s.airbag_deployed = cfg_.accident && cfg_.accident->kind == AccidentKind::crash &&
                      t >= cfg_.accident->at;
  Waypoint p = position();
  s.lat = p.lat;
  s.lon = p.lon;

  last_speed_kmh_ = s.speed_kmh;
  t_ = t;
  return s;
}

FrameChunk SensorSimulator::make_frame(std::size_t frame_bytes, std::uint32_t fps) {
  FrameChunk f;
  f.seq = ++frame_seq_;
  f.t = start_t_ + ((frame_seq_ - 1) * 1000) / fps;
  f.payload = frame_payload(cfg_.seed, f.seq, frame_bytes);
  return f;
}

bool detect_vtd(const TelemetrySample& sample, double theta_crit_deg) {
  return std::abs(sample.angle_deg) > theta_crit_deg;
}

bool detect_vcd(const TelemetrySample& sample) { return sample.airbag_deployed; }

Bytes frame_payload(std::uint64_t seed, std::uint64_t seq, std::size_t frame_bytes) {
  // splitmix64 keyed by (seed, seq); cheap and byte-stable everywhere.
  std::uint64_t x = seed ^ (seq * 0x9e3779b97f4a7c15ull);
  Bytes out;
  out.reserve(frame_bytes);
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < frame_bytes; ++i) {
    if (i % 8 == 0) {
      x += 0x9e3779b97f4a7c15ull;
      word = x;
      word = (word ^ (word >> 30)) * 0xbf58476d1ce4e5b9ull;
      word = (word ^ (word >> 27)) * 0x94d049bb133111ebull;
      word ^= word >> 31;
    }
    out.push_back(static_cast<std::uint8_t>(word >> ((i % 8) * 8)));
  }
  return out;
}

}  // namespace rtvc
