#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "rtvc/sensor_sim.hpp"

using namespace rtvc;

TEST_CASE("zero variance pins the speed to mu") {
  SimConfig cfg;
  cfg.mu_speed_kmh = 60.0;
  cfg.sigma_speed_kmh = 0.0;
  SensorSimulator sim(cfg);
  for (int i = 0; i < 100; ++i) {
    CHECK(sim.next_sample().speed_kmh == doctest::Approx(60.0));
  }
}

TEST_CASE("same seed, same sequence") {
  SimConfig cfg;
  cfg.seed = 1234;
  cfg.accident = AccidentScript{AccidentKind::turnover, 3000};
  SensorSimulator a(cfg), b(cfg);
  for (int i = 0; i < 500; ++i) {
    TelemetrySample sa = a.next_sample();
    TelemetrySample sb = b.next_sample();
    CHECK(sa.t == sb.t);
    CHECK(sa.speed_kmh == sb.speed_kmh);
    CHECK(sa.angle_deg == sb.angle_deg);
    CHECK(sa.lat == sb.lat);
    CHECK(sa.lon == sb.lon);
  }
  FrameChunk fa = a.make_frame(64, 30);
  FrameChunk fb = b.make_frame(64, 30);
  CHECK(fa.payload == fb.payload);
}

TEST_CASE("sample statistics track the configured distribution") {
  // mu 60, sigma 10: the >=0 clamp is a 6-sigma event, negligible here.
  SimConfig cfg;
  cfg.seed = 42;
  cfg.mu_speed_kmh = 60.0;
  cfg.sigma_speed_kmh = 10.0;
  SensorSimulator sim(cfg);
  const int n = 10000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    double v = sim.next_sample().speed_kmh;
    CHECK(v >= 0.0);
    sum += v;
    sum2 += v * v;
  }
  double mean = sum / n;
  double stddev = std::sqrt(sum2 / n - mean * mean);
  CHECK(std::abs(mean - 60.0) < 0.5);
  CHECK(std::abs(stddev - 10.0) < 0.5);
}

TEST_CASE("turnover predicate is strict") {
  TelemetrySample s;
  s.angle_deg = 95;
  CHECK(detect_vtd(s, 60.0));
  s.angle_deg = 0;
  CHECK_FALSE(detect_vtd(s, 60.0));
  s.angle_deg = 60.0;  // "greater than", not ">="
  CHECK_FALSE(detect_vtd(s, 60.0));
  s.angle_deg = -95;
  CHECK(detect_vtd(s, 60.0));
}

TEST_CASE("crash predicate mirrors the airbag flag") {
  TelemetrySample s;
  CHECK_FALSE(detect_vcd(s));
  s.airbag_deployed = true;
  CHECK(detect_vcd(s));
}

TEST_CASE("scripted crash fires on the first sample past the script time") {
  SimConfig cfg;
  cfg.sample_period_ms = 300;
  cfg.accident = AccidentScript{AccidentKind::crash, 5000};
  SensorSimulator sim(cfg);
  TimeMs first_detection = 0;
  for (int i = 0; i < 100 && first_detection == 0; ++i) {
    TelemetrySample s = sim.next_sample();
    if (detect_vcd(s)) first_detection = s.t;
  }
  // sample grid is 300,600,...; first point at or after 5000 is 5100
  CHECK(first_detection == 5100);
}

TEST_CASE("scripted turnover crosses theta within the ramp second") {
  SimConfig cfg;
  cfg.sample_period_ms = 100;
  cfg.theta_crit_deg = 60.0;
  cfg.accident = AccidentScript{AccidentKind::turnover, 4000};
  SensorSimulator sim(cfg);
  TimeMs first_detection = 0;
  for (int i = 0; i < 200 && first_detection == 0; ++i) {
    TelemetrySample s = sim.next_sample();
    if (detect_vtd(s, cfg.theta_crit_deg)) first_detection = s.t;
  }
  CHECK(first_detection > 4000);
  CHECK(first_detection <= 5000);
  // past the one-second ramp the angle holds at 2*theta
  TelemetrySample late{};
  while (late.t < 5000) late = sim.next_sample();
  CHECK(std::abs(late.angle_deg) == doctest::Approx(120.0));
}

TEST_CASE("no scripted accident means no detections, ever") {
  SimConfig cfg;
  cfg.seed = 7;
  SensorSimulator sim(cfg);
  for (int i = 0; i < 20000; ++i) {
    TelemetrySample s = sim.next_sample();
    CHECK_FALSE(detect_vtd(s, cfg.theta_crit_deg));
    CHECK_FALSE(detect_vcd(s));
    CHECK(s.speed_kmh >= 0.0);
    CHECK(std::abs(s.angle_deg) <= 3.0 * cfg.angle_sigma_deg);
  }
}

TEST_CASE("frame sequence and byte rate are exact") {
  SimConfig cfg;
  SensorSimulator sim(cfg);
  FrameChunk f1 = sim.make_frame(12722, 30);
  FrameChunk f2 = sim.make_frame(12722, 30);
  CHECK(f1.seq == 1);
  CHECK(f2.seq == 2);
  CHECK(f1.t == 0);
  CHECK(f2.t == 33);

  std::uint64_t bytes = f1.payload.size() + f2.payload.size();
  std::uint64_t count = 2;
  while (count < 1800) {
    FrameChunk f = sim.make_frame(12722, 30);
    CHECK(f.t < 60000);  // all 1800 frames land inside the first minute
    bytes += f.payload.size();
    ++count;
  }
  CHECK(count == 1800);
  CHECK(bytes == 22899600);  // 22.9 MB/min
  CHECK(sim.make_frame(12722, 30).t == 60000);  // frame 1801 opens minute two
}

TEST_CASE("frame payloads are a pure function of seed and sequence") {
  Bytes a = frame_payload(99, 5, 256);
  Bytes b = frame_payload(99, 5, 256);
  Bytes c = frame_payload(99, 6, 256);
  Bytes d = frame_payload(98, 5, 256);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(a != d);
  CHECK(a.size() == 256);
}

TEST_CASE("gps follows the route at the driven speed") {
  SimConfig cfg;
  cfg.sigma_speed_kmh = 0.0;
  cfg.mu_speed_kmh = 36.0;  // 10 m/s
  cfg.sample_period_ms = 1000;
  cfg.route = {{15.0, 44.0}, {15.1, 44.0}};  // due north, ~11.1 km
  SensorSimulator sim(cfg);
  TelemetrySample first = sim.next_sample();
  CHECK(first.lat > 15.0);
  CHECK(first.lat < 15.001);
  CHECK(first.lon == doctest::Approx(44.0));
  TelemetrySample later = first;
  for (int i = 0; i < 59; ++i) later = sim.next_sample();
  // one minute at 10 m/s = 600 m = 0.00539 degrees of latitude
  CHECK(later.lat == doctest::Approx(15.0 + 600.0 / 111320.0).epsilon(0.01));
}

TEST_CASE("a single-waypoint route pins the fix") {
  SimConfig cfg;
  cfg.route = {{15.3694, 44.1910}};
  SensorSimulator sim(cfg);
  for (int i = 0; i < 10; ++i) {
    TelemetrySample s = sim.next_sample();
    CHECK(s.lat == doctest::Approx(15.3694));
    CHECK(s.lon == doctest::Approx(44.1910));
  }
}
