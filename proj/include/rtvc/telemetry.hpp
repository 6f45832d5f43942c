#pragma once

#include <cstdint>

#include "rtvc/bytes.hpp"

namespace rtvc {

enum class TurnSignal : std::uint8_t { off = 0, left = 1, right = 2 };

// One timestamped sensor reading. Angle 0 means upright; lat/lon are WGS84.
struct TelemetrySample {
  TimeMs t = 0;
  double speed_kmh = 0.0;  // >= 0
  double angle_deg = 0.0;  // [-180, 180]
  bool airbag_deployed = false;
  double lat = 0.0;  // [-90, 90]
  double lon = 0.0;  // [-180, 180]
  bool brake = false;
  TurnSignal turn_signal = TurnSignal::off;
};

struct GpsFix {
  TimeMs t = 0;
  double lat = 0.0;
  double lon = 0.0;
};

}  // namespace rtvc
