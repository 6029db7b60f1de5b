#pragma once

#include "dbafusion/liegeom.hpp"

namespace dbaf {

/// Antenna position fix in the navigation (ENU) frame.
struct GnssFix {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
};

/// Forward wheel speed (m/s).
struct WheelSpeed {
  double t = 0.0;
  double v = 0.0;
};

}  // namespace dbaf
