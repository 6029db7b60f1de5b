#pragma once

#include "dbafusion/liegeom.hpp"

namespace dbaf {

/// WGS84 geodetic coordinates; angles in degrees, height in meters.
struct Geodetic {
  double lat = 0.0;
  double lon = 0.0;
  double h = 0.0;
};

Vec3 geodetic_to_ecef(const Geodetic& g);
/// Iterative inverse, converges to sub-micrometer height in a few steps.
Geodetic ecef_to_geodetic(const Vec3& p);

/// East-north-up frame anchored at a geodetic point.
class GeoAnchor {
 public:
  /// Throws InvalidArgument for |lat| > 90 or a non-finite coordinate.
  explicit GeoAnchor(const Geodetic& origin);

  const Geodetic& origin() const { return origin_; }
  const Vec3& origin_ecef() const { return origin_ecef_; }
  /// Columns are the east, north and up axes expressed in ECEF.
  const Mat3& R_en() const { return R_en_; }
  /// ENU to ECEF.
  Transform T_en() const { return Transform(R_en_, origin_ecef_); }

  Vec3 ecef_to_enu(const Vec3& p_e) const;
  Vec3 enu_to_ecef(const Vec3& p_n) const;

 private:
  Geodetic origin_;
  Vec3 origin_ecef_;
  Mat3 R_en_;
};

}  // namespace dbaf
