#include "dbafusion/geodetic.hpp"

#include <cmath>
#include <numbers>

#include "dbafusion/error.hpp"

namespace dbaf {

namespace {

constexpr double kA = 6378137.0;
constexpr double kF = 1.0 / 298.257223563;
constexpr double kE2 = kF * (2.0 - kF);

double rad(double deg) { return deg * std::numbers::pi / 180.0; }
double deg(double rad) { return rad * 180.0 / std::numbers::pi; }

}  // namespace

Vec3 geodetic_to_ecef(const Geodetic& g) {
  const double lat = rad(g.lat), lon = rad(g.lon);
  const double s = std::sin(lat);
  const double N = kA / std::sqrt(1.0 - kE2 * s * s);
  return {(N + g.h) * std::cos(lat) * std::cos(lon), (N + g.h) * std::cos(lat) * std::sin(lon),
          (N * (1.0 - kE2) + g.h) * s};
}

Geodetic ecef_to_geodetic(const Vec3& p) {
  const double r = std::hypot(p.x(), p.y());
  const double lon = std::atan2(p.y(), p.x());
  double lat = std::atan2(p.z(), r * (1.0 - kE2));
  for (int it = 0; it < 10; ++it) {
    const double s = std::sin(lat);
    const double N = kA / std::sqrt(1.0 - kE2 * s * s);
    // Fixed point of tan(lat) = (z + e2 N sin(lat)) / r; avoids dividing by cos near the poles.
    const double next = std::atan2(p.z() + kE2 * N * s, r);
    const bool done = std::abs(next - lat) < 1e-15;
    lat = next;
    if (done) break;
  }
  // Height along the normal, valid at every latitude.
  const double s = std::sin(lat), c = std::cos(lat);
  const double h = r * c + p.z() * s - kA * std::sqrt(1.0 - kE2 * s * s);
  return {deg(lat), deg(lon), h};
}

GeoAnchor::GeoAnchor(const Geodetic& origin) : origin_(origin) {
  if (!std::isfinite(origin.lat) || !std::isfinite(origin.lon) || !std::isfinite(origin.h) ||
      std::abs(origin.lat) > 90.0) {
    throw Error(Errc::InvalidArgument, "invalid geodetic anchor");
  }
  origin_ecef_ = geodetic_to_ecef(origin);
  const double sl = std::sin(rad(origin.lat)), cl = std::cos(rad(origin.lat));
  const double so = std::sin(rad(origin.lon)), co = std::cos(rad(origin.lon));
  R_en_.col(0) = Vec3(-so, co, 0.0);
  R_en_.col(1) = Vec3(-sl * co, -sl * so, cl);
  R_en_.col(2) = Vec3(cl * co, cl * so, sl);
}

Vec3 GeoAnchor::ecef_to_enu(const Vec3& p_e) const {
  return R_en_.transpose() * (p_e - origin_ecef_);
}

Vec3 GeoAnchor::enu_to_ecef(const Vec3& p_n) const { return origin_ecef_ + R_en_ * p_n; }

}  // namespace dbaf
