#include "dbafusion/simulation.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "dbafusion/error.hpp"

namespace dbaf {

namespace {

constexpr double kFarInverseDepth = 1.0 / 200.0;
constexpr double kMaxRange = 200.0;

Vec3 reference_position(const MotionConfig& c, double t) {
  const double ws = 2.0 * std::numbers::pi / 20.0;
  const double s = c.speed * (t + c.speed_variation / ws * std::sin(ws * t));
  const double bob = c.bob_amplitude * std::sin(2.0 * std::numbers::pi * 0.23 * t);
  switch (c.kind) {
    case Motion::Stationary:
      return {0.0, 0.0, c.altitude};
    case Motion::ConstantVelocity:
      return {0.0, c.speed * t, c.altitude};
    case Motion::Circle: {
      const double th = s / c.radius;
      return {c.radius * std::cos(th), c.radius * std::sin(th), c.altitude + bob};
    }
    case Motion::Figure8: {
      const double th = s / (1.2 * c.radius);
      return {c.radius * std::sin(th), c.radius * std::sin(th) * std::cos(th), c.altitude + bob};
    }
    case Motion::StraightTurns:
      return {s, 8.0 * std::sin(s / 15.0), c.altitude + bob};
  }
  return Vec3::Zero();
}

Vec3 position_rate(const MotionConfig& c, double t, double h = 1e-4) {
  return (reference_position(c, t + h) - reference_position(c, t - h)) / (2.0 * h);
}

/// Five-point second derivative.
Vec3 position_accel(const MotionConfig& c, double t, double h = 1e-2) {
  return (-reference_position(c, t + 2 * h) + 16.0 * reference_position(c, t + h) -
          30.0 * reference_position(c, t) + 16.0 * reference_position(c, t - h) -
          reference_position(c, t - 2 * h)) /
         (12.0 * h * h);
}

Vec3 body_rate(const MotionConfig& c, double t, double h = 1e-3) {
  const Mat3 R0 = reference_pose(c, t - h).rotation_matrix();
  const Mat3 R1 = reference_pose(c, t + h).rotation_matrix();
  return so3_log(Mat3(R0.transpose() * R1)) / (2.0 * h);
}

}  // namespace

double Terrain::height(double x, double y) const {
  const double k = 2.0 * std::numbers::pi / wavelength;
  return base + amplitude * std::sin(k * x) * std::cos(k * y) +
         0.5 * amplitude * std::sin(0.7 * k * (x + y));
}

std::optional<double> Terrain::intersect(const Vec3& o, const Vec3& d) const {
  auto above = [&](double s) {
    const Vec3 p = o + s * d;
    return p.z() - height(p.x(), p.y());
  };
  const double top = base + 1.5 * std::abs(amplitude);
  double s0 = 0.0;
  if (o.z() > top) {
    if (d.z() >= 0.0) return std::nullopt;
    s0 = (o.z() - top) / -d.z();
  }
  if (above(s0) <= 0.0) return s0 > 0.0 ? std::optional<double>(s0) : std::nullopt;
  constexpr double step = 0.25;
  for (double s = s0; s < kMaxRange; s += step) {
    const double s1 = s + step;
    if (above(s1) > 0.0) continue;
    double lo = s, hi = s1;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      (above(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }
  return std::nullopt;
}

std::optional<double> MovingSphere::intersect(const Vec3& o, const Vec3& d, double t) const {
  const Vec3 c = center + t * velocity;
  const Vec3 oc = o - c;
  const double b = oc.dot(d);
  const double disc = b * b - (oc.squaredNorm() - radius * radius);
  if (disc < 0.0) return std::nullopt;
  const double s = -b - std::sqrt(disc);
  if (s <= 0.0) return std::nullopt;
  return s;
}

Eigen::VectorXd render_inv_depth(const Terrain& terrain, std::span<const MovingSphere> objects,
                                 double t, const Transform& T_cw, const PixelGrid& grid,
                                 const Intrinsics& K, ValidMask* dynamic) {
  const Transform T_wc = T_cw.inverse();
  const Mat3 R_wc = T_wc.rotation_matrix();
  const Vec3 c = T_wc.translation();
  Eigen::VectorXd lambda(grid.size());
  if (dynamic) dynamic->assign(grid.size(), 0);
  for (int p = 0; p < grid.size(); ++p) {
    const Vec2 u = grid.coords.col(p);
    const Vec3 ray((u.x() - K.cx) / K.fx, (u.y() - K.cy) / K.fy, 1.0);
    const Vec3 d = (R_wc * ray).normalized();
    std::optional<double> hit = terrain.intersect(c, d);
    bool on_object = false;
    for (const auto& obj : objects) {
      const auto s = obj.intersect(c, d, t);
      if (s && (!hit || *s < *hit)) {
        hit = s;
        on_object = true;
      }
    }
    if (!hit) {
      lambda[p] = kFarInverseDepth;
      continue;
    }
    // Depth along the optical axis is range / |ray|.
    lambda[p] = ray.norm() / *hit;
    if (dynamic && on_object) (*dynamic)[p] = 1;
  }
  return lambda;
}

Motion parse_motion(const std::string& name) {
  if (name == "circle") return Motion::Circle;
  if (name == "figure8") return Motion::Figure8;
  if (name == "straight_turns") return Motion::StraightTurns;
  if (name == "stationary") return Motion::Stationary;
  if (name == "constant_velocity") return Motion::ConstantVelocity;
  throw Error(Errc::InvalidArgument, "unknown trajectory '" + name + "'");
}

std::string to_string(Motion m) {
  switch (m) {
    case Motion::Circle: return "circle";
    case Motion::Figure8: return "figure8";
    case Motion::StraightTurns: return "straight_turns";
    case Motion::Stationary: return "stationary";
    case Motion::ConstantVelocity: return "constant_velocity";
  }
  return "circle";
}

Transform reference_pose(const MotionConfig& c, double t) {
  const Vec3 p = reference_position(c, t);
  if (c.kind == Motion::Stationary || c.kind == Motion::ConstantVelocity) {
    return Transform(Mat3::Identity(), p);
  }
  const Vec3 v = position_rate(c, t, 1e-6);
  const double yaw = std::atan2(v.y(), v.x()) - 0.5 * std::numbers::pi;
  const double roll = c.wobble * std::sin(2.0 * std::numbers::pi * 0.31 * t);
  const double pitch = c.wobble * std::sin(2.0 * std::numbers::pi * 0.17 * t + 1.0);
  const Mat3 R = rot_z(yaw) * Eigen::AngleAxisd(pitch, Vec3::UnitX()).toRotationMatrix() *
                 Eigen::AngleAxisd(roll, Vec3::UnitY()).toRotationMatrix();
  return Transform(R, p);
}

Transform default_camera_extrinsics(double tilt_deg) {
  const double a = tilt_deg * std::numbers::pi / 180.0;
  const double s = std::sin(a), c = std::cos(a);
  Mat3 R_bc;
  R_bc.col(0) = Vec3(1.0, 0.0, 0.0);
  R_bc.col(1) = Vec3(0.0, -s, -c);
  R_bc.col(2) = Vec3(0.0, c, -s);
  return Transform(R_bc, Vec3(0.05, 0.15, 0.1)).inverse();
}

SimData simulate(const SimConfig& cfg) {
  if (!(cfg.imu_rate > 0.0) || !(cfg.frame_rate > 0.0) || !(cfg.duration > 0.0)) {
    throw Error(Errc::InvalidArgument, "simulation rates and duration must be positive");
  }
  const double ratio = cfg.imu_rate / cfg.frame_rate;
  const auto stride = static_cast<std::size_t>(std::llround(ratio));
  if (std::abs(ratio - static_cast<double>(stride)) > 1e-9 || stride == 0) {
    throw Error(Errc::InvalidArgument, "imu_rate must be an integer multiple of frame_rate");
  }
  const auto num_imu = static_cast<std::size_t>(std::llround(cfg.duration * cfg.imu_rate)) + 1;
  const Vec3 g = default_gravity();

  SimData out;
  out.T_nw = Transform(rot_z(cfg.nav_yaw), cfg.nav_translation);
  out.imu_clean.resize(num_imu);
  for (std::size_t k = 0; k < num_imu; ++k) {
    const double t = static_cast<double>(k) / cfg.imu_rate;
    const Mat3 R = reference_pose(cfg.motion, t).rotation_matrix();
    ImuSample& s = out.imu_clean[k];
    s.t = t;
    s.gyro = body_rate(cfg.motion, t);
    s.accel = R.transpose() * (position_accel(cfg.motion, t) + g);
  }

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto gvec = [&] { return Vec3(gauss(rng), gauss(rng), gauss(rng)); };
  const double sg = cfg.imu_noise.gyro_density * std::sqrt(cfg.imu_rate);
  const double sa = cfg.imu_noise.accel_density * std::sqrt(cfg.imu_rate);
  out.imu = out.imu_clean;
  for (auto& s : out.imu) {
    s.gyro += cfg.gyro_bias;
    s.accel += cfg.accel_bias;
    if (cfg.imu_noise_enabled) {
      s.gyro += sg * gvec();
      s.accel += sa * gvec();
    }
  }

  NavState x;
  x.t = 0.0;
  x.T = reference_pose(cfg.motion, 0.0);
  x.v = cfg.motion.kind == Motion::Stationary ? Vec3::Zero() : position_rate(cfg.motion, 0.0);
  x.ba = cfg.accel_bias;
  x.bg = cfg.gyro_bias;
  auto record_frame = [&](std::size_t k) {
    out.frame_times.push_back(x.t);
    out.frame_truth.push_back(x);
    out.frame_imu_index.push_back(k);
  };
  record_frame(0);
  for (std::size_t k = 0; k + 1 < num_imu; ++k) {
    NavState clean = x;
    clean.ba.setZero();
    clean.bg.setZero();
    const std::span<const ImuSample> pair(out.imu_clean.data() + k, 2);
    const NavState next = predict_state(clean, pair, g);
    x.t = out.imu_clean[k + 1].t;
    x.T = next.T;
    x.v = next.v;
    if ((k + 1) % stride == 0) record_frame(k + 1);
  }

  auto on_rate = [](double t, double rate) {
    const double n = t * rate;
    return std::abs(n - std::round(n)) < 1e-6;
  };
  for (std::size_t f = 0; f < out.frame_times.size(); ++f) {
    const double t = out.frame_times[f];
    const NavState& s = out.frame_truth[f];
    const Mat3 R = s.T.rotation_matrix();
    if (cfg.gnss_rate > 0.0 && on_rate(t, cfg.gnss_rate)) {
      GnssFix fix{t, out.T_nw * (s.T.translation() + R * cfg.gnss_lever)};
      if (cfg.gnss_sigma > 0.0) fix.p += cfg.gnss_sigma * gvec();
      out.gnss.push_back(fix);
    }
    if (cfg.wheel_rate > 0.0 && on_rate(t, cfg.wheel_rate)) {
      const Vec3& w = out.imu_clean[out.frame_imu_index[f]].gyro;
      const Vec3 vb = R.transpose() * s.v + w.cross(cfg.wheel_lever);
      WheelSpeed ws{t, vb[cfg.wheel_axis]};
      if (cfg.wheel_sigma > 0.0) ws.v += cfg.wheel_sigma * gauss(rng);
      out.wheel.push_back(ws);
    }
  }
  return out;
}

SyntheticScene make_scene(const SimData& data, const SimConfig& cfg, const PixelGrid& grid,
                          const Intrinsics& K, const FlowNoise& noise,
                          std::span<const MovingSphere> objects) {
  SyntheticScene scene;
  scene.noise = noise;
  for (std::size_t f = 0; f < data.frame_truth.size(); ++f) {
    const auto id = static_cast<FrameId>(f);
    const Transform T_cw = camera_pose(data.frame_truth[f].T, cfg.T_cb);
    scene.poses[id] = T_cw;
    scene.inv_depth[id] =
        render_inv_depth(cfg.terrain, objects, data.frame_times[f], T_cw, grid, K);
  }
  return scene;
}

}  // namespace dbaf
