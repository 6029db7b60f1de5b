#include "dbafusion/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

#include "dbafusion/error.hpp"

namespace dbaf {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::optional<double> to_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return {};
  return v;
}

double need_double(std::string_view s) {
  const auto v = to_double(s);
  if (!v || !std::isfinite(*v)) {
    throw Error(Errc::InvalidArgument, "expected a number, got '" + std::string(s) + "'");
  }
  return *v;
}

int need_int(std::string_view s) {
  s = trim(s);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw Error(Errc::InvalidArgument, "expected an integer, got '" + std::string(s) + "'");
  }
  return v;
}

bool need_bool(std::string_view s) {
  s = trim(s);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw Error(Errc::InvalidArgument, "expected a boolean, got '" + std::string(s) + "'");
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<double> need_list(std::string_view s, std::size_t count) {
  std::vector<double> out;
  for (auto part : split(trim(s), ',')) out.push_back(need_double(part));
  if (count && out.size() != count) {
    throw Error(Errc::InvalidArgument, "expected " + std::to_string(count) +
                                           " comma-separated numbers, got '" + std::string(s) + "'");
  }
  return out;
}

Vec3 need_vec3(std::string_view s) {
  const auto v = need_list(s, 3);
  return {v[0], v[1], v[2]};
}

using Setter = std::function<void(RunConfig&, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = [] {
    std::map<std::string, Setter, std::less<>> m;
    auto num = [&m](const char* key, auto member) {
      m[key] = [member](RunConfig& c, std::string_view v) { member(c) = need_double(v); };
    };
    auto integer = [&m](const char* key, auto member) {
      m[key] = [member](RunConfig& c, std::string_view v) { member(c) = need_int(v); };
    };
    auto vec = [&m](const char* key, auto member) {
      m[key] = [member](RunConfig& c, std::string_view v) { member(c) = need_vec3(v); };
    };
    auto text = [&m](const char* key, auto member) {
      m[key] = [member](RunConfig& c, std::string_view v) { member(c) = std::string(trim(v)); };
    };

    // Scenario.
    m["trajectory"] = [](RunConfig& c, std::string_view v) {
      c.sim.motion.kind = parse_motion(std::string(trim(v)));
    };
    num("duration", [](RunConfig& c) -> double& { return c.sim.duration; });
    num("speed", [](RunConfig& c) -> double& { return c.sim.motion.speed; });
    num("altitude", [](RunConfig& c) -> double& { return c.sim.motion.altitude; });
    num("radius", [](RunConfig& c) -> double& { return c.sim.motion.radius; });
    num("speed_variation", [](RunConfig& c) -> double& { return c.sim.motion.speed_variation; });
    num("bob_amplitude", [](RunConfig& c) -> double& { return c.sim.motion.bob_amplitude; });
    num("wobble", [](RunConfig& c) -> double& { return c.sim.motion.wobble; });
    num("terrain_base", [](RunConfig& c) -> double& { return c.sim.terrain.base; });
    num("terrain_amplitude", [](RunConfig& c) -> double& { return c.sim.terrain.amplitude; });
    num("terrain_wavelength", [](RunConfig& c) -> double& { return c.sim.terrain.wavelength; });
    integer("dynamic_objects", [](RunConfig& c) -> int& { return c.dynamic_objects; });
    m["seed"] = [](RunConfig& c, std::string_view v) {
      const int s = need_int(v);
      if (s < 0) throw Error(Errc::InvalidArgument, "seed must be non-negative");
      c.sim.seed = static_cast<std::uint64_t>(s);
    };

    // Sensor rates and simulated noise.
    num("imu_rate", [](RunConfig& c) -> double& { return c.sim.imu_rate; });
    num("frame_rate", [](RunConfig& c) -> double& { return c.sim.frame_rate; });
    num("gnss_rate", [](RunConfig& c) -> double& { return c.sim.gnss_rate; });
    num("wheel_rate", [](RunConfig& c) -> double& { return c.sim.wheel_rate; });
    m["imu_noise"] = [](RunConfig& c, std::string_view v) { c.sim.imu_noise_enabled = need_bool(v); };
    num("gyro_density", [](RunConfig& c) -> double& { return c.sim.imu_noise.gyro_density; });
    num("accel_density", [](RunConfig& c) -> double& { return c.sim.imu_noise.accel_density; });
    num("gyro_walk", [](RunConfig& c) -> double& { return c.sim.imu_noise.gyro_walk; });
    num("accel_walk", [](RunConfig& c) -> double& { return c.sim.imu_noise.accel_walk; });
    vec("accel_bias", [](RunConfig& c) -> Vec3& { return c.sim.accel_bias; });
    vec("gyro_bias", [](RunConfig& c) -> Vec3& { return c.sim.gyro_bias; });
    num("gnss_noise", [](RunConfig& c) -> double& { return c.sim.gnss_sigma; });
    num("wheel_noise", [](RunConfig& c) -> double& { return c.sim.wheel_sigma; });
    num("flow_sigma", [](RunConfig& c) -> double& { return c.flow.sigma; });
    num("dynamic_fraction", [](RunConfig& c) -> double& { return c.flow.dynamic_fraction; });
    num("border_margin", [](RunConfig& c) -> double& { return c.flow.border_margin; });
    num("nav_yaw", [](RunConfig& c) -> double& { return c.sim.nav_yaw; });
    vec("nav_translation", [](RunConfig& c) -> Vec3& { return c.sim.nav_translation; });

    // Camera and extrinsics.
    num("fx", [](RunConfig& c) -> double& { return c.K.fx; });
    num("fy", [](RunConfig& c) -> double& { return c.K.fy; });
    num("cx", [](RunConfig& c) -> double& { return c.K.cx; });
    num("cy", [](RunConfig& c) -> double& { return c.K.cy; });
    integer("image_width", [](RunConfig& c) -> int& { return c.K.width; });
    integer("image_height", [](RunConfig& c) -> int& { return c.K.height; });
    m["camera_tilt_deg"] = [](RunConfig& c, std::string_view v) {
      c.sim.T_cb = default_camera_extrinsics(need_double(v));
    };
    m["T_cb"] = [](RunConfig& c, std::string_view v) {
      const auto x = need_list(v, 7);
      const Quat q(x[6], x[3], x[4], x[5]);
      if (std::abs(q.norm() - 1.0) > 1e-6) {
        throw Error(Errc::InvalidArgument, "T_cb quaternion is not unit length");
      }
      c.sim.T_cb = Transform(q.normalized(), Vec3(x[0], x[1], x[2]));
    };
    vec("gnss_lever", [](RunConfig& c) -> Vec3& { return c.sim.gnss_lever; });
    vec("wheel_lever", [](RunConfig& c) -> Vec3& { return c.sim.wheel_lever; });
    m["wheel_axis"] = [](RunConfig& c, std::string_view v) {
      const int a = need_int(v);
      if (a < 0 || a > 2) throw Error(Errc::InvalidArgument, "wheel_axis must be 0, 1 or 2");
      c.sim.wheel_axis = a;
    };

    // Estimator.
    integer("window_size", [](RunConfig& c) -> int& { return c.estimator.window.window_size; });
    integer("covis_range", [](RunConfig& c) -> int& { return c.estimator.window.covis_range; });
    m["midrange_offsets"] = [](RunConfig& c, std::string_view v) {
      std::vector<int> offs;
      for (auto part : split(trim(v), ',')) offs.push_back(need_int(part));
      c.estimator.window.midrange_offsets = offs;
    };
    integer("max_active_edges",
            [](RunConfig& c) -> int& { return c.estimator.window.max_active_edges; });
    integer("max_midrange_per_kf",
            [](RunConfig& c) -> int& { return c.estimator.window.max_midrange_per_kf; });
    num("keyframe_disparity_thresh",
        [](RunConfig& c) -> double& { return c.estimator.window.keyframe_disparity_thresh; });
    integer("updates_per_epoch",
            [](RunConfig& c) -> int& { return c.estimator.window.updates_per_epoch; });
    integer("extra_update_on_keyframe",
            [](RunConfig& c) -> int& { return c.estimator.window.extra_update_on_keyframe; });
    integer("edge_maturity", [](RunConfig& c) -> int& { return c.estimator.window.edge_maturity; });
    num("midrange_disparity_factor",
        [](RunConfig& c) -> double& { return c.estimator.window.midrange_disparity_factor; });
    num("midrange_min_valid",
        [](RunConfig& c) -> double& { return c.estimator.window.midrange_min_valid; });
    integer("init_keyframes", [](RunConfig& c) -> int& { return c.estimator.window.init_keyframes; });
    integer("graph_iterations",
            [](RunConfig& c) -> int& { return c.estimator.window.graph_iterations; });
    integer("new_depth_iterations",
            [](RunConfig& c) -> int& { return c.estimator.window.new_depth_iterations; });
    num("gnss_align_distance",
        [](RunConfig& c) -> double& { return c.estimator.window.gnss_align_distance; });
    num("gnss_sigma", [](RunConfig& c) -> double& { return c.estimator.sensors.gnss_sigma; });
    num("wheel_sigma", [](RunConfig& c) -> double& { return c.estimator.sensors.wheel_sigma; });
    m["huber"] = [](RunConfig& c, std::string_view v) {
      const double h = need_double(v);
      c.estimator.sensors.huber = h > 0.0 ? std::optional<double>(h) : std::nullopt;
    };
    num("max_imu_gap", [](RunConfig& c) -> double& { return c.estimator.sensors.max_imu_gap; });
    num("bias_accel_limit",
        [](RunConfig& c) -> double& { return c.estimator.sensors.bias_accel_limit; });
    num("bias_gyro_limit",
        [](RunConfig& c) -> double& { return c.estimator.sensors.bias_gyro_limit; });
    integer("init_refine_rounds", [](RunConfig& c) -> int& { return c.estimator.init_refine_rounds; });
    integer("init_dba_iterations", [](RunConfig& c) -> int& { return c.estimator.init.dba_iterations; });
    num("max_scale_rel_std", [](RunConfig& c) -> double& { return c.estimator.init.max_scale_rel_std; });
    num("initial_inv_depth", [](RunConfig& c) -> double& { return c.estimator.init.initial_inv_depth; });
    integer("depth_min_support", [](RunConfig& c) -> int& { return c.depth_check.min_support; });
    num("depth_tau", [](RunConfig& c) -> double& { return c.depth_check.tau; });

    // Recorded inputs.
    text("imu_csv", [](RunConfig& c) -> std::string& { return c.imu_csv; });
    text("gnss_csv", [](RunConfig& c) -> std::string& { return c.gnss_csv; });
    text("wheel_csv", [](RunConfig& c) -> std::string& { return c.wheel_csv; });
    m["gnss_anchor"] = [](RunConfig& c, std::string_view v) {
      const auto x = need_list(v, 3);
      c.gnss_anchor = Geodetic{x[0], x[1], x[2]};
    };
    return m;
  }();
  return table;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

/// Reads comma- or whitespace-separated numeric rows, skipping comments and
/// a non-numeric header line. `handle` sees the fields and the 1-based line.
template <class Handle>
void read_rows(const std::filesystem::path& path, char sep, std::size_t fields, Handle handle) {
  auto in = open_in(path);
  const std::string source = path.string();
  std::string line;
  int number = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++number;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto parts = split(body, sep);
    if (first && !to_double(parts.front())) {
      first = false;
      continue;  // header
    }
    first = false;
    if (parts.size() != fields) {
      throw ParseError(source, number, 1,
                       "row has " + std::to_string(parts.size()) + " fields, expected " +
                           std::to_string(fields));
    }
    handle(parts, number, source);
  }
}

double field(const std::vector<std::string_view>& parts, std::size_t i, std::string_view line,
             int number, const std::string& source) {
  const auto v = to_double(parts[i]);
  if (!v || !std::isfinite(*v)) {
    const auto col = static_cast<int>(parts[i].data() - line.data()) + 1;
    throw ParseError(source, number, col, "bad number '" + std::string(parts[i]) + "'");
  }
  return *v;
}

}  // namespace

void sync_sensors(RunConfig& cfg) {
  auto& S = cfg.estimator.sensors;
  S.T_cb = cfg.sim.T_cb;
  S.gnss_lever = cfg.sim.gnss_lever;
  S.wheel_lever = cfg.sim.wheel_lever;
  S.wheel_axis = cfg.sim.wheel_axis;
  S.imu_noise = cfg.sim.imu_noise;
}

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
  const auto& table = setters();
  const auto it = table.find(trim(key));
  if (it == table.end()) {
    throw Error(Errc::InvalidArgument, "unknown key '" + std::string(trim(key)) + "'");
  }
  it->second(cfg, value);
  sync_sensors(cfg);
}

RunConfig parse_config(std::string_view text, const std::string& source) {
  RunConfig cfg;
  bool has_trajectory = false;
  int number = 0;
  for (auto raw : split(text, '\n')) {
    ++number;
    auto line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      const auto col = static_cast<int>(trim(line).data() - raw.data()) + 1;
      throw ParseError(source, number, col, "expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(source, number, 1, "empty key");
    const int value_col = static_cast<int>(value.data() - raw.data()) + 1;
    if (!setters().contains(key)) {
      throw ParseError(source, number, static_cast<int>(key.data() - raw.data()) + 1,
                       "unknown key '" + std::string(key) + "'");
    }
    try {
      apply_setting(cfg, key, value);
    } catch (const Error& e) {
      throw ParseError(source, number, value_col, e.what());
    }
    has_trajectory = has_trajectory || key == "trajectory";
  }
  if (!has_trajectory) throw Error(Errc::MissingField, source + ": missing required key 'trajectory'");
  sync_sensors(cfg);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::vector<ImuSample> read_imu_csv(const std::filesystem::path& path) {
  std::vector<ImuSample> out;
  read_rows(path, ',', 7, [&](const auto& parts, int number, const std::string& source) {
    const std::string_view line(parts.front().data(),
                                parts.back().data() + parts.back().size() - parts.front().data());
    double v[7];
    for (std::size_t i = 0; i < 7; ++i) v[i] = field(parts, i, line, number, source);
    if (!out.empty() && !(v[0] > out.back().t)) {
      throw ParseError(source, number, 1, "timestamps must increase strictly");
    }
    out.push_back({v[0], Vec3(v[1], v[2], v[3]), Vec3(v[4], v[5], v[6])});
  });
  return out;
}

void write_imu_csv(const std::filesystem::path& path, const std::vector<ImuSample>& samples) {
  auto out = open_out(path);
  out << "t,gx,gy,gz,ax,ay,az\n";
  for (const auto& s : samples) {
    out << s.t << ',' << s.gyro.x() << ',' << s.gyro.y() << ',' << s.gyro.z() << ','
        << s.accel.x() << ',' << s.accel.y() << ',' << s.accel.z() << '\n';
  }
}

std::vector<GnssRecord> read_gnss_csv(const std::filesystem::path& path) {
  std::vector<GnssRecord> out;
  read_rows(path, ',', 5, [&](const auto& parts, int number, const std::string& source) {
    const std::string_view line(parts.front().data(),
                                parts.back().data() + parts.back().size() - parts.front().data());
    GnssRecord r;
    r.t = field(parts, 0, line, number, source);
    r.p = Vec3(field(parts, 1, line, number, source), field(parts, 2, line, number, source),
               field(parts, 3, line, number, source));
    const auto frame = trim(parts[4]);
    if (frame == "ENU") {
      r.frame = GnssFrame::Enu;
    } else if (frame == "ECEF") {
      r.frame = GnssFrame::Ecef;
    } else {
      throw ParseError(source, number, static_cast<int>(parts[4].data() - line.data()) + 1,
                       "frame must be ENU or ECEF");
    }
    out.push_back(r);
  });
  return out;
}

void write_gnss_csv(const std::filesystem::path& path, const std::vector<GnssFix>& fixes) {
  auto out = open_out(path);
  out << "t,px,py,pz,frame\n";
  for (const auto& f : fixes) {
    out << f.t << ',' << f.p.x() << ',' << f.p.y() << ',' << f.p.z() << ",ENU\n";
  }
}

std::vector<GnssFix> to_enu(const std::vector<GnssRecord>& records,
                            const std::optional<GeoAnchor>& anchor) {
  std::vector<GnssFix> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (r.frame == GnssFrame::Enu) {
      out.push_back({r.t, r.p});
    } else if (anchor) {
      out.push_back({r.t, anchor->ecef_to_enu(r.p)});
    } else {
      throw Error(Errc::InvalidArgument, "ECEF GNSS rows need a geodetic anchor");
    }
  }
  return out;
}

std::vector<WheelSpeed> read_wheel_csv(const std::filesystem::path& path) {
  std::vector<WheelSpeed> out;
  read_rows(path, ',', 2, [&](const auto& parts, int number, const std::string& source) {
    const std::string_view line(parts.front().data(),
                                parts.back().data() + parts.back().size() - parts.front().data());
    out.push_back({field(parts, 0, line, number, source), field(parts, 1, line, number, source)});
  });
  return out;
}

void write_wheel_csv(const std::filesystem::path& path, const std::vector<WheelSpeed>& speeds) {
  auto out = open_out(path);
  out << "t,v\n";
  for (const auto& w : speeds) out << w.t << ',' << w.v << '\n';
}

std::string format_trajectory(const Trajectory& traj) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "# t tx ty tz qx qy qz qw\n";
  for (const auto& p : traj) {
    const Vec3& t = p.T.translation();
    const Quat& q = p.T.rotation();
    out << p.t << ' ' << t.x() << ' ' << t.y() << ' ' << t.z() << ' ' << q.x() << ' ' << q.y()
        << ' ' << q.z() << ' ' << q.w() << '\n';
  }
  return out.str();
}

void write_trajectory(const std::filesystem::path& path, const Trajectory& traj) {
  auto out = open_out(path);
  out << format_trajectory(traj);
}

Trajectory parse_trajectory(std::string_view text, const std::string& source) {
  Trajectory out;
  int number = 0;
  for (auto raw : split(text, '\n')) {
    ++number;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string_view> parts;
    for (auto p : split(line, ' ')) {
      if (!trim(p).empty()) parts.push_back(p);
    }
    if (parts.size() != 8) {
      throw ParseError(source, number, 1, "expected 8 fields 't tx ty tz qx qy qz qw'");
    }
    double v[8];
    for (std::size_t i = 0; i < 8; ++i) v[i] = field(parts, i, raw, number, source);
    const Quat q(v[7], v[4], v[5], v[6]);
    if (std::abs(q.norm() - 1.0) > 1e-6) throw ParseError(source, number, 1, "quaternion is not unit");
    out.push_back({v[0], Transform(q.normalized(), Vec3(v[1], v[2], v[3]))});
  }
  return out;
}

Trajectory read_trajectory(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_trajectory(ss.str(), path.string());
}

void write_ply(const std::filesystem::path& path, const PointCloudMap& map) {
  auto out = open_out(path);
  out << std::setprecision(9);
  out << "ply\nformat ascii 1.0\nelement vertex " << map.size()
      << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  for (const auto& p : map.points) out << p.xyz.x() << ' ' << p.xyz.y() << ' ' << p.xyz.z() << '\n';
}

}  // namespace dbaf
