// Batch runner: simulate a scenario, run the estimator, evaluate trajectories.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dbafusion/error.hpp"
#include "dbafusion/evaluation.hpp"
#include "dbafusion/io.hpp"
#include "dbafusion/runner.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kEstimationError = 3;

using nlohmann::json;

std::vector<double> parse_lengths(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw dbaf::Error(dbaf::Errc::InvalidArgument, "bad segment length '" + item + "'");
    }
  }
  return out;
}

dbaf::RunConfig build_config(const std::string& path, const std::vector<std::string>& overrides,
                             std::optional<int> seed) {
  dbaf::RunConfig cfg = dbaf::load_config(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw dbaf::Error(dbaf::Errc::InvalidArgument, "override '" + kv + "' is not key=value");
    }
    dbaf::apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (seed) dbaf::apply_setting(cfg, "seed", std::to_string(*seed));
  cfg.estimator.window.validate();
  cfg.K.validate();
  return cfg;
}

json ate_json(const dbaf::AteResult& a) {
  return {{"rmse", a.rmse}, {"pairs", a.pairs}, {"scale", a.scale}};
}

json evaluate(const dbaf::Trajectory& est, const dbaf::Trajectory& ref,
              const std::vector<double>& lengths) {
  json j;
  for (const auto& [name, mode] : {std::pair{"none", dbaf::AlignMode::None},
                                   std::pair{"4dof", dbaf::AlignMode::FourDof},
                                   std::pair{"se3", dbaf::AlignMode::SE3},
                                   std::pair{"sim3", dbaf::AlignMode::Sim3}}) {
    try {
      j["ate"][name] = ate_json(dbaf::evaluate_ate(est, ref, mode));
    } catch (const dbaf::Error& e) {
      j["ate"][name] = e.what();
    }
  }
  try {
    const auto rpe = dbaf::evaluate_rpe(est, ref, lengths);
    j["rpe"] = {{"t_rel_percent", rpe.t_rel}, {"r_rel_deg_per_100m", rpe.r_rel},
                {"segments", rpe.segments}};
  } catch (const dbaf::Error& e) {
    j["rpe"] = e.what();
  }
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense bundle adjustment fusion with IMU, GNSS and wheel speed"};
  app.require_subcommand(0, 1);

  std::string config_path;
  std::string scheme = "all";
  std::optional<int> seed;
  std::string out_dir = "out";
  std::string eval_ref;
  std::string rpe_lengths = "100,200,300,400,500,600,700,800";
  std::vector<std::string> overrides;
  std::optional<int> max_frames;

  app.add_option("--config", config_path, "Scenario configuration file");
  app.add_option("--scheme", scheme, "Sensor scheme")
      ->check(CLI::IsMember({"vio", "vio+gnss", "vio+wss", "all"}));
  app.add_option("--seed", seed, "Random seed override");
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--eval-ref", eval_ref, "Reference trajectory replacing the simulated truth");
  app.add_option("--rpe-lengths", rpe_lengths, "Comma-separated RPE segment lengths in meters");
  app.add_option("--set", overrides, "Configuration override key=value")->allow_extra_args(false);
  app.add_option("--max-frames", max_frames, "Stop after this many frames");

  auto* simulate_cmd = app.add_subcommand("simulate", "Write simulated sensor streams as CSV");
  std::string sim_config;
  std::string sim_out = "sim";
  std::vector<std::string> sim_overrides;
  simulate_cmd->add_option("--config", sim_config, "Scenario configuration file")->required();
  simulate_cmd->add_option("--out", sim_out, "Output directory");
  simulate_cmd->add_option("--set", sim_overrides, "Configuration override key=value");

  auto* eval_cmd = app.add_subcommand("eval", "Compare two trajectory files");
  std::string est_path, ref_path, align = "se3";
  std::string eval_lengths = "100,200,300,400,500,600,700,800";
  eval_cmd->add_option("--est", est_path, "Estimated trajectory")->required();
  eval_cmd->add_option("--ref", ref_path, "Reference trajectory")->required();
  eval_cmd->add_option("--align", align, "Alignment")
      ->check(CLI::IsMember({"se3", "sim3", "4dof", "none"}));
  eval_cmd->add_option("--rpe-lengths", eval_lengths, "Comma-separated RPE segment lengths");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  if (*eval_cmd) {
    try {
      const auto est = dbaf::read_trajectory(est_path);
      const auto ref = dbaf::read_trajectory(ref_path);
      json j = evaluate(est, ref, parse_lengths(eval_lengths));
      j["ate"]["selected"] = ate_json(dbaf::evaluate_ate(est, ref, dbaf::parse_align_mode(align)));
      std::cout << j.dump(2) << '\n';
      return 0;
    } catch (const dbaf::Error& e) {
      std::cerr << "error: " << e.what() << '\n';
      const auto c = e.code();
      return c == dbaf::Errc::TooFewPairs || c == dbaf::Errc::TrajectoryTooShort
                 ? kEstimationError
                 : kConfigError;
    }
  }

  dbaf::RunConfig cfg;
  try {
    if (*simulate_cmd) {
      cfg = build_config(sim_config, sim_overrides, std::nullopt);
      const dbaf::SimData data = dbaf::simulate(cfg.sim);
      dbaf::write_imu_csv(std::filesystem::path(sim_out) / "imu.csv", data.imu);
      dbaf::write_gnss_csv(std::filesystem::path(sim_out) / "gnss.csv", data.gnss);
      dbaf::write_wheel_csv(std::filesystem::path(sim_out) / "wheel.csv", data.wheel);
      dbaf::Trajectory truth;
      for (const auto& x : data.frame_truth) truth.push_back({x.t, x.T});
      dbaf::write_trajectory(std::filesystem::path(sim_out) / "truth.txt", truth);
      std::cout << "wrote " << data.imu.size() << " IMU samples, " << data.gnss.size()
                << " GNSS fixes, " << data.wheel.size() << " wheel speeds to " << sim_out << '\n';
      return 0;
    }
    if (config_path.empty()) {
      std::cerr << "error: --config is required\n";
      return kConfigError;
    }
    cfg = build_config(config_path, overrides, seed);
  } catch (const dbaf::Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    dbaf::RunOptions options;
    options.scheme = dbaf::parse_scheme(scheme);
    options.max_frames = max_frames;
    const dbaf::RunResult result = dbaf::run(cfg, options);
    dbaf::export_run(result, out_dir);

    json summary;
    summary["scheme"] = scheme;
    summary["frames"] = result.epochs.size();
    summary["tracked"] = result.estimate.size();
    summary["wall_time_s"] = result.wall_time;
    summary["map_points"] = result.map.size();
    if (result.init_time) {
      summary["init"] = {{"t", *result.init_time}, {"scale", result.init->scale},
                         {"scale_rel_std", result.init->scale_rel_std}};
    }
    summary["alignment_events"] = result.align_events;
    if (result.align_time) summary["alignment_time"] = *result.align_time;

    const auto lengths = parse_lengths(rpe_lengths);
    if (!eval_ref.empty()) {
      summary["eval"] = evaluate(result.estimate_nav.empty() ? result.estimate : result.estimate_nav,
                                 dbaf::read_trajectory(eval_ref), lengths);
    } else if (result.estimate.size() >= 3) {
      summary["eval"] = evaluate(result.estimate, result.truth, lengths);
      if (!result.estimate_nav.empty()) {
        summary["eval_nav"] = evaluate(result.estimate_nav, result.truth_nav, lengths);
      }
    }
    dbaf::StageTiming total;
    for (const auto& e : result.epochs) total += e.timing;
    summary["timing_s"] = {{"flow", total.flow},
                           {"hessian", total.hessian},
                           {"optimization", total.optimization},
                           {"depth_update", total.depth_update},
                           {"marginalization", total.marginalization}};
    std::ofstream(std::filesystem::path(out_dir) / "summary.json") << summary.dump(2) << '\n';
    std::cout << summary.dump(2) << '\n';
    if (result.align_time) {
      std::cout << "GNSS alignment at t=" << *result.align_time << " s\n";
    }
  } catch (const dbaf::Error& e) {
    std::cerr << "estimation failed: " << e.what() << '\n';
    return kEstimationError;
  }
  return 0;
}
