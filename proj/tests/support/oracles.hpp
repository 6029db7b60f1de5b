#pragma once

// Reference computations used by the tests. Nothing here calls into the
// estimator code paths under test; geometry is redone from first principles.

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "dbafusion/camera.hpp"
#include "dbafusion/dba.hpp"
#include "dbafusion/liegeom.hpp"

namespace oracle {

using dbaf::Mat3;
using dbaf::Transform;
using dbaf::Vec3;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<>(lo, hi)(gen_); }
  double normal(double sigma = 1.0) { return std::normal_distribution<>(0.0, sigma)(gen_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<>(lo, hi)(gen_); }
  Vec3 vec3(double scale) { return {normal(scale), normal(scale), normal(scale)}; }
  Eigen::VectorXd vector(Eigen::Index n, double scale);
  Vec3 unit();
  /// Rotation by a uniformly random axis and an angle drawn from [0, max_angle].
  Mat3 rotation(double max_angle);
  Transform transform(double max_angle, double translation);
  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

/// Rotation matrix from a rotation vector via Eigen::AngleAxis.
Mat3 angle_axis(const Vec3& phi);
/// Rotation vector of R via Eigen::AngleAxis.
Vec3 rotation_vector(const Mat3& R);

/// First-order left perturbation exp(xi) T with xi = [rho; phi].
Transform perturb_left(const Transform& T, const Eigen::Matrix<double, 6, 1>& xi);

/// Central differences of f around zero, one column per input coordinate.
using Function = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
Eigen::MatrixXd central_jacobian(const Function& f, Eigen::Index dim, double h = 1e-6);

/// |A - B|_F / max(|B|_F, floor).
double relative_error(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double floor = 1e-9);

/// Independent pinhole model with inverse depth.
struct PixelProjection {
  Eigen::Vector2d uv;
  double depth_in_target = 0.0;
  Eigen::Matrix<double, 2, 6> d_source;  // left perturbation of T_i (world-to-camera)
  Eigen::Matrix<double, 2, 6> d_target;  // left perturbation of T_j
  Eigen::Vector2d d_lambda;
};

PixelProjection project_pixel(const Eigen::Vector2d& u, double lambda, const Transform& Ti,
                              const Transform& Tj, const dbaf::Intrinsics& K);

/// One damped Gauss-Newton step of the full pose + depth problem solved as
/// a single dense system. Pose 0 is held fixed; `damping` is added to every
/// inverse-depth diagonal entry.
struct DenseStep {
  Eigen::VectorXd poses;                 // 6 * num_frames, first block zero
  std::vector<Eigen::VectorXd> depths;   // per frame
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
};

DenseStep dense_ba_step(const std::vector<Transform>& poses,
                        const std::vector<Eigen::VectorXd>& inv_depths,
                        const std::vector<dbaf::FlowMeasurement>& flows,
                        const std::vector<int>& source_index, const std::vector<int>& target_index,
                        const dbaf::PixelGrid& grid, const dbaf::Intrinsics& K, double damping);

/// Batch least squares of a linear system with dense rows, via QR.
Eigen::VectorXd least_squares(const Eigen::MatrixXd& A, const Eigen::VectorXd& b);

/// Rotation angle (rad) between two rotation matrices.
double angle_between(const Mat3& A, const Mat3& B);

/// Closed-form similarity fit dst ~ s R src + t (Eigen::umeyama).
struct Similarity {
  double scale = 1.0;
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
};
Similarity fit_similarity(const std::vector<Vec3>& src, const std::vector<Vec3>& dst,
                          bool with_scale);

}  // namespace oracle
