#pragma once

#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "dbafusion/factors.hpp"

namespace dbaf {

struct OptimizeOptions {
  double tolerance = 1e-8;  // on |dx|_inf
  int max_backtracks = 10;
  /// Relative LDLT pivot threshold below which the system counts as singular.
  double pivot_tolerance = 1e-14;
};

struct OptimizeReport {
  int iterations = 0;  // linear solves
  int steps = 0;       // accepted non-zero updates
  bool converged = false;
  std::vector<double> costs;  // initial, then after every accepted step
};

/// Sliding window of NavStates with the factors acting on them.
class FactorGraph {
 public:
  using FactorPtr = std::shared_ptr<const Factor>;

  explicit FactorGraph(const Transform& T_cb = Transform(), const Vec3& gravity = default_gravity())
      : T_cb_(T_cb), gravity_(gravity) {}

  const Transform& T_cb() const { return T_cb_; }
  const Vec3& gravity() const { return gravity_; }
  void set_gravity(const Vec3& g) { gravity_ = g; }

  /// States are kept in insertion order.
  void add_state(StateKey key, const NavState& x);
  bool has_state(StateKey key) const { return states_.contains(key); }
  const NavState& state(StateKey key) const;
  void set_state(StateKey key, const NavState& x);
  const std::vector<StateKey>& keys() const { return order_; }
  std::size_t size() const { return order_.size(); }

  /// Throws IndexOutOfWindow when a factor key is not a window state.
  void add_factor(FactorPtr f);
  const std::vector<FactorPtr>& factors() const { return factors_; }
  /// Removes every factor of the given kind.
  void remove_factors(FactorKind kind);
  /// Removes a state that no factor references (dropping non-keyframes).
  /// Throws DanglingFactor otherwise.
  void remove_state(StateKey key);
  /// Removes factors referencing `key`.
  void remove_factors_touching(StateKey key);

  void add_imu_factor(StateKey k, StateKey k1, Preintegration pre);
  void add_visual_factor(const VisualConstraint& vc, bool marginal = false);
  /// Queued until an alignment is set, when `queue_if_unaligned`; otherwise
  /// throws NotAligned.
  void add_gnss_factor(StateKey key, const GnssFix& fix, const Vec3& lever, double sigma,
                       bool queue_if_unaligned = true, std::optional<double> huber = {});
  void add_wheel_factor(StateKey key, double speed, const Vec3& gyro, const Vec3& lever,
                        double sigma, int axis = 1, std::optional<double> huber = {});

  const std::optional<Transform>& nav_alignment() const { return T_nw_; }
  /// Fixes T_nw and turns queued GNSS fixes whose states are still in the
  /// window into factors. Returns the number of factors added.
  int set_nav_alignment(const Transform& T_nw);
  std::size_t queued_gnss() const { return gnss_queue_.size(); }

  double total_cost() const;
  OptimizeReport optimize(int max_iters, const OptimizeOptions& options = {});

  /// Eliminates `oldest` (the first state) by Schur complement. Consumes
  /// priors, the IMU factor to the next state, GNSS/wheel/linear factors on
  /// it and the marginal visual constraint; drops window visual factors.
  void marginalize(StateKey oldest, const std::optional<VisualConstraint>& marginal_visual = {});

 private:
  struct QueuedGnss {
    StateKey key;
    GnssFix fix;
    Vec3 lever;
    double sigma;
    std::optional<double> huber;
  };

  std::vector<NavState> gather(const Factor& f) const;
  double cost_with(const std::map<StateKey, NavState>& states) const;

  Transform T_cb_;
  Vec3 gravity_;
  std::optional<Transform> T_nw_;
  std::vector<StateKey> order_;
  std::map<StateKey, NavState> states_;
  std::vector<FactorPtr> factors_;
  std::vector<QueuedGnss> gnss_queue_;
};

}  // namespace dbaf
