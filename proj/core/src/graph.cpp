#include "dbafusion/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "dbafusion/error.hpp"

namespace dbaf {

namespace {

bool touches(const Factor& f, StateKey key) {
  const auto& k = f.keys();
  return std::find(k.begin(), k.end(), key) != k.end();
}

std::string key_str(StateKey k) { return std::to_string(k); }

}  // namespace

void FactorGraph::add_state(StateKey key, const NavState& x) {
  if (states_.contains(key)) {
    throw Error(Errc::InvalidArgument, "state " + key_str(key) + " already in the window");
  }
  order_.push_back(key);
  states_[key] = x;
}

const NavState& FactorGraph::state(StateKey key) const {
  const auto it = states_.find(key);
  if (it == states_.end()) {
    throw Error(Errc::IndexOutOfWindow, "state " + key_str(key) + " is not in the window");
  }
  return it->second;
}

void FactorGraph::set_state(StateKey key, const NavState& x) {
  state(key);
  states_[key] = x;
}

void FactorGraph::add_factor(FactorPtr f) {
  for (StateKey k : f->keys()) {
    if (!states_.contains(k)) {
      throw Error(Errc::IndexOutOfWindow, "factor references state " + key_str(k) +
                                              " outside the window");
    }
  }
  factors_.push_back(std::move(f));
}

void FactorGraph::remove_factors(FactorKind kind) {
  std::erase_if(factors_, [kind](const FactorPtr& f) { return f->kind() == kind; });
}

void FactorGraph::remove_factors_touching(StateKey key) {
  std::erase_if(factors_, [key](const FactorPtr& f) { return touches(*f, key); });
  std::erase_if(gnss_queue_, [key](const QueuedGnss& q) { return q.key == key; });
}

void FactorGraph::remove_state(StateKey key) {
  state(key);
  for (const auto& f : factors_) {
    if (touches(*f, key)) {
      throw Error(Errc::DanglingFactor, "a factor still references state " + key_str(key));
    }
  }
  std::erase(order_, key);
  states_.erase(key);
  std::erase_if(gnss_queue_, [key](const QueuedGnss& q) { return q.key == key; });
}

void FactorGraph::add_imu_factor(StateKey k, StateKey k1, Preintegration pre) {
  add_factor(std::make_shared<ImuFactor>(k, k1, std::move(pre), gravity_));
}

void FactorGraph::add_visual_factor(const VisualConstraint& vc, bool marginal) {
  std::vector<NavState> lin;
  lin.reserve(vc.poses.size());
  for (StateKey k : vc.poses) lin.push_back(state(k));
  add_factor(std::make_shared<VisualFactor>(vc, std::move(lin), T_cb_, marginal));
}

void FactorGraph::add_gnss_factor(StateKey key, const GnssFix& fix, const Vec3& lever,
                                  double sigma, bool queue_if_unaligned,
                                  std::optional<double> huber) {
  state(key);
  if (!T_nw_) {
    if (!queue_if_unaligned) {
      throw Error(Errc::NotAligned, "GNSS factor added before the navigation alignment");
    }
    gnss_queue_.push_back({key, fix, lever, sigma, huber});
    return;
  }
  auto f = std::make_shared<GnssFactor>(key, fix, *T_nw_, lever, sigma);
  f->set_huber(huber);
  add_factor(std::move(f));
}

void FactorGraph::add_wheel_factor(StateKey key, double speed, const Vec3& gyro,
                                   const Vec3& lever, double sigma, int axis,
                                   std::optional<double> huber) {
  auto f = std::make_shared<WheelFactor>(key, speed, gyro, lever, sigma, axis);
  f->set_huber(huber);
  add_factor(std::move(f));
}

int FactorGraph::set_nav_alignment(const Transform& T_nw) {
  T_nw_ = T_nw;
  int added = 0;
  for (const auto& q : gnss_queue_) {
    if (!states_.contains(q.key)) continue;
    add_gnss_factor(q.key, q.fix, q.lever, q.sigma, false, q.huber);
    ++added;
  }
  gnss_queue_.clear();
  return added;
}

std::vector<NavState> FactorGraph::gather(const Factor& f) const {
  std::vector<NavState> xs;
  xs.reserve(f.keys().size());
  for (StateKey k : f.keys()) xs.push_back(states_.at(k));
  return xs;
}

double FactorGraph::cost_with(const std::map<StateKey, NavState>& states) const {
  double c = 0.0;
  std::vector<NavState> xs;
  for (const auto& f : factors_) {
    xs.clear();
    for (StateKey k : f->keys()) xs.push_back(states.at(k));
    c += f->cost(xs);
  }
  return c;
}

double FactorGraph::total_cost() const { return cost_with(states_); }

OptimizeReport FactorGraph::optimize(int max_iters, const OptimizeOptions& options) {
  OptimizeReport report;
  const auto N = static_cast<Eigen::Index>(order_.size());
  if (N == 0) {
    report.converged = true;
    return report;
  }
  std::map<StateKey, Eigen::Index> index;
  for (Eigen::Index i = 0; i < N; ++i) index[order_[i]] = i;

  double cost = total_cost();
  report.costs.push_back(cost);
  const Eigen::Index D = kStateDim * N;

  for (int it = 0; it < max_iters; ++it) {
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(D, D);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(D);
    for (const auto& f : factors_) {
      const FactorLinearization lin = f->linearize(gather(*f));
      const auto& keys = f->keys();
      for (std::size_t a = 0; a < keys.size(); ++a) {
        const Eigen::Index ra = kStateDim * index[keys[a]];
        const auto la = kStateDim * static_cast<Eigen::Index>(a);
        b.segment<kStateDim>(ra) += lin.b.segment<kStateDim>(la);
        for (std::size_t c = 0; c < keys.size(); ++c) {
          const Eigen::Index rc = kStateDim * index[keys[c]];
          const auto lc = kStateDim * static_cast<Eigen::Index>(c);
          H.block<kStateDim, kStateDim>(ra, rc) += lin.H.block<kStateDim, kStateDim>(la, lc);
        }
      }
    }
    ++report.iterations;

    const Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    const Eigen::VectorXd piv = ldlt.vectorD();
    const double top = piv.cwiseAbs().maxCoeff();
    if (ldlt.info() != Eigen::Success || !piv.allFinite() || !(top > 0.0) ||
        piv.minCoeff() <= options.pivot_tolerance * top) {
      throw Error(Errc::SingularSystem, "normal equations are rank deficient (min pivot " +
                                            std::to_string(piv.minCoeff()) + ", max " +
                                            std::to_string(top) + ")");
    }
    const Eigen::VectorXd dx = ldlt.solve(b);
    if (!dx.allFinite()) throw Error(Errc::SingularSystem, "non-finite update");
    if (dx.lpNorm<Eigen::Infinity>() < options.tolerance) {
      report.converged = true;
      break;
    }

    double step = 1.0;
    bool accepted = false;
    for (int bt = 0; bt <= options.max_backtracks; ++bt, step *= 0.5) {
      std::map<StateKey, NavState> cand = states_;
      for (Eigen::Index i = 0; i < N; ++i) {
        NavState& x = cand[order_[i]];
        x = x.retract(step * dx.segment<kStateDim>(kStateDim * i));
      }
      const double c = cost_with(cand);
      if (c <= cost + 1e-12 * std::abs(cost)) {
        states_ = std::move(cand);
        cost = c;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    ++report.steps;
    report.costs.push_back(cost);
    if (step * dx.lpNorm<Eigen::Infinity>() < options.tolerance) {
      report.converged = true;
      break;
    }
  }
  return report;
}

void FactorGraph::marginalize(StateKey oldest,
                              const std::optional<VisualConstraint>& marginal_visual) {
  state(oldest);
  if (order_.front() != oldest) {
    throw Error(Errc::InvalidArgument, "only the oldest state can be marginalized");
  }
  const bool has_next = order_.size() > 1;
  const StateKey next = has_next ? order_[1] : oldest;

  // Classify before touching anything so a failure leaves the graph intact.
  std::vector<FactorPtr> consumed;
  std::vector<const Factor*> dropped;
  for (const auto& f : factors_) {
    if (!touches(*f, oldest)) continue;
    switch (f->kind()) {
      case FactorKind::Visual:
        dropped.push_back(f.get());
        break;
      case FactorKind::Imu: {
        const auto& k = f->keys();
        if (!has_next || k.size() != 2 || k[0] != oldest || k[1] != next) {
          throw Error(Errc::DanglingFactor,
                      "IMU factor on state " + key_str(oldest) + " does not link the next state");
        }
        consumed.push_back(f);
        break;
      }
      case FactorKind::Prior:
      case FactorKind::Gnss:
      case FactorKind::Wheel:
      case FactorKind::Linear:
      case FactorKind::VisualMarginal:
        consumed.push_back(f);
        break;
      case FactorKind::Other:
        throw Error(Errc::DanglingFactor,
                    "factor cannot be marginalized with state " + key_str(oldest));
    }
  }
  if (marginal_visual && !marginal_visual->poses.empty()) {
    for (StateKey k : marginal_visual->poses) state(k);
    std::vector<NavState> lin;
    for (StateKey k : marginal_visual->poses) lin.push_back(states_.at(k));
    consumed.push_back(
        std::make_shared<VisualFactor>(*marginal_visual, std::move(lin), T_cb_, true));
  }

  // Oldest first, then the remaining keys in window order.
  std::vector<StateKey> keys{oldest};
  for (StateKey k : order_) {
    if (k == oldest) continue;
    const bool used = std::any_of(consumed.begin(), consumed.end(),
                                  [k](const FactorPtr& f) { return touches(*f, k); });
    if (used) keys.push_back(k);
  }
  std::map<StateKey, Eigen::Index> index;
  for (std::size_t i = 0; i < keys.size(); ++i) index[keys[i]] = static_cast<Eigen::Index>(i);

  const auto D = kStateDim * static_cast<Eigen::Index>(keys.size());
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(D, D);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(D);
  for (const auto& f : consumed) {
    const FactorLinearization lin = f->linearize(gather(*f));
    const auto& fk = f->keys();
    for (std::size_t a = 0; a < fk.size(); ++a) {
      const Eigen::Index ra = kStateDim * index[fk[a]];
      const auto la = kStateDim * static_cast<Eigen::Index>(a);
      b.segment<kStateDim>(ra) += lin.b.segment<kStateDim>(la);
      for (std::size_t c = 0; c < fk.size(); ++c) {
        const Eigen::Index rc = kStateDim * index[fk[c]];
        const auto lc = kStateDim * static_cast<Eigen::Index>(c);
        H.block<kStateDim, kStateDim>(ra, rc) += lin.H.block<kStateDim, kStateDim>(la, lc);
      }
    }
  }

  std::erase_if(factors_, [&](const FactorPtr& f) {
    return touches(*f, oldest) &&
           (std::find(consumed.begin(), consumed.end(), f) != consumed.end() ||
            std::find(dropped.begin(), dropped.end(), f.get()) != dropped.end());
  });
  std::erase(order_, oldest);
  states_.erase(oldest);
  std::erase_if(gnss_queue_, [oldest](const QueuedGnss& q) { return q.key == oldest; });

  const Eigen::Index R = D - kStateDim;
  if (R == 0) return;

  const Eigen::MatrixXd Hoo = H.topLeftCorner<kStateDim, kStateDim>();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (Hoo + Hoo.transpose()));
  const double top = std::max(eig.eigenvalues().maxCoeff(), 0.0);
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(kStateDim);
  for (int k = 0; k < kStateDim; ++k) {
    const double ev = eig.eigenvalues()[k];
    if (ev > 1e-12 * top && ev > 0.0) inv[k] = 1.0 / ev;
  }
  const Eigen::MatrixXd Hoo_pinv =
      eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
  const Eigen::MatrixXd Hro = H.bottomLeftCorner(R, kStateDim);
  Eigen::MatrixXd Hp = H.bottomRightCorner(R, R) - Hro * Hoo_pinv * Hro.transpose();
  Hp = 0.5 * (Hp + Hp.transpose()).eval();
  const Eigen::VectorXd bp = b.tail(R) - Hro * (Hoo_pinv * b.head<kStateDim>());

  std::vector<StateKey> rest(keys.begin() + 1, keys.end());
  std::vector<NavState> lin;
  for (StateKey k : rest) lin.push_back(states_.at(k));
  factors_.push_back(std::make_shared<PriorFactor>(std::move(rest), std::move(lin), Hp, bp));
}

}  // namespace dbaf
