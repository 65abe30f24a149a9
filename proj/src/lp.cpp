#include "railsched/lp.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cmath>

namespace railsched::mip {

double det_seconds_per_iter(int m, int n) {
  return 4e-8 * double(m) + 2e-8 * double(n) + 5e-6;
}
double det_seconds_refactor(int m) {
  return 1.5e-7 * double(m) * std::sqrt(double(m)) + 2e-5;
}

double lp_violation(const LpProblem& lp, const VectorXd& x) {
  double v = 0;
  for (int j = 0; j < lp.cols(); ++j) {
    v = std::max(v, lp.lo[j] - x[j]);
    v = std::max(v, x[j] - lp.hi[j]);
  }
  VectorXd act = lp.A * x;
  for (int i = 0; i < lp.rows(); ++i) {
    v = std::max(v, lp.row_lo[i] - act[i]);
    v = std::max(v, act[i] - lp.row_hi[i]);
  }
  return v;
}

namespace {

constexpr std::uint8_t kAtLower = 0;
constexpr std::uint8_t kAtUpper = 1;
constexpr std::uint8_t kAtZero = 2;  // free variable resting at 0

struct Eta {
  int row;
  VectorXd col;  // B^-1 * entering column at pivot time
};

// Revised primal simplex over [A | -I] v = 0 with bounded variables.
class Simplex {
 public:
  Simplex(const LpProblem& lp, const SimplexOptions& opt) : lp_(lp), opt_(opt) {
    m_ = lp.rows();
    n_ = lp.cols();
    nv_ = n_ + m_;
    lo_.resize(nv_);
    hi_.resize(nv_);
    lo_.head(n_) = lp.lo;
    hi_.head(n_) = lp.hi;
    lo_.tail(m_) = lp.row_lo;
    hi_.tail(m_) = lp.row_hi;
    cost_ = VectorXd::Zero(nv_);
    cost_.head(n_) = lp.c;
  }

  LpResult run(const Basis* warm) {
    LpResult res;
    setup_basis(warm);
    if (!factorize()) {
      // Singular warm basis: restart from the all-slack basis.
      set_slack_basis();
      if (!factorize()) {
        res.status = LpStatus::Error;
        return res;
      }
    }
    compute_basics();

    LpStatus st = iterate(true);
    if (st == LpStatus::Error || st == LpStatus::IterLimit) {
      res.status = st;
      fill(res);
      return res;
    }
    if (total_infeasibility() > 10 * opt_.feas_tol * std::max(1.0, bound_scale_)) {
      res.status = LpStatus::Infeasible;
      fill(res);
      return res;
    }
    st = iterate(false);
    res.status = st;
    fill(res);
    return res;
  }

 private:
  const LpProblem& lp_;
  SimplexOptions opt_;
  int m_ = 0, n_ = 0, nv_ = 0;
  VectorXd lo_, hi_, cost_;
  std::vector<int> basic_;
  std::vector<std::uint8_t> status_;  // nonbasic rest position per variable
  std::vector<std::uint8_t> is_basic_;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
  std::vector<Eta> etas_;
  VectorXd xb_;  // basic values
  long iters_ = 0;
  double det_time_ = 0;
  int degenerate_streak_ = 0;
  double bound_scale_ = 1.0;

  double var_lo(int j) const { return lo_[j]; }
  double var_hi(int j) const { return hi_[j]; }

  // Column j of [A | -I], scattered dense.
  void gather_col(int j, VectorXd& out) const {
    out.setZero(m_);
    if (j < n_) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(lp_.A, j); it; ++it)
        out[it.row()] = it.value();
    } else {
      out[j - n_] = -1.0;
    }
  }

  double nonbasic_value(int j) const {
    switch (status_[j]) {
      case kAtLower:
        return var_lo(j);
      case kAtUpper:
        return var_hi(j);
      default:
        return 0.0;
    }
  }

  void normalize_status(int j) {
    if (status_[j] == kAtLower && !std::isfinite(var_lo(j)))
      status_[j] = std::isfinite(var_hi(j)) ? kAtUpper : kAtZero;
    else if (status_[j] == kAtUpper && !std::isfinite(var_hi(j)))
      status_[j] = std::isfinite(var_lo(j)) ? kAtLower : kAtZero;
  }

  void set_slack_basis() {
    basic_.resize(size_t(m_));
    status_.assign(size_t(nv_), kAtLower);
    is_basic_.assign(size_t(nv_), 0);
    for (int i = 0; i < m_; ++i) {
      basic_[size_t(i)] = n_ + i;
      is_basic_[size_t(n_ + i)] = 1;
    }
    for (int j = 0; j < nv_; ++j)
      if (!is_basic_[size_t(j)]) normalize_status(j);
  }

  void setup_basis(const Basis* warm) {
    bound_scale_ = 0;
    for (int j = 0; j < nv_; ++j) {
      if (std::isfinite(lo_[j])) bound_scale_ = std::max(bound_scale_, std::abs(lo_[j]));
      if (std::isfinite(hi_[j])) bound_scale_ = std::max(bound_scale_, std::abs(hi_[j]));
    }
    if (warm && int(warm->basic.size()) == m_ && int(warm->at_upper.size()) == nv_) {
      basic_ = warm->basic;
      status_.assign(warm->at_upper.begin(), warm->at_upper.end());
      is_basic_.assign(size_t(nv_), 0);
      bool ok = true;
      for (int b : basic_) {
        if (b < 0 || b >= nv_ || is_basic_[size_t(b)]) {
          ok = false;
          break;
        }
        is_basic_[size_t(b)] = 1;
      }
      if (ok) {
        for (int j = 0; j < nv_; ++j)
          if (!is_basic_[size_t(j)]) normalize_status(j);
        return;
      }
    }
    set_slack_basis();
  }

  bool factorize() {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(size_t(lp_.A.nonZeros()) + size_t(m_));
    for (int i = 0; i < m_; ++i) {
      const int j = basic_[size_t(i)];
      if (j < n_) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(lp_.A, j); it; ++it)
          trips.emplace_back(int(it.row()), i, it.value());
      } else {
        trips.emplace_back(j - n_, i, -1.0);
      }
    }
    Eigen::SparseMatrix<double> B(m_, m_);
    B.setFromTriplets(trips.begin(), trips.end());
    lu_.compute(B);
    etas_.clear();
    det_time_ += det_seconds_refactor(m_);
    return lu_.info() == Eigen::Success;
  }

  void ftran(VectorXd& v) const {
    v = lu_.solve(v);
    for (const auto& e : etas_) {
      const double t = v[e.row] / e.col[e.row];
      v -= t * e.col;
      v[e.row] = t;
    }
  }

  void compute_basics() {
    VectorXd rhs = VectorXd::Zero(m_);
    // rhs = -(sum over nonbasic columns of G_j * v_j)
    for (int j = 0; j < n_; ++j) {
      if (is_basic_[size_t(j)]) continue;
      const double v = nonbasic_value(j);
      if (v == 0.0) continue;
      for (Eigen::SparseMatrix<double>::InnerIterator it(lp_.A, j); it; ++it)
        rhs[it.row()] -= it.value() * v;
    }
    for (int i = 0; i < m_; ++i) {
      const int j = n_ + i;
      if (is_basic_[size_t(j)]) continue;
      const double v = nonbasic_value(j);
      if (v != 0.0) rhs[i] += v;  // column is -e_i
    }
    ftran(rhs);
    xb_ = rhs;
  }

  double total_infeasibility() const {
    double s = 0;
    for (int i = 0; i < m_; ++i) {
      const int j = basic_[size_t(i)];
      s += std::max(0.0, var_lo(j) - xb_[i]);
      s += std::max(0.0, xb_[i] - var_hi(j));
    }
    return s;
  }

  // Phase-aware pricing cost of basic position i.
  double phase_cost(int i, bool phase1) const {
    const int j = basic_[size_t(i)];
    if (phase1) {
      const double ftol = opt_.feas_tol * std::max(1.0, bound_scale_);
      if (xb_[i] < var_lo(j) - ftol) return -1.0;
      if (xb_[i] > var_hi(j) + ftol) return 1.0;
      return 0.0;
    }
    return cost_[j];
  }

  LpStatus iterate(bool phase1) {
    VectorXd y(m_), d(m_), col(m_);
    bool bland = false;
    while (true) {
      if (iters_ >= opt_.max_iters) return LpStatus::IterLimit;
      if (phase1 && total_infeasibility() <= opt_.feas_tol * std::max(1.0, bound_scale_))
        return LpStatus::Optimal;

      // Pricing: y = B^-T c_B, reduced cost z_j = c_j - y . G_j.
      for (int i = 0; i < m_; ++i) y[i] = phase_cost(i, phase1);
      btran_full(y);
      int enter = -1;
      int enter_dir = 0;
      double best = 0;
      VectorXd zA = lp_.A.transpose() * y;
      for (int j = 0; j < nv_; ++j) {
        if (is_basic_[size_t(j)]) continue;
        if (var_lo(j) == var_hi(j)) continue;  // fixed
        const double cj = phase1 ? 0.0 : cost_[j];
        const double z = cj - (j < n_ ? zA[j] : -y[j - n_]);
        int dir = 0;
        double score = 0;
        if (status_[j] == kAtLower || status_[j] == kAtZero) {
          if (z < -opt_.opt_tol) {
            dir = +1;
            score = -z;
          }
        }
        if (dir == 0 && (status_[j] == kAtUpper || status_[j] == kAtZero)) {
          if (z > opt_.opt_tol) {
            dir = -1;
            score = z;
          }
        }
        if (dir == 0) continue;
        if (bland) {
          enter = j;
          enter_dir = dir;
          best = score;
          break;
        }
        if (score > best + 1e-15) {
          best = score;
          enter = j;
          enter_dir = dir;
        }
      }
      if (enter < 0) return LpStatus::Optimal;  // phase optimum

      gather_col(enter, col);
      d = col;
      ftran(d);
      det_time_ += det_seconds_per_iter(m_, n_);

      // Ratio test: entering moves t >= 0 in direction enter_dir;
      // basic i changes as xb_i - t * delta_i.
      const double step_tol = 1e-9;
      double t_best = kInf;
      int leave = -1;       // basic position
      double leave_pivot = 0;
      std::uint8_t leave_to = kAtLower;
      const double own_range = var_hi(enter) - var_lo(enter);
      const double ftol = opt_.feas_tol * std::max(1.0, bound_scale_);
      bool bound_flip = false;

      if (phase1) {
        // Piecewise-linear line search on the total infeasibility: walk the
        // bound-crossing events in step order while the slope stays negative.
        // Blocking at the first bound instead can swap two columns forever
        // without reducing the infeasibility.
        struct Crossing {
          double t;
          int pos;
          std::uint8_t to;
          double dslope;
        };
        std::vector<Crossing> evs;
        evs.reserve(32);
        for (int i = 0; i < m_; ++i) {
          const double delta = enter_dir * d[i];
          if (std::abs(delta) < step_tol) continue;
          const int j = basic_[size_t(i)];
          const double lo_j = var_lo(j), hi_j = var_hi(j);
          if (delta > 0) {  // value decreasing
            if (std::isfinite(hi_j) && xb_[i] > hi_j + 1e-12)
              evs.push_back({(xb_[i] - hi_j) / delta, i, kAtUpper, std::abs(delta)});
            if (std::isfinite(lo_j) && xb_[i] > lo_j - ftol)
              evs.push_back({std::max(0.0, (xb_[i] - lo_j) / delta), i, kAtLower,
                             std::abs(delta)});
          } else {  // value increasing
            if (std::isfinite(lo_j) && xb_[i] < lo_j - 1e-12)
              evs.push_back({(xb_[i] - lo_j) / delta, i, kAtLower, std::abs(delta)});
            if (std::isfinite(hi_j) && xb_[i] < hi_j + ftol)
              evs.push_back({std::max(0.0, (xb_[i] - hi_j) / delta), i, kAtUpper,
                             std::abs(delta)});
          }
        }
        std::sort(evs.begin(), evs.end(), [&](const Crossing& a, const Crossing& b) {
          if (a.t != b.t) return a.t < b.t;
          if (bland) return basic_[size_t(a.pos)] < basic_[size_t(b.pos)];
          return a.dslope > b.dslope;
        });
        double slope = -best;  // exact directional derivative of the infeasibility
        for (const auto& ev : evs) {
          if (std::isfinite(own_range) && own_range < ev.t) break;
          slope += ev.dslope;
          if (slope >= -1e-12) {
            t_best = ev.t;
            leave = ev.pos;
            leave_pivot = enter_dir * d[ev.pos];
            leave_to = ev.to;
            break;
          }
        }
        if (leave < 0) {
          if (std::isfinite(own_range)) {
            t_best = own_range;
            bound_flip = true;
          } else {
            return LpStatus::Error;  // descending without limit: numerical trouble
          }
        }
      } else {
        for (int i = 0; i < m_; ++i) {
          const double delta = enter_dir * d[i];
          if (std::abs(delta) < step_tol) continue;
          const int j = basic_[size_t(i)];
          double target;
          std::uint8_t to;
          if (delta > 0) {  // decreasing
            if (xb_[i] > var_hi(j) + ftol) {
              target = var_hi(j);
              to = kAtUpper;
            } else if (std::isfinite(var_lo(j))) {
              target = var_lo(j);
              to = kAtLower;
            } else
              continue;
          } else {  // increasing
            if (xb_[i] < var_lo(j) - ftol) {
              target = var_lo(j);
              to = kAtLower;
            } else if (std::isfinite(var_hi(j))) {
              target = var_hi(j);
              to = kAtUpper;
            } else
              continue;
          }
          const double t = (xb_[i] - target) / delta;
          if (t < -1e-12) continue;
          const double tc = std::max(t, 0.0);
          bool better = tc < t_best - 1e-9;
          if (!better && tc < t_best + 1e-9) {
            // Tie handling: stability wants the largest pivot; Bland's rule
            // wants the lowest basic index to guarantee termination.
            if (bland)
              better = leave < 0 || basic_[size_t(i)] < basic_[size_t(leave)];
            else
              better = std::abs(delta) > std::abs(leave_pivot) + 1e-12;
          }
          if (better) {
            t_best = tc;
            leave = i;
            leave_pivot = delta;
            leave_to = to;
          }
        }
        if (std::isfinite(own_range) && own_range <= t_best + 1e-12) {
          t_best = own_range;
          bound_flip = true;
        }
        if (!std::isfinite(t_best)) return LpStatus::Unbounded;
      }

      // Apply the step.
      ++iters_;
      if (const char* tr = std::getenv("RAILSCHED_TRACE_LP"); tr && iters_ % 2000 == 0)
        std::fprintf(stderr, "iter=%ld phase=%d infeas=%.3e t=%.3e enter=%d leave=%d bland=%d\n",
                     iters_, phase1 ? 1 : 2, total_infeasibility(), t_best, enter,
                     leave < 0 ? -1 : basic_[size_t(leave)], int(bland));
      if (t_best > 1e-11)
        degenerate_streak_ = 0;
      else if (++degenerate_streak_ > 60)
        bland = true;
      if (degenerate_streak_ == 0 && bland) bland = false;

      if (t_best > 0) xb_.noalias() -= (enter_dir * t_best) * d;

      if (bound_flip) {
        status_[enter] = (status_[enter] == kAtUpper) ? kAtLower : kAtUpper;
        continue;
      }

      // Basis exchange at position `leave`.
      const int out_var = basic_[size_t(leave)];
      status_[size_t(out_var)] = leave_to;
      is_basic_[size_t(out_var)] = 0;
      basic_[size_t(leave)] = enter;
      is_basic_[size_t(enter)] = 1;
      const double enter_val = nonbasic_value(enter) + enter_dir * t_best;
      status_[size_t(enter)] = kAtLower;  // placeholder; value tracked in xb_

      etas_.push_back({leave, d});
      xb_[leave] = enter_val;

      if (int(etas_.size()) >= opt_.refactor_every) {
        if (!factorize()) return LpStatus::Error;
        compute_basics();
      }
    }
  }

  // BTRAN including eta file (reverse order), then LU transpose solve.
  void btran_full(VectorXd& v) {
    for (auto it = etas_.rbegin(); it != etas_.rend(); ++it) {
      const double piv = it->col[it->row];
      const double vr = v[it->row];
      // (E^T)^-1: row `row` of E holds the eta column transposed.
      const double dot = it->col.dot(v) - piv * vr;
      v[it->row] = (vr - dot) / piv;
    }
    v = lu_.transpose().solve(v);
  }

  void fill(LpResult& res) {
    res.x = VectorXd::Zero(n_);
    for (int j = 0; j < n_; ++j)
      if (!is_basic_[size_t(j)]) res.x[j] = nonbasic_value(j);
    for (int i = 0; i < m_; ++i)
      if (basic_[size_t(i)] < n_) res.x[basic_[size_t(i)]] = xb_[i];
    res.objective = lp_.c.dot(res.x);
    res.basis.basic = basic_;
    res.basis.at_upper.assign(status_.begin(), status_.end());
    res.iterations = iters_;
    res.det_time = det_time_;
  }
};

}  // namespace

LpResult solve_lp_once(const LpProblem& lp, const SimplexOptions& opt, const Basis* warm);

LpResult solve_lp(const LpProblem& lp, const SimplexOptions& opt, const Basis* warm) {
  LpResult r = solve_lp_once(lp, opt, warm);
  if (warm && (r.status == LpStatus::IterLimit || r.status == LpStatus::Error)) {
    // A pathological warm basis can stall; restart from scratch once.
    LpResult cold = solve_lp_once(lp, opt, nullptr);
    cold.det_time += r.det_time;
    cold.iterations += r.iterations;
    return cold;
  }
  return r;
}

LpResult solve_lp_once(const LpProblem& lp, const SimplexOptions& opt, const Basis* warm) {
  if (lp.rows() == 0) {
    // Pure bound problem: each column rests at its cheaper bound.
    LpResult res;
    res.x = VectorXd::Zero(lp.cols());
    for (int j = 0; j < lp.cols(); ++j) {
      if (lp.lo[j] > lp.hi[j] + 1e-12) {
        res.status = LpStatus::Infeasible;
        return res;
      }
      if (lp.c[j] >= 0)
        res.x[j] = std::isfinite(lp.lo[j]) ? lp.lo[j] : 0.0;
      else
        res.x[j] = std::isfinite(lp.hi[j]) ? lp.hi[j] : kInf;
      if (!std::isfinite(res.x[j])) {
        res.status = LpStatus::Unbounded;
        return res;
      }
    }
    res.objective = lp.c.dot(res.x);
    res.status = LpStatus::Optimal;
    res.basis.at_upper.assign(size_t(lp.cols()), 0);
    return res;
  }
  Simplex s(lp, opt);
  return s.run(warm);
}

}  // namespace railsched::mip
