#include "railsched/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace railsched::model {

double ObjectiveDescriptor::eval(const VectorXd& x) const {
  double s = constant + linear.dot(x);
  for (const auto& [i, j, w] : bilinear) s += w * x[i] * x[j];
  return s;
}

VectorXd ObjectiveDescriptor::grad(const VectorXd& x) const {
  VectorXd g = linear;
  for (const auto& [i, j, w] : bilinear) {
    g[i] += w * x[j];
    g[j] += w * x[i];
  }
  return g;
}

AppliedSlot InitialCondition::at(const net::Network& net, const Slot& s) const {
  auto it = history.find(s);
  if (it != history.end()) return it->second;
  AppliedSlot a;
  a.d = double(net.timetable.d_pre(s.p, s.k));
  a.a = a.d - 1;  // nominal schedule: dwell absorbed upstream
  a.l = net.fleet.l_regular;
  a.y = 0;
  a.n_depart = 0;
  return a;
}

InitialCondition InitialCondition::nominal(const net::Network& net) {
  InitialCondition init;
  for (const auto& p : net.platforms) init.waiting[p.id] = 0.0;
  for (const auto& d : net.depots) init.depot_stock[d.id] = d.n_train;
  return init;
}

// ---------------------------------------------------------------------------
// MLD encoders

std::vector<LinearRow> encode_abs(int y_col, int o_col, int gamma_col, double y_max) {
  if (y_max <= 0) throw EncodingError("encode_abs: y_max must be positive");
  std::vector<LinearRow> rows;
  // o - y >= 0
  rows.push_back({{{o_col, 1.0}, {y_col, -1.0}}, 0.0, kInf});
  // o - y <= 2 Ymax (1 - gamma)
  rows.push_back({{{o_col, 1.0}, {y_col, -1.0}, {gamma_col, 2 * y_max}}, -kInf, 2 * y_max});
  // o + y >= 0
  rows.push_back({{{o_col, 1.0}, {y_col, 1.0}}, 0.0, kInf});
  // o + y <= 2 Ymax gamma
  rows.push_back({{{o_col, 1.0}, {y_col, 1.0}, {gamma_col, -2 * y_max}}, -kInf, 0.0});
  return rows;
}

std::vector<LinearRow> encode_indicator(int o_col, int eta_col, double o_min, double o_max,
                                        double epsilon) {
  if (epsilon <= 0) throw EncodingError("encode_indicator: epsilon must be positive");
  if (o_min > 0) throw EncodingError("encode_indicator: o_min must be <= 0");
  std::vector<LinearRow> rows;
  // o <= eta * Omax
  rows.push_back({{{o_col, 1.0}, {eta_col, -o_max}}, -kInf, 0.0});
  // o >= eps + (1 - eta)(Omin - eps)  <=>  o - (eps - Omin) eta >= Omin
  rows.push_back({{{o_col, 1.0}, {eta_col, -(epsilon - o_min)}}, o_min, kInf});
  return rows;
}

std::vector<LinearRow> encode_order(int d_p_col, int d_q_col, int xi_col, double t_roll,
                                    double m_f, double M_f, double epsilon) {
  if (epsilon <= 0) throw EncodingError("encode_order: epsilon must be positive");
  if (m_f > 0 || M_f < 0) {
    // f cannot change sign inside the bracket; the flag is decided, not free.
    throw EncodingError("encode_order: bracket does not straddle zero");
  }
  std::vector<LinearRow> rows;
  // f >= m_f (1 - xi)   with f = d_p - d_q - t_roll
  rows.push_back({{{d_p_col, 1.0}, {d_q_col, -1.0}, {xi_col, m_f}}, m_f + t_roll, kInf});
  // f <= -eps + (M_f + eps) xi
  rows.push_back(
      {{{d_p_col, 1.0}, {d_q_col, -1.0}, {xi_col, -(M_f + epsilon)}}, -kInf, t_roll - epsilon});
  return rows;
}

std::vector<LinearRow> encode_product(int xi_col, int y_col, int v_col, double y_max) {
  if (y_max <= 0) throw EncodingError("encode_product: y_max must be positive");
  std::vector<LinearRow> rows;
  // |v| <= Ymax xi
  rows.push_back({{{v_col, 1.0}, {xi_col, -y_max}}, -kInf, 0.0});
  rows.push_back({{{v_col, 1.0}, {xi_col, y_max}}, 0.0, kInf});
  // y - Ymax (1 - xi) <= v <= y + Ymax (1 - xi)
  rows.push_back({{{v_col, 1.0}, {y_col, -1.0}, {xi_col, -y_max}}, -y_max, kInf});
  rows.push_back({{{v_col, 1.0}, {y_col, -1.0}, {xi_col, y_max}}, -kInf, y_max});
  return rows;
}

// ---------------------------------------------------------------------------
// Objective helpers

double j_pass_term(double n_k, double d, double d_pre, double n_after, double d_pre_next) {
  return n_k * (d - d_pre) + n_after * (d_pre_next - d);
}

double j_cost_term(int l, double e_energy, bool eta, double e_add) {
  return double(l) * e_energy + (eta ? e_add : 0.0);
}

double compute_w3(const std::vector<W3Entry>& history) {
  if (history.empty()) throw std::invalid_argument("compute_w3: empty history");
  double acc = 0;
  for (const auto& e : history) {
    if (e.d_bar < e.d_pre || e.d_bar >= e.d_pre_next)
      throw std::invalid_argument("compute_w3: d_bar outside its interval");
    acc += (e.d_bar - e.d_pre) / (e.d_pre_next - e.d_bar);
  }
  return acc / double(history.size());
}

// ---------------------------------------------------------------------------
// Builder

namespace {

std::string slot_name(const char* base, const Slot& s) {
  std::ostringstream o;
  o << base << "_p" << s.p << "_k" << s.k;
  return o.str();
}

std::string pair_name(const char* base, const OrderPair& pr) {
  std::ostringstream o;
  o << base << "_p" << pr.first.p << "_k" << pr.first.k << "__p" << pr.second.p << "_k"
    << pr.second.k;
  return o.str();
}

struct Builder {
  const BuildInputs& in;
  const net::Network& net;
  const net::TimetableTemplate& tt;
  const demand::DemandScenario& sc;
  const InitialCondition& init;
  StandardFormProblem sp;

  SlotIdx k0, k_end, cb;
  double T;

  // column store
  std::vector<double> lo, hi, cost_lin;
  std::vector<std::uint8_t> is_int;
  // row store
  std::vector<Eigen::Triplet<double>> trips;
  std::vector<double> row_lo, row_hi;

  std::map<Slot, AffineExpr> n_at, ntrans_at, ndep_expr;
  std::map<std::pair<int, int>, double> bil_acc;  // nonlinear bilinear terms

  Builder(const BuildInputs& bi)
      : in(bi), net(*bi.network), tt(bi.network->timetable), sc(*bi.scenario), init(*bi.init) {
    k0 = in.k0;
    k_end = in.k0 + in.n_steps;
    cb = in.committed_before < 0 ? k0 : in.committed_before;
    T = double(tt.t_ctrl);
  }

  bool committed(const Slot& s) const { return s.k < cb; }
  bool in_window(const Slot& s) const { return s.k >= k0 && s.k < k_end; }

  Slot prev_link(const Slot& s) const {
    PlatformId e = net.pred(s.p);
    if (net.is_direction_start(s.p)) return {e, s.k - net.link_delta(s.p)};
    return {e, s.k};
  }

  int new_col(const std::string& name, VarKind kind, double l, double h) {
    const int c = int(lo.size());
    lo.push_back(l);
    hi.push_back(h);
    is_int.push_back(kind != VarKind::Continuous);
    sp.var_index[name] = {c, kind, l, h};
    return c;
  }

  void pin(int col, double v) {
    lo[size_t(col)] = hi[size_t(col)] = v;
  }

  int add_row(const std::vector<std::pair<int, double>>& terms, double l, double h) {
    const int r = int(row_lo.size());
    for (const auto& [c, w] : terms)
      if (w != 0) trips.emplace_back(r, c, w);
    row_lo.push_back(l);
    row_hi.push_back(h);
    return r;
  }

  void add_rows(const std::vector<LinearRow>& rows) {
    for (const auto& r : rows) add_row(r.terms, r.lo, r.hi);
  }

  double d_lo(const Slot& s) const {
    if (committed(s)) return init.at(net, s).d;
    return double(tt.d_pre(s.p, s.k));
  }
  double d_hi(const Slot& s) const {
    if (committed(s)) return init.at(net, s).d;
    return double(tt.d_pre(s.p, s.k + 1)) - 1.0;
  }

  void run() {
    if (k_end + 1 > tt.horizon_len)
      throw std::out_of_range("build_problem: window extends past the timetable");
    for (const auto& p : net.platforms)
      if (!sc.sampled.covers(p.id, k_end))
        throw std::out_of_range("build_problem: demand does not cover the window");
    for (const auto& [z, stock] : init.depot_stock)
      if (stock < 0)
        throw InfeasibleInputError("build_problem: negative depot stock for depot " +
                                   std::to_string(z));

    sp.network = &net;
    sp.scenario = &sc;
    sp.k0 = k0;
    sp.n_steps = in.n_steps;
    sp.committed_before = cb;
    sp.mode = in.mode;
    sp.big_m.y_max = double(net.fleet.l_max - net.fleet.l_min);
    sp.big_m.o_max = sp.big_m.y_max;
    sp.big_m.o_min = 0;
    sp.big_m.m_a = kInf;
    sp.big_m.big_m_a = -kInf;

    make_slots();
    make_time_columns();
    make_composition();
    make_order_pairs();
    make_passenger_flow();
    make_depot_balance();
    make_objective();
    finish();
  }

  void make_slots() {
    for (const auto& p : net.platforms)
      for (SlotIdx k = k0; k < k_end; ++k) sp.slots.push_back({p.id, k});
  }

  // Chronological processing order (ties by platform id).
  std::vector<Slot> chrono_slots() const {
    std::vector<Slot> v = sp.slots;
    std::sort(v.begin(), v.end(), [&](const Slot& a, const Slot& b) {
      const TimeSec ta = tt.d_pre(a.p, a.k), tb = tt.d_pre(b.p, b.k);
      return std::tie(ta, a.p, a.k) < std::tie(tb, b.p, b.k);
    });
    return v;
  }

  void make_time_columns() {
    for (const auto& s : sp.slots) {
      const auto& pl = net.platform(s.p);
      const int cd = new_col(slot_name("d", s), VarKind::Continuous, d_lo(s), d_hi(s));
      sp.col_d[s] = cd;
      sp.time_cols.push_back(cd);

      // Arrival bounds: from the incoming link, the headway into this slot,
      // and the dwell needed before the latest departure.
      const Slot prev = prev_link(s);
      const auto& pe = net.platform(prev.p);
      const bool turn = net.is_turn_link(prev.p);
      const double r_l = turn ? pe.r_turn_min : pe.r_min;
      const double r_h = turn ? pe.r_turn_max : pe.r_max;
      double a_l, a_h;
      if (in_window(prev) && !committed(prev)) {
        a_l = d_lo(prev) + r_l;
        a_h = d_hi(prev) + r_h;
      } else {
        const double dv = committed(prev) || prev.k < k0 ? init.at(net, prev).d : d_lo(prev);
        a_l = dv + r_l;
        a_h = dv + r_h;
      }
      const Slot before{s.p, s.k - 1};
      if (!in_window(before) || committed(before))
        a_l = std::max(a_l, init.at(net, before).d + pl.h_min);
      a_h = std::min(a_h, d_hi(s) - pl.tau_min);
      if (committed(s)) {
        const auto hist = init.at(net, s);
        a_l = a_h = hist.a;
      } else if (a_l > a_h + 1e-9) {
        throw InfeasibleInputError("build_problem: empty arrival window at " +
                                   slot_name("a", s));
      }
      const int ca = new_col(slot_name("a", s), VarKind::Continuous, a_l, a_h);
      sp.col_a[s] = ca;
      sp.time_cols.push_back(ca);

      if (pl.sigma) {
        const double ym = sp.big_m.y_max;
        const int cy = new_col(slot_name("y", s), VarKind::Integer, -ym, ym);
        const int co = new_col(slot_name("o", s), VarKind::Continuous, 0, ym);
        const int cg = new_col(slot_name("gam", s), VarKind::Binary, 0, 1);
        const int ce = new_col(slot_name("eta", s), VarKind::Binary, 0, 1);
        sp.col_y[s] = cy;
        sp.col_o[s] = co;
        sp.col_gamma[s] = cg;
        sp.col_eta[s] = ce;
        if (committed(s)) {
          const auto hist = init.at(net, s);
          pin(cy, double(hist.y));
          pin(co, std::abs(double(hist.y)));
          pin(cg, hist.y >= 0 ? 1 : 0);
          pin(ce, hist.y != 0 ? 1 : 0);
        } else {
          add_rows(encode_abs(cy, co, cg, ym));
          add_rows(encode_indicator(co, ce, 0.0, sp.big_m.o_max, sp.big_m.epsilon));
        }
      }
    }

    // Behavioral rows for free slots.
    for (const auto& s : sp.slots) {
      if (committed(s)) continue;
      const auto& pl = net.platform(s.p);
      // dwell: d - a - sigma t_cons eta >= tau_min
      std::vector<std::pair<int, double>> dwell{{sp.col_d.at(s), 1.0}, {sp.col_a.at(s), -1.0}};
      if (pl.sigma) dwell.push_back({sp.col_eta.at(s), -pl.t_cons});
      add_row(dwell, pl.tau_min, kInf);
      sp.derived[slot_name("tauadd", s)] = [&] {
        AffineExpr e;
        if (pl.sigma) e.add(sp.col_eta.at(s), pl.t_cons);
        return e;
      }();
      AffineExpr tau;
      tau.add(sp.col_d.at(s), 1.0);
      tau.add(sp.col_a.at(s), -1.0);
      sp.derived[slot_name("tau", s)] = tau;

      // headway into this slot from (p, k-1)
      const Slot before{s.p, s.k - 1};
      if (in_window(before)) {
        add_row({{sp.col_a.at(s), 1.0}, {sp.col_d.at(before), -1.0}}, pl.h_min, kInf);
        AffineExpr h;
        h.add(sp.col_a.at(s), 1.0);
        h.add(sp.col_d.at(before), -1.0);
        sp.derived[slot_name("h", before)] = h;
      }

      // incoming run/turnaround link
      const Slot prev = prev_link(s);
      if (in_window(prev) && !committed(prev)) {
        const auto& pe = net.platform(prev.p);
        const bool turn = net.is_turn_link(prev.p);
        const double r_l = turn ? pe.r_turn_min : pe.r_min;
        const double r_h = turn ? pe.r_turn_max : pe.r_max;
        add_row({{sp.col_a.at(s), 1.0}, {sp.col_d.at(prev), -1.0}}, r_l, r_h);
        AffineExpr r;
        r.add(sp.col_a.at(s), 1.0);
        r.add(sp.col_d.at(prev), -1.0);
        sp.derived[slot_name(turn ? "rturn" : "r", prev)] = r;
      }
    }
  }

  AffineExpr ell_of(const Slot& s) {
    auto it = sp.ell.find(s);
    if (it != sp.ell.end()) return it->second;
    AffineExpr e;
    if (!in_window(s) || committed(s)) {
      e.constant = double(init.at(net, s).l);
    } else {
      e = ell_of(prev_link(s));
      if (net.platform(s.p).sigma) e.add(sp.col_y.at(s), 1.0);
    }
    sp.ell[s] = e;
    return e;
  }

  void make_composition() {
    for (const auto& s : sp.slots) {
      AffineExpr e = ell_of(s);
      sp.derived[slot_name("l", s)] = e;
      if (committed(s)) continue;
      if (e.is_constant()) {
        if (e.constant < net.fleet.l_min - 1e-9 || e.constant > net.fleet.l_max + 1e-9)
          throw InfeasibleInputError("build_problem: inherited composition outside bounds at " +
                                     slot_name("l", s));
        continue;
      }
      // One bounds row per composition change point keeps every chain value
      // inside [l_min, l_max].
      if (net.platform(s.p).sigma) {
        std::vector<std::pair<int, double>> terms(e.terms.begin(), e.terms.end());
        add_row(terms, double(net.fleet.l_min) - e.constant,
                double(net.fleet.l_max) - e.constant);
      }
    }
  }

  void make_order_pairs() {
    for (const auto& dep : net.depots) {
      for (PlatformId p : dep.platform_ids) {
        for (PlatformId q : dep.platform_ids) {
          if (p == q) continue;
          const double t_roll = net.platform(q).t_roll;
          for (SlotIdx k = k0; k < k_end; ++k) {
            for (SlotIdx k2 = k0; k2 < k_end; ++k2) {
              const Slot a{p, k}, b{q, k2};
              const OrderPair pr{a, b};
              // f = d(a) - d(b) - t_roll
              const double f_lo = d_lo(a) - d_hi(b) - t_roll;
              const double f_hi = d_hi(a) - d_lo(b) - t_roll;
              int fixed = -1;
              if (f_lo >= 0)
                fixed = 1;
              else if (f_hi < 0)
                fixed = 0;
              if ((in.inline_order_fixing || committed(a) || committed(b)) && fixed >= 0) {
                sp.fixed_xi[pr] = fixed;
                continue;
              }
              const int cxi = new_col(pair_name("xi", pr), VarKind::Binary, 0, 1);
              const int cv = new_col(pair_name("v", pr), VarKind::Continuous, -sp.big_m.y_max,
                                     sp.big_m.y_max);
              sp.col_xi[pr] = cxi;
              sp.col_v[pr] = cv;
              const double m_f = std::min(f_lo, -1.0);
              const double M_f = std::max(f_hi, 1.0);
              sp.big_m.m_a = std::min(sp.big_m.m_a, m_f);
              sp.big_m.big_m_a = std::max(sp.big_m.big_m_a, M_f);
              {
                auto rows = encode_order(sp.col_d.at(a), sp.col_d.at(b), cxi, t_roll, m_f, M_f,
                                         sp.big_m.epsilon);
                const int r1 = add_row(rows[0].terms, rows[0].lo, rows[0].hi);
                const int r2 = add_row(rows[1].terms, rows[1].lo, rows[1].hi);
                sp.order_rows[pr] = {r1, r2};
              }
              add_rows(encode_product(cxi, sp.col_y.at(b), cv, sp.big_m.y_max));
            }
          }
        }
      }
    }
    // Order consistency along k for free flags of the same opposite slot.
    for (const auto& [pr, cxi] : sp.col_xi) {
      const OrderPair next{{pr.first.p, pr.first.k + 1}, pr.second};
      auto it = sp.col_xi.find(next);
      if (it != sp.col_xi.end())
        add_row({{it->second, 1.0}, {cxi, -1.0}}, 0.0, kInf);
    }
    if (!std::isfinite(sp.big_m.m_a)) sp.big_m.m_a = 0;
    if (!std::isfinite(sp.big_m.big_m_a)) sp.big_m.big_m_a = 0;
  }

  // Transfer source feeding (p, k): at most one slot per incoming link.
  std::vector<std::pair<double, Slot>> trans_sources(const Slot& s) {
    std::vector<std::pair<double, Slot>> out;
    for (const auto& tr : tt.transfers) {
      if (tr.to != s.p || tr.beta == 0) continue;
      const double walk = net.platform(tr.from).t_trans;
      const double guess =
          (double(tt.d_pre(s.p, s.k)) - walk - double(tt.first_dep.at(tr.from))) / T;
      const SlotIdx kq0 = SlotIdx(std::floor(guess + 1e-9));
      for (SlotIdx kq = kq0 - 1; kq <= kq0 + 1; ++kq) {
        if (kq < 0 || kq >= tt.horizon_len) continue;
        auto tgt = net::chi_target(net, tr.from, kq, s.p);
        if (tgt && *tgt == s.k) out.push_back({tr.beta, Slot{tr.from, kq}});
      }
    }
    return out;
  }

  // ndep value of a slot as an affine expression (column, pinned value, or 0).
  AffineExpr ndep_of(const Slot& s) {
    auto it = ndep_expr.find(s);
    if (it != ndep_expr.end()) return it->second;
    AffineExpr e;
    if (!in_window(s)) {
      e.constant = init.at(net, s).n_depart;
    } else {
      // In-window slots are created in chronological order before use.
      throw std::logic_error("ndep_of: slot processed out of order: " + slot_name("ndep", s));
    }
    return e;
  }

  void make_passenger_flow() {
    for (const auto& s : chrono_slots()) {
      // Waiting ledger n(p, k), grounded at the first uncommitted slot.
      AffineExpr n_k;
      if (s.k <= cb) {
        auto w = init.waiting.find(s.p);
        n_k.constant = w == init.waiting.end() ? 0.0 : w->second;
      } else {
        const Slot before{s.p, s.k - 1};
        n_k = n_at.at(before);
        n_k.constant += double(sc.count(s.p, s.k));
        n_k.add(ntrans_at.at(before), 1.0);
        n_k.add(ndep_expr.at(before), -1.0);
      }
      n_at[s] = n_k;

      // Transfers arriving for this slot.
      AffineExpr ntr;
      for (const auto& [beta, src] : trans_sources(s)) {
        // Passengers arriving at src's platform rode in from its predecessor.
        ntr.add(ndep_of(prev_link(src)), beta);
        AffineExpr narr = ndep_of(prev_link(src));
        sp.derived[slot_name("narr", src)] = narr;
      }
      ntrans_at[s] = ntr;

      if (committed(s)) {
        AffineExpr e;
        e.constant = init.at(net, s).n_depart;
        ndep_expr[s] = e;
        const int c = new_col(slot_name("ndep", s), VarKind::Continuous, e.constant, e.constant);
        sp.col_ndep[s] = c;
        continue;
      }

      // n_before = n + rate (d - d_pre) + n_trans.
      const double rate = sc.sampled.rate(s.p, s.k + 1);
      AffineExpr nb = n_k;
      nb.add(ntr, 1.0);
      nb.add(sp.col_d.at(s), rate);
      nb.constant -= rate * double(tt.d_pre(s.p, s.k));
      sp.n_before[s] = nb;

      AffineExpr cap = ell_of(s);
      AffineExpr cap_scaled;
      cap_scaled.add(cap, double(net.fleet.c_max));
      sp.derived[slot_name("cap", s)] = cap_scaled;

      if (nb.is_constant() && nb.constant <= 1e-12) {
        // Nobody can be waiting here: boarding is identically zero.
        AffineExpr z;
        ndep_expr[s] = z;
        sp.col_ndep[s] = -1;
        sp.n_after[s] = nb;
        sp.derived[slot_name("n", s)] = n_k;
        sp.derived[slot_name("ntrans", s)] = ntr;
        sp.derived[slot_name("nbefore", s)] = nb;
        sp.derived[slot_name("nafter", s)] = nb;
        continue;
      }

      const int cnd =
          new_col(slot_name("ndep", s), VarKind::Continuous, 0.0,
                  double(net.fleet.l_max) * double(net.fleet.c_max));
      sp.col_ndep[s] = cnd;
      AffineExpr nd;
      nd.add(cnd, 1.0);
      ndep_expr[s] = nd;

      // ndep <= capacity
      if (cap_scaled.is_constant()) {
        hi[size_t(cnd)] = std::min(hi[size_t(cnd)], cap_scaled.constant);
      } else {
        std::vector<std::pair<int, double>> terms{{cnd, 1.0}};
        for (const auto& [c, w] : cap_scaled.terms) terms.push_back({c, -w});
        add_row(terms, -kInf, cap_scaled.constant);
      }
      // ndep <= n_before
      {
        std::vector<std::pair<int, double>> terms{{cnd, 1.0}};
        for (const auto& [c, w] : nb.terms) terms.push_back({c, -w});
        add_row(terms, -kInf, nb.constant);
      }

      AffineExpr na = nb;
      na.add(nd, -1.0);
      sp.n_after[s] = na;
      sp.derived[slot_name("n", s)] = n_k;
      sp.derived[slot_name("ntrans", s)] = ntr;
      sp.derived[slot_name("nbefore", s)] = nb;
      sp.derived[slot_name("nafter", s)] = na;
    }
    sp.waiting_at = n_at;
  }

  void make_depot_balance() {
    for (const auto& dep : net.depots) {
      const auto stock_it = init.depot_stock.find(dep.id);
      const double stock =
          stock_it == init.depot_stock.end() ? double(dep.n_train) : double(stock_it->second);
      for (PlatformId p : dep.platform_ids) {
        for (SlotIdx k = std::max(k0, cb); k < k_end; ++k) {
          AffineExpr lhs;
          for (SlotIdx k2 = k0; k2 <= k; ++k2) lhs.add(sp.col_y.at({p, k2}), 1.0);
          for (PlatformId q : dep.platform_ids) {
            if (q == p) continue;
            for (SlotIdx k2 = k0; k2 < k_end; ++k2) {
              const OrderPair pr{{p, k}, {q, k2}};
              auto fx = sp.fixed_xi.find(pr);
              if (fx != sp.fixed_xi.end()) {
                if (fx->second == 1) lhs.add(sp.col_y.at({q, k2}), 1.0);
              } else {
                lhs.add(sp.col_v.at(pr), 1.0);
              }
            }
          }
          if (lhs.is_constant()) continue;
          std::vector<std::pair<int, double>> terms(lhs.terms.begin(), lhs.terms.end());
          add_row(terms, -kInf, stock - lhs.constant);
        }
      }
    }
  }

  void bil_add(int i, int j, double w) {
    if (w == 0) return;
    if (i > j) std::swap(i, j);
    bil_acc[{i, j}] += w;
  }

  void make_objective() {
    const int ncols_booked = int(lo.size());
    AffineExpr lin_obj;   // linearized J
    AffineExpr nl_linear; // linear part of the nonlinear J
    double nl_const = 0;

    for (const auto& s : sp.slots) {
      if (committed(s)) continue;
      const auto& pl = net.platform(s.p);
      // J_cost = l * E_energy + eta * E_add, weight w2.
      AffineExpr cost;
      cost.add(sp.ell.at(s), pl.e_energy);
      if (pl.sigma) cost.add(sp.col_eta.at(s), pl.e_add);
      lin_obj.add(cost, in.weights.w2);
      nl_linear.add(cost, in.weights.w2);

      // J_pass, weight w1.
      const AffineExpr& n_k = n_at.at(s);
      const AffineExpr& na = sp.n_after.at(s);
      const double dpre = double(tt.d_pre(s.p, s.k));
      const double dnext = double(tt.d_pre(s.p, s.k + 1));

      // Linearized: w3 n T + n_after T.
      lin_obj.add(n_k, in.weights.w1 * in.weights.w3 * (dnext - dpre));
      lin_obj.add(na, in.weights.w1 * (dnext - dpre));

      // Nonlinear: n (d - dpre) + n_after (dnext - d).
      const int cd = sp.col_d.at(s);
      // n * (d - dpre)
      nl_const += in.weights.w1 * n_k.constant * (-dpre);
      nl_linear.add(cd, in.weights.w1 * n_k.constant);
      for (const auto& [c, w] : n_k.terms) {
        bil_add(c, cd, in.weights.w1 * w);
        nl_linear.add(c, in.weights.w1 * w * (-dpre));
      }
      // n_after * (dnext - d)
      nl_const += in.weights.w1 * na.constant * dnext;
      nl_linear.add(cd, -in.weights.w1 * na.constant);
      for (const auto& [c, w] : na.terms) {
        bil_add(c, cd, -in.weights.w1 * w);
        nl_linear.add(c, in.weights.w1 * w * dnext);
      }
    }

    sp.linearized_objective.linear = VectorXd::Zero(ncols_booked);
    sp.linearized_objective.constant = lin_obj.constant;
    for (const auto& [c, w] : lin_obj.terms) sp.linearized_objective.linear[c] = w;
    sp.nonlinear_objective.linear = VectorXd::Zero(ncols_booked);
    sp.nonlinear_objective.constant = nl_const + nl_linear.constant;
    for (const auto& [c, w] : nl_linear.terms) sp.nonlinear_objective.linear[c] = w;
    for (const auto& [cc, w] : bil_acc)
      if (w != 0) sp.nonlinear_objective.bilinear.push_back({cc.first, cc.second, w});
    sp.objective =
        in.mode == ObjectiveMode::Nonlinear ? sp.nonlinear_objective : sp.linearized_objective;
  }

  void finish() {
    const int n = int(lo.size());
    const int m = int(row_lo.size());
    sp.lp.A.resize(m, n);
    sp.lp.A.setFromTriplets(trips.begin(), trips.end());
    sp.lp.A.makeCompressed();
    sp.lp.lo = Eigen::Map<VectorXd>(lo.data(), n);
    sp.lp.hi = Eigen::Map<VectorXd>(hi.data(), n);
    sp.lp.row_lo = Eigen::Map<VectorXd>(row_lo.data(), m);
    sp.lp.row_hi = Eigen::Map<VectorXd>(row_hi.data(), m);
    sp.is_int = is_int;
    // LP relaxations always price with the linearized surrogate.
    sp.lp.c = sp.linearized_objective.linear;
    // Refresh recorded bounds (pins may have moved them).
    for (auto& [name, info] : sp.var_index) {
      info.lo = sp.lp.lo[info.col];
      info.hi = sp.lp.hi[info.col];
    }
  }
};

}  // namespace

StandardFormProblem build_problem(const BuildInputs& in) {
  if (!in.network || !in.scenario || !in.init)
    throw std::invalid_argument("build_problem: missing inputs");
  if (in.n_steps < 1) throw std::invalid_argument("build_problem: n_steps must be >= 1");
  Builder b(in);
  b.run();
  return std::move(b.sp);
}

void fix_columns(StandardFormProblem& sp, const std::map<int, double>& values) {
  for (const auto& [c, v] : values) {
    sp.lp.lo[c] = v;
    sp.lp.hi[c] = v;
  }
}

mip::LpProblem StandardFormProblem::lp_with_cost(const VectorXd& c) const {
  mip::LpProblem out = lp;
  out.c = c;
  return out;
}

IntegerAssignment extract_assignment(const StandardFormProblem& sp, const VectorXd& x) {
  IntegerAssignment ia;
  for (const auto& [s, c] : sp.col_y) ia.y[s] = int(llround(x[c]));
  for (const auto& [pr, c] : sp.col_xi) ia.xi[pr] = int(llround(x[c]));
  return ia;
}

mip::LpProblem continuous_restriction(const StandardFormProblem& sp, const IntegerAssignment& ia,
                                      bool relax_order_rows) {
  mip::LpProblem lp = sp.lp;
  auto pin = [&](int c, double v) { lp.lo[c] = lp.hi[c] = v; };
  for (const auto& [s, c] : sp.col_y) {
    auto it = ia.y.find(s);
    if (it == ia.y.end()) {
      if (lp.lo[c] != lp.hi[c])
        throw std::invalid_argument("continuous_restriction: missing y for a free slot");
      continue;
    }
    const int v = it->second;
    pin(c, double(v));
    pin(sp.col_o.at(s), std::abs(double(v)));
    pin(sp.col_gamma.at(s), v >= 0 ? 1.0 : 0.0);
    pin(sp.col_eta.at(s), v != 0 ? 1.0 : 0.0);
  }
  for (const auto& [pr, c] : sp.col_xi) {
    auto it = ia.xi.find(pr);
    if (it == ia.xi.end()) {
      if (lp.lo[c] != lp.hi[c])
        throw std::invalid_argument("continuous_restriction: missing xi for a free pair");
      continue;
    }
    pin(c, double(it->second));
    if (relax_order_rows) {
      const auto [r1, r2] = sp.order_rows.at(pr);
      lp.row_lo[r1] = -kInf;
      lp.row_hi[r1] = kInf;
      lp.row_lo[r2] = -kInf;
      lp.row_hi[r2] = kInf;
    }
  }
  return lp;
}

// ---------------------------------------------------------------------------
// Forward evaluation

VectorXd forward_vector(const StandardFormProblem& sp, const std::map<Slot, double>& d,
                        const std::map<Slot, int>& y) {
  const auto& net = *sp.network;
  const auto& tt = net.timetable;
  VectorXd x = VectorXd::Zero(sp.lp.cols());

  auto dval = [&](const Slot& s) {
    auto it = d.find(s);
    if (it != d.end()) return it->second;
    if (sp.lp.lo[sp.col_d.at(s)] == sp.lp.hi[sp.col_d.at(s)]) return sp.lp.lo[sp.col_d.at(s)];
    return double(tt.d_pre(s.p, s.k));
  };
  auto yval = [&](const Slot& s) {
    auto it = y.find(s);
    if (it != y.end()) return it->second;
    auto c = sp.col_y.find(s);
    if (c != sp.col_y.end() && sp.lp.lo[c->second] == sp.lp.hi[c->second])
      return int(llround(sp.lp.lo[c->second]));
    return 0;
  };

  for (const auto& s : sp.slots) {
    x[sp.col_d.at(s)] = dval(s);
    auto cy = sp.col_y.find(s);
    if (cy != sp.col_y.end()) {
      const int v = yval(s);
      x[cy->second] = double(v);
      x[sp.col_o.at(s)] = std::abs(double(v));
      x[sp.col_gamma.at(s)] = v >= 0 ? 1.0 : 0.0;
      x[sp.col_eta.at(s)] = v != 0 ? 1.0 : 0.0;
    }
  }

  // Arrivals at their earliest feasible position, chronological order.
  std::vector<Slot> order = sp.slots;
  std::sort(order.begin(), order.end(), [&](const Slot& a, const Slot& b) {
    const TimeSec ta = tt.d_pre(a.p, a.k), tb = tt.d_pre(b.p, b.k);
    return std::tie(ta, a.p, a.k) < std::tie(tb, b.p, b.k);
  });
  for (const auto& s : order) {
    const int ca = sp.col_a.at(s);
    if (sp.lp.lo[ca] == sp.lp.hi[ca]) {
      x[ca] = sp.lp.lo[ca];
      continue;
    }
    double a_l = sp.lp.lo[ca], a_h = sp.lp.hi[ca];
    const auto& pl = net.platform(s.p);
    PlatformId e = net.pred(s.p);
    Slot prev = net.is_direction_start(s.p) ? Slot{e, s.k - net.link_delta(s.p)} : Slot{e, s.k};
    const auto& pe = net.platform(e);
    const bool turn = net.is_turn_link(e);
    if (prev.k >= sp.k0 && prev.k < sp.k0 + sp.n_steps) {
      const double dv = x[sp.col_d.at(prev)];
      a_l = std::max(a_l, dv + (turn ? pe.r_turn_min : pe.r_min));
      a_h = std::min(a_h, dv + (turn ? pe.r_turn_max : pe.r_max));
    }
    const Slot before{s.p, s.k - 1};
    if (before.k >= sp.k0) a_l = std::max(a_l, x[sp.col_d.at(before)] + pl.h_min);
    double tau_add = 0;
    auto ce = sp.col_eta.find(s);
    if (ce != sp.col_eta.end() && x[ce->second] > 0.5) tau_add = pl.t_cons;
    a_h = std::min(a_h, dval(s) - pl.tau_min - tau_add);
    if (a_l > a_h + 1e-9)
      throw InfeasibleInputError("forward_vector: no feasible arrival for slot");
    x[ca] = a_l;
  }

  // Order flags and products from actual departures.
  for (const auto& [pr, cxi] : sp.col_xi) {
    const double f = x[sp.col_d.at(pr.first)] - x[sp.col_d.at(pr.second)] -
                     net.platform(pr.second.p).t_roll;
    x[cxi] = f >= 0 ? 1.0 : 0.0;
    x[sp.col_v.at(pr)] = x[cxi] * x[sp.col_y.at(pr.second)];
  }

  // Saturated boarding in chronological order.
  for (const auto& s : order) {
    auto c = sp.col_ndep.find(s);
    if (c == sp.col_ndep.end() || c->second < 0) continue;
    if (sp.lp.lo[c->second] == sp.lp.hi[c->second]) {
      x[c->second] = sp.lp.lo[c->second];
      continue;
    }
    const double nb = sp.n_before.at(s).eval(x);
    const double cap = sp.derived.at(slot_name("cap", s)).eval(x);
    x[c->second] = std::max(0.0, std::min(nb, cap));
  }
  return x;
}

}  // namespace railsched::model
