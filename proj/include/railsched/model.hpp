#pragma once

#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "railsched/demand.hpp"
#include "railsched/lp.hpp"
#include "railsched/network.hpp"
#include "railsched/types.hpp"

namespace railsched::model {

struct InfeasibleInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Sparse affine expression over problem columns.
struct AffineExpr {
  double constant = 0;
  std::map<int, double> terms;

  void add(int col, double w) {
    if (w == 0) return;
    if ((terms[col] += w) == 0) terms.erase(col);
  }
  void add(const AffineExpr& o, double w = 1.0) {
    constant += w * o.constant;
    for (const auto& [c, v] : o.terms) add(c, w * v);
  }
  double eval(const VectorXd& x) const {
    double s = constant;
    for (const auto& [c, v] : terms) s += v * x[c];
    return s;
  }
  bool is_constant() const { return terms.empty(); }
};

enum class VarKind { Continuous, Integer, Binary };

struct ColumnInfo {
  int col = -1;
  VarKind kind = VarKind::Continuous;
  double lo = 0, hi = 0;
};

struct ObjectiveWeights {
  double w1 = 1e-4;
  double w2 = 1e-1;
  double w3 = 1e-1;
};

enum class ObjectiveMode { Nonlinear, Linearized };

// constant + linear + sum of w * x_i * x_j.
struct ObjectiveDescriptor {
  double constant = 0;
  VectorXd linear;
  std::vector<std::tuple<int, int, double>> bilinear;

  double eval(const VectorXd& x) const;
  VectorXd grad(const VectorXd& x) const;
  bool is_linear() const { return bilinear.empty(); }
};

struct BigM {
  double y_max = 0;
  double o_max = 0;
  double o_min = 0;
  double m_a = 0;      // tightest lower bracket seen across order pairs
  double big_m_a = 0;  // tightest upper bracket seen across order pairs
  double epsilon = 1e-6;
};

struct Slot {
  PlatformId p = 0;
  SlotIdx k = 0;
  auto operator<=>(const Slot&) const = default;
};

using OrderPair = std::pair<Slot, Slot>;  // xi = [d(first) >= d(second) + t_roll(second.p)]

struct AppliedSlot {
  double d = 0, a = 0;
  int l = 0, y = 0;
  double n_depart = 0;
};

// Boundary data for a window build: waiting counts at the window start,
// committed decisions for earlier slots, current depot stocks.  Slots absent
// from history take the nominal schedule (d = d_pre, l = l_regular, y = 0).
struct InitialCondition {
  std::map<PlatformId, double> waiting;
  std::map<Slot, AppliedSlot> history;
  std::map<DepotId, int> depot_stock;

  AppliedSlot at(const net::Network& net, const Slot& s) const;
  static InitialCondition nominal(const net::Network& net);
};

struct BuildInputs {
  const net::Network* network = nullptr;
  const demand::DemandScenario* scenario = nullptr;
  SlotIdx k0 = 0;
  int n_steps = 1;
  ObjectiveWeights weights;
  ObjectiveMode mode = ObjectiveMode::Linearized;
  const InitialCondition* init = nullptr;
  // Slots with k < committed_before are pinned to their applied values; the
  // default (-1) means committed_before = k0, i.e. no in-window history.
  SlotIdx committed_before = -1;
  // Fold order flags already determined by the departure windows into
  // constants instead of emitting binary columns for them.
  bool inline_order_fixing = true;
};

struct StandardFormProblem {
  mip::LpProblem lp;                 // rows, bounds; lp.c = linearized cost
  std::vector<std::uint8_t> is_int;  // per column (integer or binary)
  std::map<std::string, ColumnInfo> var_index;
  std::map<std::string, AffineExpr> derived;  // recorded affine symbols
  ObjectiveDescriptor objective;              // selected mode
  ObjectiveDescriptor nonlinear_objective;    // true cost, for reporting
  ObjectiveDescriptor linearized_objective;   // LP surrogate
  ObjectiveMode mode = ObjectiveMode::Linearized;
  BigM big_m;

  // Window structure used by presolve, the controller and the learning stack.
  const net::Network* network = nullptr;
  const demand::DemandScenario* scenario = nullptr;
  SlotIdx k0 = 0;
  int n_steps = 0;
  SlotIdx committed_before = 0;
  std::vector<Slot> slots;  // platform-major, then k ascending
  std::map<Slot, int> col_d, col_a, col_ndep;          // -1: eliminated
  std::map<Slot, int> col_y, col_o, col_gamma, col_eta;  // sigma slots only
  std::map<OrderPair, int> col_xi, col_v;              // free order pairs
  std::map<OrderPair, int> fixed_xi;                   // folded flag values
  std::map<OrderPair, std::pair<int, int>> order_rows; // 4.3 row ids per free pair
  std::map<Slot, AffineExpr> ell;                      // composition chains
  std::map<Slot, AffineExpr> n_before, n_after, waiting_at;
  std::vector<int> time_cols;  // d/a columns (trust region targets)

  int col_count() const { return int(lp.cols()); }
  mip::LpProblem lp_with_cost(const VectorXd& c) const;
};

StandardFormProblem build_problem(const BuildInputs& in);

// Pin integer columns to given values (bounds become [v, v]).
void fix_columns(StandardFormProblem& sp, const std::map<int, double>& values);

// A complete integer decision: depot exchanges per adjustable slot and order
// flags per free pair.  Auxiliaries (o, gamma, eta, v) follow from these.
struct IntegerAssignment {
  std::map<Slot, int> y;
  std::map<OrderPair, int> xi;
};

// Extract the rounded integer decision from a solved column vector.
IntegerAssignment extract_assignment(const StandardFormProblem& sp, const VectorXd& x);

// Continuous restriction of the problem under a fixed integer decision.  The
// order-definition rows are relaxed so fixed flags act as parameters of the
// depot balance (the post-solve consistency check re-derives them); the
// product auxiliaries stay pinned through their McCormick rows.
mip::LpProblem continuous_restriction(const StandardFormProblem& sp, const IntegerAssignment& ia,
                                      bool relax_order_rows = true);

// ---------------------------------------------------------------------------
// MLD row encoders.  Rows are (terms, lo, hi) with inclusive bounds.

struct LinearRow {
  std::vector<std::pair<int, double>> terms;
  double lo = -kInf;
  double hi = kInf;
};

struct EncodingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// o = |y| via sign indicator gamma (four inequalities).
std::vector<LinearRow> encode_abs(int y_col, int o_col, int gamma_col, double y_max);

// eta = [o > 0] over o in [o_min, o_max], threshold epsilon (two inequalities).
std::vector<LinearRow> encode_indicator(int o_col, int eta_col, double o_min, double o_max,
                                        double epsilon);

// xi = [d_p >= d_q + t_roll]; m_f/M_f bracket f = d_p - d_q - t_roll.
std::vector<LinearRow> encode_order(int d_p_col, int d_q_col, int xi_col, double t_roll,
                                    double m_f, double M_f, double epsilon);

// v = xi * y for binary xi and |y| <= y_max (McCormick, exact at binaries).
std::vector<LinearRow> encode_product(int xi_col, int y_col, int v_col, double y_max);

// ---------------------------------------------------------------------------
// Objective helpers.

// Delay cost of one slot: waiting * (d - d_pre) + left-behind * (d_pre_next - d).
double j_pass_term(double n_k, double d, double d_pre, double n_after, double d_pre_next);
// Operation cost of one slot: composition * segment energy + change cost.
double j_cost_term(int l, double e_energy, bool eta, double e_add);

struct W3Entry {
  double d_bar = 0, d_pre = 0, d_pre_next = 0;
};
// Mean of (d_bar - d_pre) / (d_pre_next - d_bar) over history entries.
double compute_w3(const std::vector<W3Entry>& history);

// ---------------------------------------------------------------------------
// Forward evaluation: given feasible departure times and depot exchanges,
// reproduce every derived quantity by the model equations and return a full
// column vector.  Arrivals sit at their earliest feasible position; boarding
// saturates at min(capacity, waiting).  Throws InfeasibleInputError when the
// choices cannot be completed.
VectorXd forward_vector(const StandardFormProblem& sp, const std::map<Slot, double>& d,
                        const std::map<Slot, int>& y);

}  // namespace railsched::model
