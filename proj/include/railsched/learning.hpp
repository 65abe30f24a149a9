#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "railsched/mpc.hpp"

namespace railsched::learn {

// ---------------------------------------------------------------------------
// State encoding

struct StateLayout {
  std::vector<PlatformId> platform_order;  // canonical ascending ids
  std::vector<DepotId> depot_order;
  int horizon = 0;
  int dim() const {
    return int(platform_order.size()) * (1 + horizon) + int(depot_order.size());
  }
  bool operator==(const StateLayout&) const = default;
};

StateLayout layout_of(const net::Network& net, int horizon);

// [ waiting per platform | demand rates per platform over the remaining
// window, zero-padded | available units per depot ], unnormalized.
VectorXd encode_state(const StateLayout& layout, const net::Network& net,
                      const demand::DemandScenario& sc, const mpc::MpcState& state);

// ---------------------------------------------------------------------------
// Candidate actions: one exchange value per adjustable platform for the head
// step of the window, enumerated lexicographically over slots then values.

struct CandidateSet {
  std::vector<PlatformId> slots;  // sigma platforms, ascending
  int y_max = 0;

  int count() const {
    int c = 1;
    for (size_t i = 0; i < slots.size(); ++i) c *= 2 * y_max + 1;
    return c;
  }
  std::vector<int> decode(int index) const;
  int encode(const std::vector<int>& ys) const;
  int zero_index() const { return encode(std::vector<int>(slots.size(), 0)); }
};

CandidateSet candidate_set(const net::Network& net);

// Composition bounds along the head-step chain under the candidate exchanges.
bool bounds_feasible(const CandidateSet& cs, const std::vector<int>& ys,
                     const model::StandardFormProblem& sp);

// Full-window assignment: candidate exchanges at the head step, unchanged
// compositions on the tail, order flags at their nominal-timetable values.
model::IntegerAssignment head_assignment(const CandidateSet& cs, const std::vector<int>& ys,
                                         const model::StandardFormProblem& sp);

// ---------------------------------------------------------------------------
// Recurrent scorer: input projection (identity activation), one LSTM cell,
// linear head with one score per candidate.

template <typename T>
void lstm_cell_forward(const Matrix<T>& wx, const Matrix<T>& wh, const Vector<T>& bias,
                       const Vector<T>& u, const Vector<T>& h_prev, const Vector<T>& c_prev,
                       Vector<T>& gates, Vector<T>& c, Vector<T>& h) {
  const int hs = int(h_prev.size());
  gates.noalias() = wx * u + wh * h_prev + bias;
  auto sig = [](T v) { return T(1) / (T(1) + std::exp(-v)); };
  for (int j = 0; j < hs; ++j) {
    gates[j] = sig(gates[j]);                    // input gate
    gates[hs + j] = sig(gates[hs + j]);          // forget gate
    gates[2 * hs + j] = std::tanh(gates[2 * hs + j]);  // cell proposal
    gates[3 * hs + j] = sig(gates[3 * hs + j]);  // output gate
  }
  c = gates.segment(hs, hs).cwiseProduct(c_prev) +
      gates.head(hs).cwiseProduct(gates.segment(2 * hs, hs));
  h = gates.tail(hs).cwiseProduct(c.array().tanh().matrix());
}

struct ScorerConfig {
  int hidden = 64;
  double dropout = 0.0;
  bool lr_schedule = false;
  bool output_mask = true;
  std::uint64_t seed = 0;
};

struct RecurrentScorer {
  ScorerConfig cfg;
  StateLayout layout;
  int input_dim = 0;
  int candidates = 0;
  VectorXd norm_scale;  // per-feature divisor, >= 1

  MatrixXd w1;            // hidden x input
  VectorXd b1;
  MatrixXd wx, wh;        // 4*hidden x hidden
  VectorXd bias;          // 4*hidden
  MatrixXd w2;            // candidates x hidden
  VectorXd b2;
  bool training_mode = false;

  struct Hidden {
    VectorXd h, c;
  };
  Hidden initial_hidden() const {
    return {VectorXd::Zero(cfg.hidden), VectorXd::Zero(cfg.hidden)};
  }

  // Inference scores; dropout is a training-only effect.
  VectorXd score(const VectorXd& raw_state, Hidden& hid) const;

  // Flat parameter access, ordered w1, b1, wx, wh, bias, w2, b2.
  long param_count() const;
  VectorXd flatten() const;
  void unflatten(const VectorXd& theta);
};

RecurrentScorer make_scorer(const StateLayout& layout, int candidates, const ScorerConfig& cfg);

// ---------------------------------------------------------------------------
// Labeled data

struct LabeledSample {
  VectorXd state;        // raw encoding
  VectorXd objectives;   // per candidate; +inf when infeasible
  std::vector<std::uint8_t> feasible;
  int optimal_index = -1;
  long episode_id = 0;
  long step_id = 0;
};

struct Dataset {
  StateLayout layout;
  int candidate_count = 0;
  std::vector<LabeledSample> samples;  // grouped by episode, steps ascending
};

struct GenOptions {
  int episodes = 4;
  int steps = 10;
  SlotIdx start_kappa = 0;
  long budget = 1000;  // sample cap
  mpc::StrategyConfig driver;  // strategy that steers the visited states
  mip::SolverConfig solver;
  std::uint64_t seed = 1;
};

Dataset generate_dataset(const net::Network& net, const demand::DemandProfile& base,
                         const GenOptions& opt);

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// ---------------------------------------------------------------------------
// Training

struct TrainOptions {
  long iterations = 6000;
  int unroll = 4;
  double lr = 2e-3;
  std::uint64_t seed = 0;
  double diverge_loss = 1e6;
};

struct TrainResult {
  std::vector<double> loss_history;  // per iteration
  std::vector<double> moving_average(int window = 1000) const;
};

// Minibatch: a run of consecutive samples of one episode plus frozen dropout
// masks, so losses and gradients are pure functions of the parameters.
struct Minibatch {
  long first = 0;
  int length = 0;
  std::vector<VectorXd> dropout_masks;  // per step, hidden-sized; empty = no dropout
};

Minibatch draw_minibatch(const Dataset& ds, const RecurrentScorer& sc, int unroll,
                         std::uint64_t& rng_state);
double minibatch_loss(const RecurrentScorer& sc, const Dataset& ds, const Minibatch& mb);
// Gradient in flat parameter order; returns the loss.
double minibatch_grad(const RecurrentScorer& sc, const Dataset& ds, const Minibatch& mb,
                      VectorXd& grad);

TrainResult train_scorer(RecurrentScorer& sc, const Dataset& ds, const TrainOptions& opt);

// ---------------------------------------------------------------------------
// Sequential ensemble

struct Ensemble {
  std::vector<RecurrentScorer> nets;  // evaluation order
};

// Desk grid: hidden {64,128} x dropout {0,0.5}, alternating schedule/masking.
Ensemble make_ensemble(const StateLayout& layout, int candidates, std::uint64_t seed);

void save_weights(const RecurrentScorer& sc, const std::string& path);
RecurrentScorer load_weights(const std::string& path);

class EnsembleOracle : public mpc::IntegerOracle {
 public:
  EnsembleOracle(const net::Network& net, Ensemble ensemble, int top_k = 3);

  std::optional<model::IntegerAssignment> propose(
      const model::StandardFormProblem& sp, const mpc::MpcState& state,
      const std::function<bool(const model::IntegerAssignment&)>& feasible) override;
  void episode_reset() override;

  const Ensemble& ensemble() const { return ensemble_; }

 private:
  const net::Network& net_;
  Ensemble ensemble_;
  CandidateSet cands_;
  int top_k_;
  std::vector<RecurrentScorer::Hidden> hidden_;
};

}  // namespace railsched::learn
