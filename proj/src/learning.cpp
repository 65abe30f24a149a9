#include "railsched/learning.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace railsched::learn {

using model::IntegerAssignment;
using model::Slot;
using model::StandardFormProblem;

StateLayout layout_of(const net::Network& net, int horizon) {
  StateLayout l;
  for (const auto& p : net.platforms) l.platform_order.push_back(p.id);
  std::sort(l.platform_order.begin(), l.platform_order.end());
  for (const auto& d : net.depots) l.depot_order.push_back(d.id);
  std::sort(l.depot_order.begin(), l.depot_order.end());
  l.horizon = horizon;
  return l;
}

VectorXd encode_state(const StateLayout& layout, const net::Network& net,
                      const demand::DemandScenario& sc, const mpc::MpcState& state) {
  (void)net;
  VectorXd x = VectorXd::Zero(layout.dim());
  int at = 0;
  for (PlatformId p : layout.platform_order) x[at++] = double(state.waiting.at(p));
  for (PlatformId p : layout.platform_order)
    for (int j = 0; j < layout.horizon; ++j) {
      const SlotIdx k = state.kappa + 1 + j;
      x[at++] = sc.sampled.covers(p, k) ? sc.sampled.rate(p, k) : 0.0;
    }
  for (DepotId z : layout.depot_order) x[at++] = double(state.depot_stock.at(z));
  return x;
}

// ---------------------------------------------------------------------------
// Candidates

std::vector<int> CandidateSet::decode(int index) const {
  std::vector<int> ys(slots.size(), 0);
  const int base = 2 * y_max + 1;
  for (size_t i = slots.size(); i-- > 0;) {
    ys[i] = index % base - y_max;
    index /= base;
  }
  return ys;
}

int CandidateSet::encode(const std::vector<int>& ys) const {
  const int base = 2 * y_max + 1;
  int idx = 0;
  for (size_t i = 0; i < ys.size(); ++i) idx = idx * base + (ys[i] + y_max);
  return idx;
}

CandidateSet candidate_set(const net::Network& net) {
  CandidateSet cs;
  for (const auto& p : net.platforms)
    if (p.sigma) cs.slots.push_back(p.id);
  std::sort(cs.slots.begin(), cs.slots.end());
  cs.y_max = net.fleet.l_max - net.fleet.l_min;
  return cs;
}

bool bounds_feasible(const CandidateSet& cs, const std::vector<int>& ys,
                     const StandardFormProblem& sp) {
  const auto& fleet = sp.network->fleet;
  VectorXd x = VectorXd::Zero(sp.lp.cols());
  for (size_t i = 0; i < cs.slots.size(); ++i) {
    const Slot s{cs.slots[i], sp.k0};
    auto it = sp.col_y.find(s);
    if (it == sp.col_y.end()) continue;
    if (sp.lp.lo[it->second] == sp.lp.hi[it->second]) continue;  // pinned by presolve
    if (std::abs(ys[i]) > cs.y_max) return false;
    x[it->second] = double(ys[i]);
  }
  for (size_t i = 0; i < cs.slots.size(); ++i) {
    const Slot s{cs.slots[i], sp.k0};
    auto it = sp.ell.find(s);
    if (it == sp.ell.end()) continue;
    const double l = it->second.eval(x);
    if (l < fleet.l_min - 1e-9 || l > fleet.l_max + 1e-9) return false;
  }
  return true;
}

IntegerAssignment head_assignment(const CandidateSet& cs, const std::vector<int>& ys,
                                  const StandardFormProblem& sp) {
  IntegerAssignment ia;
  for (const auto& [s, c] : sp.col_y) {
    if (sp.lp.lo[c] == sp.lp.hi[c]) continue;
    ia.y[s] = 0;
  }
  for (size_t i = 0; i < cs.slots.size(); ++i) {
    const Slot s{cs.slots[i], sp.k0};
    if (ia.y.count(s)) ia.y[s] = ys[i];
  }
  const auto& net = *sp.network;
  const auto& tt = net.timetable;
  for (const auto& [pr, c] : sp.col_xi) {
    if (sp.lp.lo[c] == sp.lp.hi[c]) continue;
    const double lhs = double(tt.d_pre(pr.first.p, pr.first.k));
    const double rhs =
        double(tt.d_pre(pr.second.p, pr.second.k)) + net.platform(pr.second.p).t_roll;
    ia.xi[pr] = lhs >= rhs ? 1 : 0;
  }
  return ia;
}

// ---------------------------------------------------------------------------
// Scorer

namespace {

double rand_u01(std::uint64_t& st) {
  st = splitmix64(st);
  return double(st >> 11) * 0x1.0p-53;
}

}  // namespace

RecurrentScorer make_scorer(const StateLayout& layout, int candidates, const ScorerConfig& cfg) {
  RecurrentScorer sc;
  sc.cfg = cfg;
  sc.layout = layout;
  sc.input_dim = layout.dim();
  sc.candidates = candidates;
  sc.norm_scale = VectorXd::Ones(sc.input_dim);
  const int h = cfg.hidden;
  auto init = [&](MatrixXd& m, int rows, int cols, std::uint64_t tag) {
    m.resize(rows, cols);
    std::uint64_t st = derive_seed(cfg.seed, "init", tag);
    const double scale = 1.0 / std::sqrt(double(cols));
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) m(i, j) = (2 * rand_u01(st) - 1) * scale;
  };
  init(sc.w1, h, sc.input_dim, 1);
  sc.b1 = VectorXd::Zero(h);
  init(sc.wx, 4 * h, h, 2);
  init(sc.wh, 4 * h, h, 3);
  sc.bias = VectorXd::Zero(4 * h);
  sc.bias.segment(h, h).setOnes();  // forget gate bias
  init(sc.w2, candidates, h, 4);
  sc.b2 = VectorXd::Zero(candidates);
  return sc;
}

VectorXd RecurrentScorer::score(const VectorXd& raw_state, Hidden& hid) const {
  if (training_mode) throw std::logic_error("score() called while training mode is active");
  if (int(raw_state.size()) != input_dim)
    throw std::invalid_argument("scorer: state dimension mismatch");
  const VectorXd x = raw_state.cwiseQuotient(norm_scale);
  const VectorXd u = w1 * x + b1;
  VectorXd gates, c, h;
  lstm_cell_forward<double>(wx, wh, bias, u, hid.h, hid.c, gates, c, h);
  hid.h = h;
  hid.c = c;
  return w2 * h + b2;
}

long RecurrentScorer::param_count() const {
  return w1.size() + b1.size() + wx.size() + wh.size() + bias.size() + w2.size() + b2.size();
}

VectorXd RecurrentScorer::flatten() const {
  VectorXd theta(param_count());
  long at = 0;
  auto put = [&](const auto& m) {
    std::memcpy(theta.data() + at, m.data(), sizeof(double) * size_t(m.size()));
    at += m.size();
  };
  put(w1);
  put(b1);
  put(wx);
  put(wh);
  put(bias);
  put(w2);
  put(b2);
  return theta;
}

void RecurrentScorer::unflatten(const VectorXd& theta) {
  long at = 0;
  auto take = [&](auto& m) {
    std::memcpy(m.data(), theta.data() + at, sizeof(double) * size_t(m.size()));
    at += m.size();
  };
  take(w1);
  take(b1);
  take(wx);
  take(wh);
  take(bias);
  take(w2);
  take(b2);
}

// ---------------------------------------------------------------------------
// Loss and gradient over a frozen minibatch

namespace {

struct Targets {
  VectorXd t;
  std::vector<std::uint8_t> active;
  int n_active = 0;
};

Targets make_targets(const LabeledSample& s, bool output_mask, int candidates) {
  Targets tg;
  tg.t = VectorXd::Zero(candidates);
  tg.active.assign(size_t(candidates), 0);
  double mean = 0;
  int nf = 0;
  for (int c = 0; c < candidates; ++c)
    if (s.feasible[size_t(c)]) {
      mean += s.objectives[c];
      ++nf;
    }
  if (nf == 0) return tg;
  mean /= nf;
  double var = 0;
  for (int c = 0; c < candidates; ++c)
    if (s.feasible[size_t(c)]) var += (s.objectives[c] - mean) * (s.objectives[c] - mean);
  const double sd = std::max(std::sqrt(var / nf), 1e-9);
  for (int c = 0; c < candidates; ++c) {
    if (s.feasible[size_t(c)]) {
      tg.t[c] = (s.objectives[c] - mean) / sd;
      tg.active[size_t(c)] = 1;
      ++tg.n_active;
    } else if (!output_mask) {
      tg.t[c] = 3.0;  // penalty target instead of masking
      tg.active[size_t(c)] = 1;
      ++tg.n_active;
    }
  }
  return tg;
}

struct StepTape {
  VectorXd x, u, gates, c, h, hm, s;
  VectorXd h_prev, c_prev;
  Targets tg;
};

double forward_tape(const RecurrentScorer& sc, const Dataset& ds, const Minibatch& mb,
                    std::vector<StepTape>* tape) {
  const int hs = sc.cfg.hidden;
  VectorXd h = VectorXd::Zero(hs), c = VectorXd::Zero(hs);
  double loss = 0;
  for (int t = 0; t < mb.length; ++t) {
    const auto& sample = ds.samples[size_t(mb.first + t)];
    StepTape st;
    st.h_prev = h;
    st.c_prev = c;
    st.x = sample.state.cwiseQuotient(sc.norm_scale);
    st.u = sc.w1 * st.x + sc.b1;
    lstm_cell_forward<double>(sc.wx, sc.wh, sc.bias, st.u, st.h_prev, st.c_prev, st.gates, st.c,
                              st.h);
    h = st.h;
    c = st.c;
    st.hm = mb.dropout_masks.empty() ? st.h
                                     : VectorXd(st.h.cwiseProduct(mb.dropout_masks[size_t(t)]));
    st.s = sc.w2 * st.hm + sc.b2;
    st.tg = make_targets(sample, sc.cfg.output_mask, sc.candidates);
    if (st.tg.n_active > 0) {
      double l = 0;
      for (int i = 0; i < sc.candidates; ++i)
        if (st.tg.active[size_t(i)]) l += (st.s[i] - st.tg.t[i]) * (st.s[i] - st.tg.t[i]);
      loss += l / st.tg.n_active;
    }
    if (tape) tape->push_back(std::move(st));
  }
  return loss / std::max(1, mb.length);
}

}  // namespace

Minibatch draw_minibatch(const Dataset& ds, const RecurrentScorer& sc, int unroll,
                         std::uint64_t& rng_state) {
  // Episode ranges, in sample order.
  std::vector<std::pair<long, long>> runs;
  long i = 0;
  while (i < long(ds.samples.size())) {
    long j = i;
    while (j < long(ds.samples.size()) &&
           ds.samples[size_t(j)].episode_id == ds.samples[size_t(i)].episode_id)
      ++j;
    runs.push_back({i, j});
    i = j;
  }
  rng_state = splitmix64(rng_state);
  const auto& run = runs[size_t(rng_state % runs.size())];
  const long span = run.second - run.first;
  const int len = int(std::min<long>(unroll, span));
  const long max_start = run.second - len;
  rng_state = splitmix64(rng_state);
  const long start = run.first + long(rng_state % std::uint64_t(max_start - run.first + 1));
  Minibatch mb;
  mb.first = start;
  mb.length = len;
  if (sc.cfg.dropout > 0) {
    for (int t = 0; t < len; ++t) {
      VectorXd m(sc.cfg.hidden);
      for (int j = 0; j < sc.cfg.hidden; ++j)
        m[j] = rand_u01(rng_state) < sc.cfg.dropout ? 0.0 : 1.0 / (1.0 - sc.cfg.dropout);
      mb.dropout_masks.push_back(std::move(m));
    }
  }
  return mb;
}

double minibatch_loss(const RecurrentScorer& sc, const Dataset& ds, const Minibatch& mb) {
  return forward_tape(sc, ds, mb, nullptr);
}

double minibatch_grad(const RecurrentScorer& sc, const Dataset& ds, const Minibatch& mb,
                      VectorXd& grad) {
  std::vector<StepTape> tape;
  tape.reserve(size_t(mb.length));
  const double loss = forward_tape(sc, ds, mb, &tape);

  const int hs = sc.cfg.hidden;
  MatrixXd dw1 = MatrixXd::Zero(sc.w1.rows(), sc.w1.cols());
  VectorXd db1 = VectorXd::Zero(sc.b1.size());
  MatrixXd dwx = MatrixXd::Zero(sc.wx.rows(), sc.wx.cols());
  MatrixXd dwh = MatrixXd::Zero(sc.wh.rows(), sc.wh.cols());
  VectorXd dbias = VectorXd::Zero(sc.bias.size());
  MatrixXd dw2 = MatrixXd::Zero(sc.w2.rows(), sc.w2.cols());
  VectorXd db2 = VectorXd::Zero(sc.b2.size());

  VectorXd dh_next = VectorXd::Zero(hs), dc_next = VectorXd::Zero(hs);
  for (int t = mb.length - 1; t >= 0; --t) {
    const auto& st = tape[size_t(t)];
    VectorXd ds_out = VectorXd::Zero(sc.candidates);
    if (st.tg.n_active > 0) {
      for (int i = 0; i < sc.candidates; ++i)
        if (st.tg.active[size_t(i)])
          ds_out[i] = 2.0 * (st.s[i] - st.tg.t[i]) / (st.tg.n_active * mb.length);
    }
    dw2.noalias() += ds_out * st.hm.transpose();
    db2 += ds_out;
    VectorXd dhm = sc.w2.transpose() * ds_out;
    VectorXd dh = mb.dropout_masks.empty()
                      ? dhm
                      : VectorXd(dhm.cwiseProduct(mb.dropout_masks[size_t(t)]));
    dh += dh_next;

    const auto i_g = st.gates.head(hs);
    const auto f_g = st.gates.segment(hs, hs);
    const auto g_g = st.gates.segment(2 * hs, hs);
    const auto o_g = st.gates.tail(hs);
    const VectorXd tanh_c = st.c.array().tanh().matrix();
    const VectorXd do_ = dh.cwiseProduct(tanh_c);
    VectorXd dc = dh.cwiseProduct(o_g).cwiseProduct(
                      (1.0 - tanh_c.array().square()).matrix()) +
                  dc_next;
    const VectorXd df = dc.cwiseProduct(st.c_prev);
    const VectorXd di = dc.cwiseProduct(g_g);
    const VectorXd dg = dc.cwiseProduct(i_g);
    dc_next = dc.cwiseProduct(f_g);

    VectorXd dz(4 * hs);
    dz.head(hs) = di.cwiseProduct(i_g).cwiseProduct((1.0 - i_g.array()).matrix());
    dz.segment(hs, hs) = df.cwiseProduct(f_g).cwiseProduct((1.0 - f_g.array()).matrix());
    dz.segment(2 * hs, hs) = dg.cwiseProduct((1.0 - g_g.array().square()).matrix());
    dz.tail(hs) = do_.cwiseProduct(o_g).cwiseProduct((1.0 - o_g.array()).matrix());

    dwx.noalias() += dz * st.u.transpose();
    dwh.noalias() += dz * st.h_prev.transpose();
    dbias += dz;
    const VectorXd du = sc.wx.transpose() * dz;
    dw1.noalias() += du * st.x.transpose();
    db1 += du;
    dh_next = sc.wh.transpose() * dz;
  }

  grad.resize(sc.param_count());
  long at = 0;
  auto put = [&](const auto& m) {
    std::memcpy(grad.data() + at, m.data(), sizeof(double) * size_t(m.size()));
    at += m.size();
  };
  put(dw1);
  put(db1);
  put(dwx);
  put(dwh);
  put(dbias);
  put(dw2);
  put(db2);
  return loss;
}

std::vector<double> TrainResult::moving_average(int window) const {
  std::vector<double> out;
  double acc = 0;
  for (size_t i = 0; i < loss_history.size(); ++i) {
    acc += loss_history[i];
    if (i >= size_t(window)) acc -= loss_history[i - size_t(window)];
    out.push_back(acc / double(std::min(i + 1, size_t(window))));
  }
  return out;
}

TrainResult train_scorer(RecurrentScorer& sc, const Dataset& ds, const TrainOptions& opt) {
  if (ds.samples.empty()) throw std::invalid_argument("train_scorer: empty dataset");
  if (!(ds.layout == sc.layout)) throw std::invalid_argument("train_scorer: layout mismatch");

  // Per-feature normalization from the data, stored with the weights.
  sc.norm_scale = VectorXd::Ones(sc.input_dim);
  for (const auto& s : ds.samples)
    sc.norm_scale = sc.norm_scale.cwiseMax(s.state.cwiseAbs());

  TrainResult res;
  sc.training_mode = true;
  VectorXd theta = sc.flatten();
  VectorXd m = VectorXd::Zero(theta.size());
  VectorXd v = VectorXd::Zero(theta.size());
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::uint64_t rng = derive_seed(opt.seed, "train");
  VectorXd grad;

  for (long it = 1; it <= opt.iterations; ++it) {
    auto mb = draw_minibatch(ds, sc, opt.unroll, rng);
    const double loss = minibatch_grad(sc, ds, mb, grad);
    if (!std::isfinite(loss) || loss > opt.diverge_loss) {
      sc.training_mode = false;
      throw std::runtime_error("train_scorer: diverged at iteration " + std::to_string(it) +
                               " with loss " + std::to_string(loss));
    }
    res.loss_history.push_back(loss);
    double lr = opt.lr;
    if (sc.cfg.lr_schedule)
      lr *= std::pow(0.5, std::floor(3.0 * double(it) / double(opt.iterations)));
    m = b1 * m + (1 - b1) * grad;
    v = b2 * v + (1 - b2) * grad.cwiseProduct(grad);
    const double mc = 1 - std::pow(b1, double(it));
    const double vc = 1 - std::pow(b2, double(it));
    theta -= (lr / mc) * m.cwiseQuotient(((v / vc).cwiseSqrt().array() + eps).matrix());
    sc.unflatten(theta);
  }
  sc.training_mode = false;
  return res;
}

// ---------------------------------------------------------------------------
// Dataset generation

namespace {

std::optional<double> candidate_label(const StandardFormProblem& sp, const IntegerAssignment& ia) {
  mip::LpProblem lp;
  try {
    lp = model::continuous_restriction(sp, ia, true);
  } catch (const std::invalid_argument&) {
    return std::nullopt;
  }
  lp.c = sp.linearized_objective.linear;
  auto r = mip::solve_lp(lp);
  if (r.status != mip::LpStatus::Optimal) return std::nullopt;
  return sp.nonlinear_objective.eval(r.x);
}

}  // namespace

Dataset generate_dataset(const net::Network& net, const demand::DemandProfile& base,
                         const GenOptions& opt) {
  Dataset ds;
  ds.layout = layout_of(net, opt.driver.horizon);
  const CandidateSet cs = candidate_set(net);
  ds.candidate_count = cs.count();

  long produced = 0;
  for (int ep = 0; ep < opt.episodes && produced < opt.budget; ++ep) {
    auto sc = demand::sample_scenario(base, derive_seed(opt.seed, "scenario", ep));
    mpc::Controller ctl(net, sc, opt.driver, opt.solver);
    long step_id = 0;
    ctl.set_observer([&](const StandardFormProblem& sp, const mpc::MpcState& st) {
      if (produced >= opt.budget) return;
      LabeledSample sample;
      sample.state = encode_state(ds.layout, net, sc, st);
      sample.objectives = VectorXd::Constant(ds.candidate_count, kInf);
      sample.feasible.assign(size_t(ds.candidate_count), 0);
      sample.episode_id = ep;
      sample.step_id = step_id;
      double best = kInf;
      for (int c = 0; c < ds.candidate_count; ++c) {
        const auto ys = cs.decode(c);
        if (!bounds_feasible(cs, ys, sp)) continue;
        auto j = candidate_label(sp, head_assignment(cs, ys, sp));
        if (!j) continue;
        sample.objectives[c] = *j;
        sample.feasible[size_t(c)] = 1;
        if (*j < best) {
          best = *j;
          sample.optimal_index = c;
        }
      }
      if (sample.optimal_index >= 0) {
        ds.samples.push_back(std::move(sample));
        ++produced;
      }
      ++step_id;
    });
    ctl.run(opt.start_kappa, opt.steps);
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write dataset: " + path);
  const int dim = ds.layout.dim();
  f << "# layout platforms=" << ds.layout.platform_order.size()
    << " horizon=" << ds.layout.horizon << " depots=" << ds.layout.depot_order.size()
    << " candidates=" << ds.candidate_count << "\n";
  for (int i = 0; i < dim; ++i) f << "state_" << i << ",";
  f << "candidate_index,objective,feasible,episode_id,step_id";
  for (int c = 0; c < ds.candidate_count; ++c) f << ",obj_" << c;
  for (int c = 0; c < ds.candidate_count; ++c) f << ",feas_" << c;
  f << "\n";
  f.precision(17);
  for (const auto& s : ds.samples) {
    for (int i = 0; i < dim; ++i) f << s.state[i] << ",";
    f << s.optimal_index << "," << s.objectives[s.optimal_index] << ",1," << s.episode_id << ","
      << s.step_id;
    for (int c = 0; c < ds.candidate_count; ++c)
      f << "," << (s.feasible[size_t(c)] ? s.objectives[c] : kInf);
    for (int c = 0; c < ds.candidate_count; ++c) f << "," << int(s.feasible[size_t(c)]);
    f << "\n";
  }
}

Dataset load_dataset(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open dataset: " + path);
  Dataset ds;
  std::string line;
  if (!std::getline(f, line) || line.rfind("# layout", 0) != 0)
    throw ConfigError("dataset: missing layout header");
  int platforms = 0, depots = 0;
  {
    std::istringstream in(line.substr(8));
    std::string tok;
    while (in >> tok) {
      auto eq = tok.find('=');
      const std::string k = tok.substr(0, eq);
      const int v = std::stoi(tok.substr(eq + 1));
      if (k == "platforms")
        platforms = v;
      else if (k == "horizon")
        ds.layout.horizon = v;
      else if (k == "depots")
        depots = v;
      else if (k == "candidates")
        ds.candidate_count = v;
    }
  }
  // Canonical ids are not stored; only dimensions matter for training.
  for (int i = 0; i < platforms; ++i) ds.layout.platform_order.push_back(i + 1);
  for (int i = 0; i < depots; ++i) ds.layout.depot_order.push_back(i + 1);
  std::getline(f, line);  // column header
  const int dim = ds.layout.dim();
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream in(line);
    std::string cell;
    LabeledSample s;
    s.state = VectorXd::Zero(dim);
    for (int i = 0; i < dim; ++i) {
      std::getline(in, cell, ',');
      s.state[i] = std::stod(cell);
    }
    std::getline(in, cell, ',');
    s.optimal_index = std::stoi(cell);
    std::getline(in, cell, ',');  // optimal objective (redundant)
    std::getline(in, cell, ',');  // sample-level feasible flag
    std::getline(in, cell, ',');
    s.episode_id = std::stol(cell);
    std::getline(in, cell, ',');
    s.step_id = std::stol(cell);
    s.objectives = VectorXd::Zero(ds.candidate_count);
    for (int c = 0; c < ds.candidate_count; ++c) {
      std::getline(in, cell, ',');
      s.objectives[c] = std::stod(cell);
    }
    s.feasible.assign(size_t(ds.candidate_count), 0);
    for (int c = 0; c < ds.candidate_count; ++c) {
      std::getline(in, cell, ',');
      s.feasible[size_t(c)] = std::uint8_t(std::stoi(cell));
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Ensemble

Ensemble make_ensemble(const StateLayout& layout, int candidates, std::uint64_t seed) {
  Ensemble e;
  const int hiddens[4] = {64, 128, 64, 128};
  const double drops[4] = {0.0, 0.0, 0.5, 0.5};
  for (int i = 0; i < 4; ++i) {
    ScorerConfig cfg;
    cfg.hidden = hiddens[i];
    cfg.dropout = drops[i];
    cfg.lr_schedule = i % 2 == 1;
    cfg.output_mask = i < 2;
    cfg.seed = derive_seed(seed, "net", std::uint64_t(i));
    e.nets.push_back(make_scorer(layout, candidates, cfg));
  }
  return e;
}

namespace {
constexpr std::uint32_t kWeightsMagic = 0x52535731;  // "RSW1"
}

void save_weights(const RecurrentScorer& sc, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write weights: " + path);
  auto w32 = [&](std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
  auto w64 = [&](std::uint64_t v) { f.write(reinterpret_cast<const char*>(&v), 8); };
  auto wd = [&](double v) { f.write(reinterpret_cast<const char*>(&v), 8); };
  auto wmat = [&](const auto& m) {
    for (long i = 0; i < m.rows(); ++i)
      for (long j = 0; j < m.cols(); ++j) wd(m(i, j));
  };
  w32(kWeightsMagic);
  w32(1);  // version
  w32(std::uint32_t(sc.cfg.hidden));
  w32(std::uint32_t(sc.input_dim));
  w32(std::uint32_t(sc.candidates));
  w32(std::uint32_t(sc.layout.platform_order.size()));
  w32(std::uint32_t(sc.layout.horizon));
  w32(std::uint32_t(sc.layout.depot_order.size()));
  w32(std::uint32_t(sc.cfg.lr_schedule ? 1 : 0) | (sc.cfg.output_mask ? 2u : 0u));
  wd(sc.cfg.dropout);
  w64(sc.cfg.seed);
  for (PlatformId p : sc.layout.platform_order) w32(std::uint32_t(p));
  for (DepotId z : sc.layout.depot_order) w32(std::uint32_t(z));
  for (int i = 0; i < sc.input_dim; ++i) wd(sc.norm_scale[i]);
  wmat(sc.w1);
  wmat(sc.b1);
  wmat(sc.wx);
  wmat(sc.wh);
  wmat(sc.bias);
  wmat(sc.w2);
  wmat(sc.b2);
}

RecurrentScorer load_weights(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open weights: " + path);
  auto r32 = [&] {
    std::uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  auto r64 = [&] {
    std::uint64_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };
  auto rd = [&] {
    double v = 0;
    f.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };
  if (r32() != kWeightsMagic) throw ConfigError("weights: bad magic");
  if (r32() != 1) throw ConfigError("weights: unsupported version");
  ScorerConfig cfg;
  cfg.hidden = int(r32());
  const int input_dim = int(r32());
  const int candidates = int(r32());
  StateLayout layout;
  const int platforms = int(r32());
  layout.horizon = int(r32());
  const int depots = int(r32());
  const std::uint32_t flags = r32();
  cfg.lr_schedule = flags & 1;
  cfg.output_mask = flags & 2;
  cfg.dropout = rd();
  cfg.seed = r64();
  for (int i = 0; i < platforms; ++i) layout.platform_order.push_back(PlatformId(r32()));
  for (int i = 0; i < depots; ++i) layout.depot_order.push_back(DepotId(r32()));
  RecurrentScorer sc = make_scorer(layout, candidates, cfg);
  if (sc.input_dim != input_dim) throw ConfigError("weights: layout dimension mismatch");
  for (int i = 0; i < sc.input_dim; ++i) sc.norm_scale[i] = rd();
  auto rmat = [&](auto& m) {
    for (long i = 0; i < m.rows(); ++i)
      for (long j = 0; j < m.cols(); ++j) m(i, j) = rd();
  };
  rmat(sc.w1);
  rmat(sc.b1);
  rmat(sc.wx);
  rmat(sc.wh);
  rmat(sc.bias);
  rmat(sc.w2);
  rmat(sc.b2);
  if (!f) throw ConfigError("weights: truncated file");
  return sc;
}

EnsembleOracle::EnsembleOracle(const net::Network& net, Ensemble ensemble, int top_k)
    : net_(net), ensemble_(std::move(ensemble)), cands_(candidate_set(net)), top_k_(top_k) {
  episode_reset();
}

void EnsembleOracle::episode_reset() {
  hidden_.clear();
  for (const auto& n : ensemble_.nets) hidden_.push_back(n.initial_hidden());
}

std::optional<IntegerAssignment> EnsembleOracle::propose(
    const StandardFormProblem& sp, const mpc::MpcState& state,
    const std::function<bool(const IntegerAssignment&)>& feasible) {
  for (size_t i = 0; i < ensemble_.nets.size(); ++i) {
    const auto& netw = ensemble_.nets[i];
    if (!(netw.layout == layout_of(net_, sp.n_steps)))
      throw std::invalid_argument("ensemble: network layout mismatch");
    const VectorXd x = encode_state(netw.layout, net_, *sp.scenario, state);
    const VectorXd scores = netw.score(x, hidden_[i]);
    std::vector<int> order(size_t(netw.candidates));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[a] < scores[b]; });
    int screened = 0;
    for (int idx : order) {
      const auto ys = cands_.decode(idx);
      if (!bounds_feasible(cands_, ys, sp)) continue;
      auto ia = head_assignment(cands_, ys, sp);
      if (feasible(ia)) return ia;
      if (++screened >= top_k_) break;
    }
  }
  return std::nullopt;
}

}  // namespace railsched::learn
