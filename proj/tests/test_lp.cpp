#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "railsched/lp.hpp"

using namespace railsched;
using namespace railsched::mip;

namespace {

// Independent dense tableau simplex for min c'x s.t. Ax <= b (b >= 0), x >= 0.
// Slack basis is feasible, so no phase 1 is needed.
struct TableauOut {
  bool optimal = false;
  double obj = 0;
};

TableauOut tableau_solve(MatrixXd A, VectorXd b, VectorXd c) {
  const int m = int(A.rows()), n = int(A.cols());
  MatrixXd T(m + 1, n + m + 1);
  T.setZero();
  T.block(0, 0, m, n) = A;
  T.block(0, n, m, m) = MatrixXd::Identity(m, m);
  T.col(n + m).head(m) = b;
  T.row(m).head(n) = c.transpose();
  for (int iter = 0; iter < 20000; ++iter) {
    int enter = -1;
    double best = -1e-9;
    for (int j = 0; j < n + m; ++j)
      if (T(m, j) < best) {
        best = T(m, j);
        enter = j;
      }
    if (enter < 0) return {true, -T(m, n + m)};
    int leave = -1;
    double ratio = 0;
    for (int i = 0; i < m; ++i) {
      if (T(i, enter) <= 1e-9) continue;
      const double r = T(i, n + m) / T(i, enter);
      if (leave < 0 || r < ratio - 1e-12) {
        leave = i;
        ratio = r;
      }
    }
    if (leave < 0) return {false, 0};  // unbounded
    T.row(leave) /= T(leave, enter);
    for (int i = 0; i <= m; ++i) {
      if (i == leave) continue;
      T.row(i) -= T(i, enter) * T.row(leave);
    }
  }
  return {false, 0};
}

LpProblem boxed(const MatrixXd& A, VectorXd b, VectorXd c, double box) {
  LpProblem lp;
  lp.set_dense(A);
  lp.c = std::move(c);
  const int n = lp.cols(), m = lp.rows();
  lp.lo = VectorXd::Zero(n);
  lp.hi = VectorXd::Constant(n, box);
  lp.row_lo = VectorXd::Constant(m, -kInf);
  lp.row_hi = b;
  return lp;
}

struct Rng {
  std::uint64_t s;
  double u() {
    s = splitmix64(s);
    return double(s >> 11) * 0x1.0p-53;
  }
  double n() { return u() + u() + u() + u() - 2.0; }  // light-tailed, mean 0
};

}  // namespace

TEST_CASE("one-variable problems") {
  LpProblem lp;
  lp.set_dense(MatrixXd::Ones(1, 1));
  lp.c = VectorXd::Constant(1, -1);
  lp.lo = VectorXd::Zero(1);
  lp.hi = VectorXd::Constant(1, kInf);
  lp.row_lo = VectorXd::Constant(1, -kInf);
  lp.row_hi = VectorXd::Constant(1, 1.0);
  auto r = solve_lp(lp);
  REQUIRE(r.status == LpStatus::Optimal);
  CHECK(r.x[0] == doctest::Approx(1.0));
  CHECK(r.objective == doctest::Approx(-1.0));

  // x <= 0 and x >= 1 cannot hold together.
  lp.row_lo[0] = 1.0;
  lp.row_hi[0] = kInf;
  lp.hi[0] = 0.0;
  auto r2 = solve_lp(lp);
  CHECK(r2.status == LpStatus::Infeasible);

  // Unbounded: min -x with no cap.
  LpProblem lu;
  lu.set_dense(MatrixXd::Ones(1, 1));
  lu.c = VectorXd::Constant(1, -1);
  lu.lo = VectorXd::Zero(1);
  lu.hi = VectorXd::Constant(1, kInf);
  lu.row_lo = VectorXd::Constant(1, 0.0);
  lu.row_hi = VectorXd::Constant(1, kInf);
  CHECK(solve_lp(lu).status == LpStatus::Unbounded);
}

TEST_CASE("equality and ranged rows") {
  // min x - y s.t. x + y = 1, 0 <= x,y <= 1  ->  x=0, y=1.
  LpProblem lp;
  lp.set_dense(MatrixXd::Ones(1, 2));
  lp.c = VectorXd(2);
  lp.c << 1, -1;
  lp.lo = VectorXd::Zero(2);
  lp.hi = VectorXd::Ones(2);
  lp.row_lo = VectorXd::Ones(1);
  lp.row_hi = VectorXd::Ones(1);
  auto r = solve_lp(lp);
  REQUIRE(r.status == LpStatus::Optimal);
  CHECK(r.objective == doctest::Approx(-1.0));

  // Ranged: 1 <= x + y <= 2, min x + y -> 1.
  lp.c << 1, 1;
  lp.row_hi[0] = 2.0;
  lp.hi = VectorXd::Constant(2, 5.0);
  r = solve_lp(lp);
  REQUIRE(r.status == LpStatus::Optimal);
  CHECK(r.objective == doctest::Approx(1.0));
  CHECK(lp_violation(lp, r.x) < 1e-7);
}

TEST_CASE("random boxed instances match the tableau oracle") {
  Rng rng{2024};
  for (int trial = 0; trial < 60; ++trial) {
    const int m = 20, n = 30;
    MatrixXd A(m, n);
    VectorXd b(m), c(n);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) A(i, j) = rng.n();
    for (int i = 0; i < m; ++i) b[i] = 0.5 + 4.5 * rng.u();
    for (int j = 0; j < n; ++j) c[j] = rng.n();

    // Mirror the box as explicit rows for the oracle.
    const double box = 10.0;
    MatrixXd Ao(m + n, n);
    Ao.topRows(m) = A;
    Ao.bottomRows(n) = MatrixXd::Identity(n, n);
    VectorXd bo(m + n);
    bo.head(m) = b;
    bo.tail(n).setConstant(box);

    auto want = tableau_solve(Ao, bo, c);
    REQUIRE(want.optimal);
    auto got = solve_lp(boxed(A, b, c, box));
    REQUIRE(got.status == LpStatus::Optimal);
    CHECK(got.objective == doctest::Approx(want.obj).epsilon(1e-8));
    CHECK(lp_violation(boxed(A, b, c, box), got.x) < 1e-6);
  }
}

TEST_CASE("warm start re-solve is cheap and identical") {
  Rng rng{77};
  const int m = 40, n = 60;
  MatrixXd A(m, n);
  VectorXd b(m), c(n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = rng.n();
  for (int i = 0; i < m; ++i) b[i] = 1.0 + 4.0 * rng.u();
  for (int j = 0; j < n; ++j) c[j] = rng.n();
  LpProblem lp = boxed(A, b, c, 8.0);

  auto cold = solve_lp(lp);
  REQUIRE(cold.status == LpStatus::Optimal);
  auto warm = solve_lp(lp, {}, &cold.basis);
  REQUIRE(warm.status == LpStatus::Optimal);
  CHECK(warm.objective == doctest::Approx(cold.objective).epsilon(1e-10));
  CHECK(warm.iterations <= 2);

  // Nudge one bound; the warm solve should stay far below the cold count.
  lp.hi[0] = 0.5;
  auto cold2 = solve_lp(lp);
  auto warm2 = solve_lp(lp, {}, &cold.basis);
  REQUIRE(cold2.status == LpStatus::Optimal);
  REQUIRE(warm2.status == LpStatus::Optimal);
  CHECK(warm2.objective == doctest::Approx(cold2.objective).epsilon(1e-8));
  CHECK(warm2.iterations <= cold2.iterations);
}

TEST_CASE("determinism: identical inputs give identical pivots") {
  Rng rng{31};
  const int m = 25, n = 35;
  MatrixXd A(m, n);
  VectorXd b(m), c(n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = rng.n();
  for (int i = 0; i < m; ++i) b[i] = 0.7 + 3.0 * rng.u();
  for (int j = 0; j < n; ++j) c[j] = rng.n();
  LpProblem lp = boxed(A, b, c, 6.0);
  auto r1 = solve_lp(lp);
  auto r2 = solve_lp(lp);
  CHECK(r1.iterations == r2.iterations);
  CHECK(r1.objective == r2.objective);  // bitwise
  CHECK(r1.basis.basic == r2.basis.basic);
}
