#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <vector>

#include "tubeflow/app/checks.hpp"
#include "tubeflow/coupling/acceleration.hpp"
#include "tubeflow/coupling/least_squares.hpp"
#include "tubeflow/coupling/time_window.hpp"
#include "tubeflow/simulation.hpp"

using namespace tubeflow;
using namespace tubeflow::coupling;

namespace {

/// Participant that applies a fixed affine map y = M x + c.
class AffineParticipant : public Participant {
 public:
  AffineParticipant(Eigen::MatrixXd M, Eigen::VectorXd c) : M_(std::move(M)), c_(std::move(c)) {}
  std::size_t interface_size() const override { return static_cast<std::size_t>(c_.size()); }
  std::vector<double> solve(std::span<const double> x, const WindowContext&) override {
    ++calls;
    const Eigen::VectorXd y = M_ * Eigen::Map<const Eigen::VectorXd>(x.data(), c_.size()) + c_;
    return {y.data(), y.data() + y.size()};
  }
  int calls = 0;

 private:
  Eigen::MatrixXd M_;
  Eigen::VectorXd c_;
};

class ConstantParticipant : public Participant {
 public:
  explicit ConstantParticipant(std::vector<double> v) : v_(std::move(v)) {}
  std::size_t interface_size() const override { return v_.size(); }
  std::vector<double> solve(std::span<const double>, const WindowContext&) override { return v_; }

 private:
  std::vector<double> v_;
};

AffineParticipant identity(std::size_t n) {
  return {Eigen::MatrixXd::Identity(n, n), Eigen::VectorXd::Zero(n)};
}

}  // namespace

TEST(ConvergenceMeasure, Examples) {
  const std::vector<double> zero{0.0, 0.0}, one{1.0, 0.0};
  EXPECT_EQ(convergence_measure(zero, one, 1e-6).value, 0.0);
  EXPECT_TRUE(convergence_measure(zero, one, 1e-6).converged);
  const std::vector<double> small{1e-7, 0.0};
  EXPECT_TRUE(convergence_measure(small, one, 1e-6).converged);
  const std::vector<double> tiny{1e-8, 1e-8};
  EXPECT_DOUBLE_EQ(convergence_measure(tiny, zero, 1e-9).value, std::sqrt(2.0) * 1e-8);
  EXPECT_THROW(convergence_measure(tiny, std::vector<double>{1.0}, 1.0), InvalidArgument);
}

TEST(ConstantRelaxation, Examples) {
  const std::vector<double> xk{0.0}, xt{2.0};
  EXPECT_EQ(constant_relaxation(xk, xt, 1.0), xt);
  EXPECT_EQ(constant_relaxation(xk, xt, 0.5), std::vector<double>{1.0});
  EXPECT_EQ(constant_relaxation(xt, xt, 0.3), xt);
  EXPECT_THROW(constant_relaxation(xk, xt, 0.0), InvalidArgument);
  EXPECT_THROW(constant_relaxation(xk, std::vector<double>{1.0, 2.0}, 0.5), InvalidArgument);
}

TEST(IqnIls, ScalarTrace) {
  // H(x) = 0.5 x + 1, fixed point 2.
  CouplingConfig cfg;
  cfg.omega0 = 0.5;
  Accelerator acc(cfg);
  auto H = [](double x) { return 0.5 * x + 1.0; };
  std::vector<double> x{0.0};
  x = acc.next(x, std::vector<double>{H(x[0])});
  EXPECT_EQ(x[0], 0.5);
  EXPECT_EQ(acc.history().columns(), 0u);
  x = acc.next(x, std::vector<double>{H(x[0])});
  ASSERT_EQ(acc.history().columns(), 1u);
  EXPECT_EQ(acc.history().V[0][0], 0.25);
  EXPECT_EQ(acc.history().W[0][0], -0.25);
  EXPECT_EQ(x[0], 2.0);
}

TEST(IqnIls, ZeroResidualReturnsIterateUnchanged) {
  CouplingConfig cfg;
  IqnHistory h;
  const std::vector<double> x{1.0, 2.0};
  EXPECT_EQ(iqn_ils_step(h, x, x, cfg), x);
  EXPECT_EQ(h.columns(), 0u);
  EXPECT_FALSE(h.last_residual.has_value());
}

TEST(IqnIls, NonFiniteInputRejected) {
  CouplingConfig cfg;
  IqnHistory h;
  EXPECT_THROW(iqn_ils_step(h, std::vector<double>{NAN}, std::vector<double>{1.0}, cfg), NumericalError);
}

TEST(LeastSquares, DuplicateZeroColumnFiltered) {
  const std::vector<std::vector<double>> two{{1.0, 0.0, 1.0}, {0.0, 2.0, 1.0}};
  auto three = two;
  three.push_back({0.0, 0.0, 0.0});
  const std::vector<double> b{1.0, 2.0, 3.0};
  const auto a = filtered_least_squares(two, b, 1e-7);
  const auto c = filtered_least_squares(three, b, 1e-7);
  EXPECT_EQ(c.dropped, std::vector<std::size_t>{2});
  EXPECT_EQ(c.rank, 2u);
  EXPECT_EQ(c.lambda[0], a.lambda[0]);
  EXPECT_EQ(c.lambda[1], a.lambda[1]);
  EXPECT_EQ(c.lambda[2], 0.0);
}

TEST(LeastSquares, MatchesNormalEquations) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd V(8, 3);
  Eigen::VectorXd b(8);
  for (Eigen::Index i = 0; i < 8; ++i) {
    b(i) = nd(gen);
    for (Eigen::Index j = 0; j < 3; ++j) V(i, j) = nd(gen);
  }
  std::vector<std::vector<double>> cols(3, std::vector<double>(8));
  for (Eigen::Index j = 0; j < 3; ++j)
    for (Eigen::Index i = 0; i < 8; ++i) cols[j][i] = V(i, j);
  const std::vector<double> bv(b.data(), b.data() + 8);
  const auto ls = filtered_least_squares(cols, bv, 1e-7);
  const Eigen::VectorXd ref = (V.transpose() * V).ldlt().solve(V.transpose() * b);
  for (Eigen::Index j = 0; j < 3; ++j) EXPECT_NEAR(ls.lambda[j], ref(j), 1e-12);
}

TEST(IqnIls, AffineMapsSolvedWithinDimensionPlusOne) {
  for (std::size_t d = 1; d <= 3; ++d) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto res = app::iqn_affine(d, seed * 100 + d);
      EXPECT_LE(res.updates, static_cast<int>(d) + 1) << "d=" << d << " seed=" << seed;
      EXPECT_LE(res.error, 1e-12) << "d=" << d << " seed=" << seed;
    }
  }
}

TEST(IqnIls, ColumnCapEvictsOldest) {
  CouplingConfig cfg;
  cfg.max_columns = 2;
  cfg.omega0 = 0.5;
  Accelerator acc(cfg);
  std::vector<double> x{0.0, 0.0, 0.0, 0.0};
  for (int k = 0; k < 6; ++k) {
    std::vector<double> xt(4);
    for (std::size_t i = 0; i < 4; ++i) xt[i] = std::sin(x[i] + static_cast<double>(i)) + 0.3 * x[(i + 1) % 4];
    x = acc.next(x, xt);
    EXPECT_LE(acc.history().columns(), 2u);
  }
}

TEST(TimeWindow, VacuousToleranceTakesOneIteration) {
  CouplingConfig cfg;
  cfg.tol = 1e30;
  auto f = identity(3);
  AffineParticipant s(Eigen::MatrixXd::Identity(3, 3) * 0.5, Eigen::VectorXd::Ones(3));
  const std::vector<double> a0{1.0, 1.0, 1.0};
  const auto res = run_time_window(f, s, a0, WindowContext{}, cfg);
  EXPECT_EQ(res.iterations, 1);
  EXPECT_EQ(res.area, a0);
}

TEST(TimeWindow, ConstantSolidConvergesInTwoIterations) {
  // The first relaxed update lands on the constant only when omega0 = 1.
  CouplingConfig cfg;
  cfg.omega0 = 1.0;
  auto f = identity(4);
  ConstantParticipant s({2.0, 3.0, 4.0, 5.0});
  const auto res = run_time_window(f, s, std::vector<double>(4, 1.0), WindowContext{}, cfg);
  EXPECT_EQ(res.iterations, 2);
  EXPECT_EQ(res.residuals.back(), 0.0);
  EXPECT_EQ(res.area, (std::vector<double>{2.0, 3.0, 4.0, 5.0}));
}

TEST(TimeWindow, DivergenceCarriesResidualHistory) {
  CouplingConfig cfg;
  cfg.max_iters = 5;
  cfg.accelerator = AcceleratorKind::constant_relaxation;
  cfg.omega0 = 1.0;
  auto f = identity(2);
  AffineParticipant s(Eigen::MatrixXd::Identity(2, 2) * -3.0, Eigen::VectorXd::Ones(2));
  try {
    run_time_window(f, s, std::vector<double>{1.0, 1.0}, WindowContext{}, cfg);
    FAIL() << "expected CouplingDivergence";
  } catch (const CouplingDivergence& e) {
    EXPECT_EQ(e.residuals().size(), 5u);
  }
}

TEST(TimeWindow, InterfaceLengthMismatchRejected) {
  CouplingConfig cfg;
  auto f = identity(3);
  auto s = identity(2);
  EXPECT_THROW(run_time_window(f, s, std::vector<double>(3, 1.0), WindowContext{}, cfg), InvalidArgument);
}

TEST(TimeWindow, HistoryResetBetweenWindows) {
  CouplingConfig cfg;
  cfg.tol = 1e-12;
  Accelerator acc(cfg);
  auto f = identity(3);
  AffineParticipant s(Eigen::MatrixXd::Identity(3, 3) * 0.5, Eigen::VectorXd::Ones(3));
  run_time_window(f, s, std::vector<double>(3, 0.0), WindowContext{}, acc);
  EXPECT_EQ(acc.history().columns(), 0u);
  EXPECT_FALSE(acc.history().last_residual.has_value());

  cfg.reuse_windows = 1;
  Accelerator keep(cfg);
  run_time_window(f, s, std::vector<double>(3, 0.0), WindowContext{}, keep);
  ASSERT_GT(keep.history().columns(), 0u);
  for (std::size_t age : keep.history().window_age) EXPECT_EQ(age, 1u);
}

TEST(TimeWindow, ConvergedPairIsFixedPoint) {
  SimulationConfig sim;
  FluidParticipant fluid(sim.grid, sim.fluid, sim.solver);
  StructureParticipant solid(sim.grid.n_points, sim.tube);
  const std::vector<FieldState> history{initial_state(sim)};
  const WindowContext ctx{1, sim.dt, sim.dt, history};
  const auto res = run_time_window(fluid, solid, history.back().area, ctx, sim.coupling);
  // Re-invoking both participants on the converged area moves it by at most tol.
  const auto a2 = solid.solve(fluid.solve(res.area, ctx), ctx);
  std::vector<double> diff(a2.size());
  for (std::size_t i = 0; i < a2.size(); ++i) diff[i] = a2[i] - res.area[i];
  EXPECT_LE(convergence_measure(diff, a2, sim.coupling.tol).value, sim.coupling.tol);
}

TEST(TimeWindow, AcceleratorDoesNotChangeTheAnswer) {
  SimulationConfig sim;
  sim.steps = 5;
  const auto iqn = simulate(sim);
  SimulationConfig relaxed = sim;
  relaxed.coupling.accelerator = AcceleratorKind::constant_relaxation;
  relaxed.coupling.omega0 = 0.2;
  relaxed.coupling.max_iters = 2000;
  const auto rel = simulate(relaxed);
  for (std::size_t n = 1; n < iqn.trajectory.states.size(); ++n) {
    const auto& a = iqn.trajectory.states[n].area;
    const auto& b = rel.trajectory.states[n].area;
    std::vector<double> diff(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
    EXPECT_LE(convergence_measure(diff, a, 1.0).value, 10 * sim.coupling.tol) << "window " << n;
  }
}

TEST(Simulation, BenchmarkWindowsConvergeWithIqn) {
  SimulationConfig sim;
  sim.steps = 20;
  const auto res = simulate(sim);
  ASSERT_EQ(res.iterations.size(), 20u);
  for (int it : res.iterations) EXPECT_LT(it, sim.coupling.max_iters);
}
