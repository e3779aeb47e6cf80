#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "tubeflow/domain.hpp"
#include "tubeflow/trajectory_io.hpp"

using namespace tubeflow;

TEST(Grid, UniformSpacing) {
  EXPECT_EQ(build_grid(10.0, 11).dx, 1.0);
  EXPECT_DOUBLE_EQ(build_grid(0.05, 101).dx, 5e-4);
}

TEST(Grid, RejectsDegenerate) {
  EXPECT_THROW(build_grid(1.0, 1), InvalidArgument);
  EXPECT_THROW(build_grid(0.0, 10), InvalidArgument);
  EXPECT_THROW(build_grid(-1.0, 10), InvalidArgument);
}

TEST(Grid, SpacingTimesIntervalsIsLength) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> len(1e-3, 1e3);
  std::uniform_int_distribution<std::size_t> pts(2, 5000);
  for (int k = 0; k < 1000; ++k) {
    const double L = len(gen);
    const auto g = build_grid(L, pts(gen));
    const double back = static_cast<double>(g.n_points - 1) * g.dx;
    EXPECT_LE(std::abs(back - L), std::nextafter(L, 2 * L) - L) << "L=" << L << " n=" << g.n_points;
  }
}

TEST(ReferenceArea, PiRSquared) {
  TubeParams unit{1.0, 1e-3, 1e6, 0.0};
  EXPECT_DOUBLE_EQ(reference_area(unit), std::numbers::pi);
  EXPECT_DOUBLE_EQ(reference_area(TubeParams{}), 7.853981633974483e-5);
}

TEST(TubeParams, Invariants) {
  EXPECT_THROW((TubeParams{0.0, 1e-3, 1e6, 0.0}.validate()), InvalidArgument);
  EXPECT_THROW((TubeParams{5e-3, 0.0, 1e6, 0.0}.validate()), InvalidArgument);
  EXPECT_THROW((TubeParams{5e-3, 1e-3, 1e6, 2e6}.validate()), InvalidArgument);
  EXPECT_NO_THROW(TubeParams{}.validate());
}

TEST(FieldState, Validate) {
  FieldState s(3);
  s.area = {1.0, 1.0, 0.0};
  EXPECT_THROW(s.validate(3), InvalidArgument);
  s.area = {1.0, 1.0, 1.0};
  EXPECT_NO_THROW(s.validate(3));
  EXPECT_THROW(s.validate(4), InvalidArgument);
  s.pressure[1] = NAN;
  EXPECT_THROW(s.validate(3), NumericalError);
}

namespace {

Trajectory random_trajectory(std::size_t steps, std::size_t nodes, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-1e4, 1e4), pos(1e-6, 1e-3);
  Trajectory t;
  t.dt = 1e-3 / 3.0;
  t.grid = build_grid(0.05, nodes);
  for (std::size_t s = 0; s < steps; ++s) {
    FieldState st(nodes);
    for (std::size_t i = 0; i < nodes; ++i) {
      st.pressure[i] = u(gen);
      st.velocity[i] = u(gen) * 1e-4;
      st.area[i] = pos(gen);
    }
    t.states.push_back(st);
  }
  return t;
}

}  // namespace

TEST(TrajectoryIo, RoundTripIsBitExact) {
  const Trajectory t = random_trajectory(3, 5, 11);
  std::stringstream ss;
  write_trajectory(t, ss);
  const Trajectory back = read_trajectory(ss);
  EXPECT_EQ(back, t);
  EXPECT_EQ(back.dt, t.dt);
}

TEST(TrajectoryIo, RowsSortedByTimeThenX) {
  std::stringstream ss;
  write_trajectory(random_trajectory(4, 6, 3), ss);
  std::string line;
  std::getline(ss, line);  // metadata
  std::getline(ss, line);
  EXPECT_EQ(line, "t,x,pressure,velocity,area");
  double pt = -1, px = -1;
  while (std::getline(ss, line)) {
    std::stringstream row(line);
    std::string a, b;
    std::getline(row, a, ',');
    std::getline(row, b, ',');
    const double t = std::stod(a), x = std::stod(b);
    EXPECT_TRUE(t > pt || (t == pt && x > px));
    pt = t;
    px = x;
  }
}

TEST(TrajectoryIo, ReadsFileWithoutMetadata) {
  std::stringstream ss("t,x,pressure,velocity,area\n0,0,1,2,3\n0,1,1,2,3\n0.5,0,4,5,6\n0.5,1,4,5,6\n");
  const Trajectory t = read_trajectory(ss);
  EXPECT_EQ(t.states.size(), 2u);
  EXPECT_EQ(t.dt, 0.5);
  EXPECT_EQ(t.grid.n_points, 2u);
  EXPECT_EQ(t.states[1].velocity[0], 5.0);
}

TEST(TrajectoryIo, HeaderOnlyIsNoDataRows) {
  std::stringstream ss("t,x,pressure,velocity,area\n");
  try {
    read_trajectory(ss);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("no data rows"), std::string::npos);
  }
}

TEST(TrajectoryIo, InconsistentNodeCountNamesLine) {
  std::stringstream ss;
  ss << "t,x,pressure,velocity,area\n";
  for (int i = 0; i < 5; ++i) ss << "0," << i << ",1,1,1\n";
  for (int i = 0; i < 4; ++i) ss << "1," << i << ",1,1,1\n";
  ss << "2,0,1,1,1\n";
  try {
    read_trajectory(ss);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_GT(e.line(), 0u);
    EXPECT_NE(std::string(e.what()).find("node count"), std::string::npos);
  }
}

TEST(TrajectoryIo, NonMonotoneTimeRejected) {
  std::stringstream ss("t,x,pressure,velocity,area\n1,0,1,1,1\n1,1,1,1,1\n0,0,1,1,1\n0,1,1,1,1\n");
  try {
    read_trajectory(ss);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
  }
}

TEST(TrajectoryIo, MalformedRowNamesLine) {
  std::stringstream ss("t,x,pressure,velocity,area\n0,0,1,abc,1\n");
  try {
    read_trajectory(ss);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(TrajectoryIo, EmptyTrajectoryRejectedOnWrite) {
  std::stringstream ss;
  EXPECT_THROW(write_trajectory(Trajectory{}, ss), InvalidArgument);
}
