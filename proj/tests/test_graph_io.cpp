#include "tvpgo/graph_io.hpp"

#include <random>
#include <sstream>

#include <doctest.h>

#include "test_support.hpp"

using namespace tvpgo;
using namespace tvpgo::test;

namespace {

InformationMatrix random_info(std::mt19937_64& rng) {
  Vector6 d;
  std::uniform_real_distribution<double> u(0.1, 100.0);
  for (int i = 0; i < 6; ++i) d(i) = u(rng);
  return InformationMatrix::from_diagonal(d);
}

PoseGraph sample_graph(std::mt19937_64& rng) {
  PoseGraph g;
  Pose cursor = random_pose(rng);
  for (int i = 0; i < 6; ++i) {
    g.add_node(GraphNode{i, cursor, 0.1 * i});
    cursor = cursor * random_pose(rng, 1.0, 0.4);
  }
  g.add_edge(PriorEdge{0, g.node(0).estimate, random_info(rng)});
  for (int i = 0; i + 1 < 6; ++i) {
    g.add_edge(OdometryEdge{i, i + 1,
                            relative_pose(g.node(i).estimate,
                                          g.node(i + 1).estimate),
                            random_info(rng)});
  }
  g.add_edge(AbsoluteLoopEdge{0, 4, random_pose(rng), random_info(rng), true});
  g.add_edge(ScaleFreeLoopEdge{1, 5, random_rotation(rng),
                               random_unit_vector(rng), random_info(rng),
                               true});
  return g;
}

}  // namespace

TEST_CASE("graph round-trips losslessly through the text format") {
  std::mt19937_64 rng(40);
  for (int trial = 0; trial < 10; ++trial) {
    const PoseGraph g = sample_graph(rng);
    std::ostringstream out;
    write_graph(out, g);
    std::istringstream in(out.str());
    const PoseGraph back = read_graph(in);

    REQUIRE(back.num_nodes() == g.num_nodes());
    REQUIRE(back.num_edges() == g.num_edges());
    for (const GraphNode& node : g.nodes()) {
      CHECK(pose_distance(back.node(node.id).estimate, node.estimate) <
            1e-12);
    }
    for (std::size_t i = 0; i < g.num_edges(); ++i) {
      const Edge& a = g.edges()[i];
      const Edge& b = back.edges()[i];
      REQUIRE(a.index() == b.index());
      std::visit(
          [&](const auto& ea) {
            using T = std::decay_t<decltype(ea)>;
            const auto& eb = std::get<T>(b);
            CHECK((ea.info.matrix() - eb.info.matrix()).norm() < 1e-12);
            if constexpr (std::is_same_v<T, PriorEdge>) {
              CHECK(ea.node == eb.node);
              CHECK(pose_distance(ea.anchor, eb.anchor) < 1e-12);
            } else if constexpr (std::is_same_v<T, ScaleFreeLoopEdge>) {
              CHECK(ea.from == eb.from);
              CHECK(ea.to == eb.to);
              CHECK((ea.direction - eb.direction).norm() < 1e-12);
              CHECK((ea.rotation.matrix() - eb.rotation.matrix()).norm() <
                    1e-12);
              CHECK(eb.robust);
            } else {
              CHECK(ea.from == eb.from);
              CHECK(ea.to == eb.to);
              CHECK(pose_distance(ea.measurement, eb.measurement) < 1e-12);
            }
          },
          a);
    }

    // Writing the re-read graph reproduces the bytes exactly.
    std::ostringstream again;
    write_graph(again, back);
    CHECK(again.str() == out.str());
  }
}

TEST_CASE("reader classifies EDGE_SE3:QUAT lines by endpoints") {
  std::mt19937_64 rng(41);
  const PoseGraph g = sample_graph(rng);
  std::ostringstream out;
  write_graph(out, g);
  std::istringstream in(out.str());
  const PoseGraph back = read_graph(in);

  int priors = 0, odometry = 0, absolute = 0, scale_free = 0;
  for (const Edge& e : back.edges()) {
    if (std::holds_alternative<PriorEdge>(e)) ++priors;
    if (std::holds_alternative<OdometryEdge>(e)) ++odometry;
    if (std::holds_alternative<AbsoluteLoopEdge>(e)) ++absolute;
    if (std::holds_alternative<ScaleFreeLoopEdge>(e)) ++scale_free;
  }
  CHECK(priors == 1);
  CHECK(odometry == 5);
  CHECK(absolute == 1);
  CHECK(scale_free == 1);
}

TEST_CASE("reader reports malformed lines") {
  {
    std::istringstream in("VERTEX_SE3:QUAT 0 1 2 3\n");
    CHECK_THROWS_AS(read_graph(in), IoError);
  }
  {
    std::istringstream in("WHAT_IS_THIS 1 2 3\n");
    CHECK_THROWS_AS(read_graph(in), IoError);
  }
  {
    std::istringstream in(
        "VERTEX_SE3:QUAT 0 0 0 0 0 0 0 1\n"
        "EDGE_SE3:QUAT 0 0 0 0 0 0 0 0 1\n");  // missing info entries
    CHECK_THROWS_AS(read_graph(in), IoError);
  }
  {
    // Comment lines and blank lines are skipped.
    std::istringstream in(
        "# a comment\n"
        "\n"
        "VERTEX_SE3:QUAT 0 0 0 0 0 0 0 1\n");
    CHECK(read_graph(in).num_nodes() == 1);
  }
}
